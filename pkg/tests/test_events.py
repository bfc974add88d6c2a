import json

import pytest

from openloop import events as ev


def emit_some(log):
    log.emit(ev.ITER_START, {"iteration": 1})
    log.emit(ev.FM_REQUEST, {"iteration": 1, "kind": "TaskGen"})
    log.emit(ev.FM_RESPONSE, {"iteration": 1, "kind": "TaskGen", "ok": True,
                              "raw_text": "x", "latency_s": 0.5, "attempt": 1})
    log.emit(ev.TASK_ARCHIVED, {"iteration": 1, "record": _record_dict(0)})


def _record_dict(i, generation=1):
    return {
        "id": i,
        "title": f"t{i}",
        "description": f"t{i}\nbody",
        "env_code": "class Env: pass",
        "status": "Learned",
        "generation": generation,
        "parent_ids": [],
        "codegen_repairs_used": 0,
        "reflection_rounds_used": 0,
        "warm_start_from": None,
        "moi_verdict": True,
        "policy_artifact": "p",
        "created_at": 123.0,
        "embedding": [1.0] + [0.0] * 7,
    }


class TestEventLog:
    def test_seq_is_gapless(self, tmp_path):
        with ev.EventLog(tmp_path / "e.jsonl") as log:
            emit_some(log)
        events = ev.read_events(tmp_path / "e.jsonl")
        assert [e["seq"] for e in events] == [0, 1, 2, 3]

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            ev.EventLog().emit("Bogus", {})

    def test_round_trip(self, tmp_path):
        path = tmp_path / "e.jsonl"
        with ev.EventLog(path) as log:
            emit_some(log)
        events = ev.read_events(path)
        assert events[2]["payload"]["raw_text"] == "x"


class TestReadEvents:
    def test_torn_tail_dropped(self, tmp_path):
        path = tmp_path / "e.jsonl"
        with ev.EventLog(path) as log:
            emit_some(log)
        data = path.read_bytes()
        path.write_bytes(data[:-25])  # cut mid final line
        events = ev.read_events(path)
        assert len(events) == 3

    def test_interior_corruption_reports_first_bad_seq(self, tmp_path):
        path = tmp_path / "e.jsonl"
        with ev.EventLog(path) as log:
            emit_some(log)
        lines = path.read_text().splitlines()
        lines[1] = "garbage {"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ev.CorruptLogError) as err:
            ev.read_events(path)
        assert err.value.first_bad_seq == 1

    def test_seq_gap_is_corruption(self, tmp_path):
        path = tmp_path / "e.jsonl"
        with ev.EventLog(path) as log:
            emit_some(log)
        lines = path.read_text().splitlines()
        del lines[1]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ev.CorruptLogError):
            ev.read_events(path)


class TestCanonical:
    def test_strips_wall_clock_fields(self):
        log = ev.EventLog()
        emit_some(log)
        lines = ev.canonical_lines(log.events)
        joined = "\n".join(lines)
        assert '"ts"' not in joined
        assert "latency_s" not in joined
        assert "created_at" not in joined
        # everything else survives
        assert "raw_text" in joined
        for line in lines:
            json.loads(line)

    def test_identical_up_to_timing(self):
        log_a, log_b = ev.EventLog(), ev.EventLog()
        emit_some(log_a)
        emit_some(log_b)
        assert ev.canonical_lines(log_a.events) == ev.canonical_lines(log_b.events)


class TestReplay:
    def test_discards_partial_tail(self):
        log = ev.EventLog()
        emit_some(log)  # ends at a commit point
        log.emit(ev.ITER_START, {"iteration": 2})
        log.emit(ev.FM_REQUEST, {"iteration": 2, "kind": "TaskGen"})
        state = ev.replay(log.events)
        assert len(state.kept) == 4
        assert state.last_iteration == 1
        assert len(state.records) == 1

    def test_counts_cursors_only_in_kept_prefix(self):
        log = ev.EventLog()
        emit_some(log)
        log.emit(ev.ITER_START, {"iteration": 2})
        log.emit(ev.FM_RESPONSE, {"iteration": 2, "kind": "TaskGen", "ok": True})
        log.emit(ev.LEARNER_RESULT, {"iteration": 2, "success": True})
        state = ev.replay(log.events)
        assert state.fm_response_kinds == ["TaskGen"]
        assert state.learner_calls == 0

    def test_aborted_iteration_is_a_commit(self):
        log = ev.EventLog()
        emit_some(log)
        log.emit(ev.ITER_START, {"iteration": 2})
        log.emit(ev.ITER_ABORTED, {"iteration": 2, "reason": "x"})
        state = ev.replay(log.events)
        assert state.last_iteration == 2
        assert len(state.kept) == 6

    def test_seed_records_counted(self):
        log = ev.EventLog()
        log.emit(ev.TASK_ARCHIVED, {"iteration": 0, "record": _record_dict(0, generation=0)})
        state = ev.replay(log.events)
        assert state.seeds_archived == 1


def test_truncate_log(tmp_path):
    path = tmp_path / "e.jsonl"
    with ev.EventLog(path) as log:
        emit_some(log)
    ev.truncate_log(path, 2)
    assert len(ev.read_events(path)) == 2


def test_raw_text_survives_log_round_trip_byte_exact(tmp_path):
    weird = "emoji \U0001f916 newline\n tab\t null-ish \\x00 quote \" backslash \\ é中文"
    path = tmp_path / "e.jsonl"
    with ev.EventLog(path) as log:
        log.emit(ev.FM_RESPONSE, {"iteration": 1, "kind": "TaskGen", "ok": True,
                                  "raw_text": weird, "attempt": 1})
    events = ev.read_events(path)
    assert events[0]["payload"]["raw_text"] == weird
