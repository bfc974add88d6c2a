"""Acceptance suite: one test per release criterion.

Each test prints a PASS line straight to the terminal when its criterion
holds; a failing criterion shows up as a normal pytest failure.
"""
import math
import random
import shutil
import time

import numpy as np
import pytest

from openloop import events as ev
from openloop.config import from_dict
from openloop.engine import resume_run, start_run
from openloop.learners import SkillModelLearner
from openloop.metrics import (
    annecs,
    annecs_omni,
    cell_coverage,
    export_graph,
    pca_2d,
    percent_learned,
    trace_from_events,
)
from openloop.sandbox import ScriptedSandbox
from openloop.store import Status, TaskRecord, TaskStore

import helpers
from helpers import (
    VALID_ENV_CODE,
    envgen_reply,
    make_engine,
    moi_reply,
    reflect_reply,
    script_for,
    taskgen_reply,
    write_script_dir,
)
from test_metrics import (
    oracle_annecs,
    oracle_annecs_omni,
    oracle_binning,
    oracle_percent_learned,
    random_trace,
)


def report(name: str) -> None:
    helpers.ACCEPTANCE_RESULTS.append(f"PASS: {name}")


def unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


class TestRetrievalCorrectness:
    def test_brute_force_equivalence_on_thousand_vectors(self):
        dim = 64
        rng = np.random.default_rng(2024)
        store = TaskStore(dim=dim)
        records = []
        for i in range(1000):
            status = (Status.LEARNED, Status.FAILED, Status.SEED)[i % 3]
            record = TaskRecord(
                id=i, description=f"t{i}", env_code="c", status=status,
                generation=0, embedding=unit(rng, dim),
            )
            store.insert(record)
            records.append(record)

        def oracle(query):
            scored = sorted(
                records,
                key=lambda r: (-math.fsum(float(a) * float(b)
                                          for a, b in zip(r.embedding, query)), r.id),
            )
            return [r.id for r in scored[:10]]

        started = time.monotonic()
        for _ in range(100):
            query = unit(rng, dim)
            got = [r.id for r in store.retrieve_similar(query, 10)]
            assert got == oracle(query)
        elapsed = time.monotonic() - started
        assert elapsed < 5.0, f"retrieval check took {elapsed:.2f}s"
        report(f"retrieval matches brute-force sort on 100 queries x 1000 vectors "
               f"({elapsed:.2f}s < 5s)")


class TestLoopBudgets:
    def test_envgen_completions_and_codegen_failed_boundary(self, tmp_path):
        for n_failures in range(8):
            entries = [("TaskGen", taskgen_reply("Budget probe."))]
            entries.append(("EnvGen", envgen_reply(VALID_ENV_CODE)))
            entries.extend(
                ("EnvReflect", reflect_reply(VALID_ENV_CODE + f"\n# fix {i}\n"))
                for i in range(min(n_failures, 5))
            )
            entries.append(("MoI", moi_reply(True)))
            engine = make_engine(tmp_path, entries, name=f"budget{n_failures}",
                                 sandbox=ScriptedSandbox.failing_compiles(n_failures))
            engine.run_iteration()
            env_family = [
                e for e in engine.log.events
                if e["kind"] == ev.FM_REQUEST
                and e["payload"]["kind"] in ("EnvGen", "EnvReflect")
            ]
            assert len(env_family) == min(n_failures, 5) + 1, n_failures
            status = engine.store.get(3).status
            if n_failures >= 5:
                assert status is Status.CODEGEN_FAILED, n_failures
            else:
                assert status is not Status.CODEGEN_FAILED, n_failures
        report("codegen budget: min(n,5)+1 completions, CodegenFailed iff n >= 5")

    def test_exactly_one_reflection_round_on_learner_failure(self, tmp_path):
        entries = [
            ("TaskGen", taskgen_reply("Reflection probe.")),
            ("EnvGen", envgen_reply(VALID_ENV_CODE)),
            ("MoI", moi_reply(True)),
            ("TaskReflect", reflect_reply(VALID_ENV_CODE + "\n# easier\n")),
        ]
        learner = SkillModelLearner(script=[True, True, True, False, False])
        engine = make_engine(tmp_path, entries, learner=learner, name="reflect")
        engine.run_iteration()
        record = engine.store.get(3)
        assert record.status is Status.FAILED
        assert record.reflection_rounds_used == 1
        reflects = [e for e in engine.log.events
                    if e["kind"] == ev.FM_REQUEST and e["payload"]["kind"] == "TaskReflect"]
        assert len(reflects) == 1
        trains = [e for e in engine.log.events
                  if e["kind"] == ev.LEARNER_RESULT and e["payload"]["iteration"] == 1]
        assert len(trains) == 2
        report("failed learner gets exactly 1 reflection round before Failed")


class TestSimulatedLongRun:
    def test_two_hundred_iterations(self, tmp_path):
        started = time.monotonic()
        engine = make_engine(tmp_path, script_for(200), name="long")
        summary = engine.run(200)
        elapsed = time.monotonic() - started
        assert elapsed < 60.0, f"200 iterations took {elapsed:.1f}s"
        assert summary["learned"] == 200
        assert summary["failed"] == summary["aborted"] == 0
        assert summary["codegen_failed"] == 0

        records = engine.store.records()
        assert len(records) == 203

        context_by_iteration = {
            e["payload"]["iteration"]: set(e["payload"]["context_ids"])
            for e in engine.log.events
            if e["kind"] == ev.FM_REQUEST and e["payload"]["kind"] == "TaskGen"
        }
        for record in records:
            if record.generation == 0:
                continue
            assert set(record.parent_ids) <= context_by_iteration[record.generation]
            assert record.parent_ids, "non-seed node without parents"

        graph = export_graph(records, closest_parent_only=True)
        in_degree = {node["id"]: 0 for node in graph["nodes"]}
        for edge in graph["edges"]:
            in_degree[edge["target"]] += 1
        seeds = {n["id"] for n in graph["nodes"] if n["generation"] == 0}
        assert all(in_degree[s] == 0 for s in seeds)
        non_seeds = [n["id"] for n in graph["nodes"] if n["generation"] > 0]
        assert all(in_degree[n] == 1 for n in non_seeds)
        report(f"simulated 200-iteration run: all gated tasks Learned, lineage graph "
               f"well-formed ({elapsed:.1f}s < 60s)")


class TestMetricsOracles:
    def test_progress_series_match_independent_oracles(self):
        rng = random.Random(99)
        for _ in range(100):
            trace = random_trace(rng, rng.randrange(0, 80))
            assert annecs(trace) == oracle_annecs(trace)
            assert annecs_omni(trace) == oracle_annecs_omni(trace)
            assert percent_learned(trace) == oracle_percent_learned(trace)
            a, o = annecs(trace), annecs_omni(trace)
            assert all(x <= y for x, y in zip(o, a))
        # equality when every verdict is true
        for _ in range(20):
            trace = [
                t for t in random_trace(rng, 50)
            ]
            forced = [
                type(t)(t.iteration, t.task_id, t.status, True, t.eventually_solved)
                for t in trace
            ]
            assert annecs_omni(forced) == annecs(forced)
        report("annecs / annecs_omni / percent_learned match prefix-sum oracles on "
               "100 random traces; annecs_omni <= annecs with equality when all "
               "verdicts true")

    def test_coverage_matches_brute_force_binning_at_all_levels(self):
        rng = np.random.default_rng(7)
        archives = [
            [rng.uniform(-3, 3, size=2) for _ in range(80)],
            [rng.uniform(-3, 3, size=2) for _ in range(50)],
            [rng.uniform(-1, 1, size=2) for _ in range(30)],
        ]
        union = np.vstack([np.stack(a) for a in archives])
        coords = pca_2d(union).coords
        bounds = (coords[:, 0].min(), coords[:, 0].max(),
                  coords[:, 1].min(), coords[:, 1].max())
        sizes = [len(a) for a in archives]
        for level in (10, 20, 30, 40, 50):
            counts = cell_coverage(archives, level)
            offset = 0
            for size, count in zip(sizes, counts):
                expected = len(oracle_binning(coords[offset:offset + size], bounds, level))
                assert count == expected, level
                offset += size
        report("cell_coverage matches brute-force binning at levels 10/20/30/40/50")


class TestAblationBehavior:
    def test_no_archive_prompts_carry_only_seeds(self, tmp_path):
        config = from_dict({"ablation": {"no_archive": True}})
        engine = make_engine(tmp_path, script_for(10), config=config, name="noarch")
        engine.run(10)
        seed_ids = {r.id for r in engine.store.by_status(Status.SEED)}
        generated = [r for r in engine.store.records() if r.generation > 0]
        for event in engine.log.events:
            if event["kind"] == ev.FM_REQUEST and event["payload"]["kind"] == "TaskGen":
                assert set(event["payload"]["context_ids"]) <= seed_ids
                for record in generated:
                    assert record.description not in event["payload"]["user_text"]
        report("no_archive: every rendered prompt draws on seed tasks only")

    def test_no_interestingness_runs_zero_moi_completions(self, tmp_path):
        config = from_dict({"ablation": {"no_interestingness": True}})
        entries = []
        for i in range(1, 51):
            entries.append(("TaskGen", taskgen_reply(f"Control task {i}.")))
            entries.append(("EnvGen", envgen_reply(VALID_ENV_CODE + f"\n# {i}\n")))
        engine = make_engine(tmp_path, entries, config=config, name="nomoi")
        summary = engine.run(50)
        assert summary["learned"] == 50
        moi_calls = [e for e in engine.log.events
                     if e["kind"] in (ev.FM_REQUEST, ev.FM_RESPONSE)
                     and e["payload"].get("kind") == "MoI"]
        assert moi_calls == []
        report("no_interestingness: zero MoI completions over a 50-iteration run")

    def test_warm_start_beats_from_scratch_directionally(self, tmp_path):
        def run_variant(name, warm_start):
            config = from_dict({
                "reflection_max": 0,
                "learner": {"kind": "skill_model", "p_warm": 0.8, "p_cold": 0.3,
                            "warm_start": warm_start},
            })
            engine = make_engine(
                tmp_path, script_for(100), config=config, name=name,
                learner=SkillModelLearner(p_warm=0.8, p_cold=0.3),
            )
            engine.run(100)
            trace = trace_from_events(engine.log.events)
            series = percent_learned(trace)
            assert len(series) == 100
            return series[-1]

        warm_final = run_variant("warm", True)
        cold_final = run_variant("cold", False)
        assert warm_final > cold_final, (warm_final, cold_final)
        report(f"warm-start percent_learned {warm_final:.2f} beats from-scratch "
               f"{cold_final:.2f} over 100 tasks")


class TestDeterminismAndResume:
    def _config(self, script_dir, base):
        return from_dict({
            "fm": {"backend": "scripted", "script_dir": str(script_dir)},
            "learner": {"kind": "skill_model", "p_warm": 0.9, "p_cold": 0.6},
            "sandbox": {"kind": "syntax"},
        })

    def _script(self, tmp_path):
        from test_resume import mixed_script

        return write_script_dir(tmp_path / "script", mixed_script(4))

    def test_canonical_logs_byte_identical(self, tmp_path):
        script = self._script(tmp_path)
        config = self._config(script, tmp_path)
        for name in ("a", "b"):
            engine = start_run(config, tmp_path / name)
            engine.run(7)
            engine.log.close()
        text_a = "\n".join(ev.canonical_lines(ev.read_events(tmp_path / "a" / "events.jsonl")))
        text_b = "\n".join(ev.canonical_lines(ev.read_events(tmp_path / "b" / "events.jsonl")))
        assert text_a.encode() == text_b.encode()
        report("two identical runs produce byte-identical canonical event logs")

    def test_ten_random_kill_points_resume_to_identical_archive(self, tmp_path):
        script = self._script(tmp_path)
        config = self._config(script, tmp_path)
        reference = start_run(config, tmp_path / "ref")
        reference.run(7)
        reference.log.close()

        def fingerprint(run_dir):
            out = []
            for event in ev.read_events(run_dir / "events.jsonl"):
                if event["kind"] == ev.TASK_ARCHIVED:
                    record = dict(event["payload"]["record"])
                    record.pop("created_at")
                    out.append(record)
            return out

        expected = fingerprint(tmp_path / "ref")
        log_bytes = (tmp_path / "ref" / "events.jsonl").read_bytes()
        rng = random.Random(4321)
        for i in range(10):
            cut = rng.randrange(1, len(log_bytes))
            crash = tmp_path / f"kill{i}"
            crash.mkdir()
            shutil.copy(tmp_path / "ref" / "config.yaml", crash / "config.yaml")
            (crash / "events.jsonl").write_bytes(log_bytes[:cut])
            engine = resume_run(crash)
            engine.run(7 - engine.iteration)
            engine.log.close()
            assert fingerprint(crash) == expected, f"kill point at byte {cut}"
        report("resume after 10 random kill points reproduces the uninterrupted archive")
