"""Append-only JSONL run log and its replay machinery.

The event log is the single source of truth for a run: the task files on
disk are a cache rebuilt from it. Every event carries a gapless ``seq``
and a wall-clock ``ts``; replay reconstructs the archive, the iteration
counter, and scripted-backend cursors from the longest prefix that ends
at a commit point (a task archived or an iteration aborted), so a run
killed at any byte offset resumes to the same final state.
"""
from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional

from .store import TaskRecord

ITER_START = "IterStart"
FM_REQUEST = "FmRequest"
FM_RESPONSE = "FmResponse"
PARSE_ERROR = "ParseError"
SANDBOX_RESULT = "SandboxResult"
MOI_VERDICT = "MoIVerdict"
LEARNER_RESULT = "LearnerResult"
SUCCESS_CHECK = "SuccessCheck"
TASK_ARCHIVED = "TaskArchived"
ITER_ABORTED = "IterAborted"

KINDS = frozenset({
    ITER_START, FM_REQUEST, FM_RESPONSE, PARSE_ERROR, SANDBOX_RESULT,
    MOI_VERDICT, LEARNER_RESULT, SUCCESS_CHECK, TASK_ARCHIVED, ITER_ABORTED,
})

# Events that commit progress; everything after the last one is a
# partial iteration and is discarded on resume.
COMMIT_KINDS = frozenset({TASK_ARCHIVED, ITER_ABORTED})

# Wall-clock fields stripped by the canonical transform used for
# determinism comparisons.
_VOLATILE_PAYLOAD_KEYS = ("latency_s",)


class CorruptLogError(Exception):
    def __init__(self, message: str, first_bad_seq: int):
        super().__init__(f"{message} (first bad seq {first_bad_seq})")
        self.first_bad_seq = first_bad_seq


class EventLog:
    """Writer that appends events to memory and, optionally, a JSONL file."""

    def __init__(self, path: Optional[Path] = None, start_seq: int = 0):
        self.path = Path(path) if path else None
        self._seq = start_seq
        self._lock = threading.Lock()
        self.events: list[dict] = []
        self._fh = None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "a", encoding="utf-8")

    def emit(self, kind: str, payload: dict[str, Any]) -> dict:
        if kind not in KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        with self._lock:
            event = {"seq": self._seq, "ts": time.time(), "kind": kind, "payload": payload}
            self._seq += 1
            self.events.append(event)
            if self._fh is not None:
                self._fh.write(json.dumps(event, sort_keys=True, ensure_ascii=True) + "\n")
                self._fh.flush()
        return event

    @property
    def next_seq(self) -> int:
        return self._seq

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_events(path: Path, tolerate_torn_tail: bool = True) -> list[dict]:
    """Parse a JSONL event file, enforcing gapless seq numbering.

    A single undecodable or mis-numbered tail (what a kill mid-write
    leaves behind) is dropped when ``tolerate_torn_tail``; garbage with
    valid events after it is real corruption and raises.
    """
    raw_lines = Path(path).read_text(encoding="utf-8").split("\n")
    if raw_lines and raw_lines[-1] == "":
        raw_lines.pop()
    events: list[dict] = []
    for idx, line in enumerate(raw_lines):
        bad = None
        try:
            event = json.loads(line)
        except json.JSONDecodeError:
            bad = "undecodable line"
            event = None
        if event is not None:
            if not isinstance(event, dict) or event.get("kind") not in KINDS:
                bad = "not a run event"
            elif event.get("seq") != len(events):
                bad = f"seq {event.get('seq')} where {len(events)} expected"
        if bad is None:
            events.append(event)
            continue
        rest = raw_lines[idx + 1:]
        if tolerate_torn_tail and not any(r.strip() for r in rest):
            break
        raise CorruptLogError(bad, first_bad_seq=len(events))
    return events


def canonical_lines(events: Iterable[dict]) -> list[str]:
    """Events rendered without wall-clock fields, for equality checks."""
    lines = []
    for event in events:
        payload = dict(event["payload"])
        for key in _VOLATILE_PAYLOAD_KEYS:
            payload.pop(key, None)
        if "record" in payload and isinstance(payload["record"], dict):
            record = dict(payload["record"])
            record.pop("created_at", None)
            payload["record"] = record
        clean = {"seq": event["seq"], "kind": event["kind"], "payload": payload}
        lines.append(json.dumps(clean, sort_keys=True, ensure_ascii=True))
    return lines


@dataclass
class ReplayState:
    """Everything a resumed run needs from the kept event prefix."""

    kept: list[dict] = field(default_factory=list)
    records: list[TaskRecord] = field(default_factory=list)
    seeds_archived: int = 0
    last_iteration: int = 0
    fm_response_kinds: list[str] = field(default_factory=list)
    learner_calls: int = 0

    @property
    def next_seq(self) -> int:
        return len(self.kept)


def replay(events: list[dict]) -> ReplayState:
    """Reduce a log to resumable state, discarding any partial tail."""
    last_commit = -1
    for i, event in enumerate(events):
        if event["kind"] in COMMIT_KINDS:
            last_commit = i
    kept = events[: last_commit + 1]

    state = ReplayState(kept=kept)
    for event in kept:
        kind = event["kind"]
        payload = event["payload"]
        if kind == TASK_ARCHIVED:
            record = TaskRecord.from_dict(payload["record"])
            state.records.append(record)
            if record.generation == 0:
                state.seeds_archived += 1
            state.last_iteration = max(state.last_iteration, payload.get("iteration", 0))
        elif kind == ITER_ABORTED:
            state.last_iteration = max(state.last_iteration, payload.get("iteration", 0))
        elif kind == FM_RESPONSE:
            if payload.get("ok"):
                # failed completions consumed nothing from a scripted backend
                state.fm_response_kinds.append(payload.get("kind", ""))
        elif kind == LEARNER_RESULT:
            state.learner_calls += 1
    return state


def truncate_log(path: Path, keep_events: int) -> None:
    """Rewrite the file to exactly the first ``keep_events`` events."""
    events = read_events(path)
    kept = events[:keep_events]
    tmp = Path(path).with_suffix(".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for event in kept:
            fh.write(json.dumps(event, sort_keys=True, ensure_ascii=True) + "\n")
    tmp.replace(path)
