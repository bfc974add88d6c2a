"""Learner plug-ins behind a single train() interface.

Three implementations: AlwaysSuccess (simulated learning), SkillModel (a
scripted or probabilistic stand-in for a trainer, used by tests and
ablation studies), and ProcessLearner (an external trainer supervised
over the newline-JSON wire protocol). None of them touch the archive;
the loop engine owns all task state.
"""
from __future__ import annotations

import base64
import hashlib
import random
import threading
from dataclasses import dataclass
from typing import Optional, Sequence

from .procio import NdjsonProcess, ProcessProtocolError

LEARNER_FAULT = "learner-fault"


class LearnerError(Exception):
    pass


class LearnerScriptExhausted(LearnerError):
    pass


@dataclass(frozen=True)
class TrainRequest:
    env_code: str
    warm_start: Optional[str]
    budget_steps: int
    rng_seed: int

    def __post_init__(self):
        if self.budget_steps <= 0:
            raise LearnerError("budget_steps must be > 0")


@dataclass(frozen=True)
class LearnerOutcome:
    success: bool
    steps_used: int = 0
    final_state_blob: Optional[bytes] = None
    failure_reason: Optional[str] = None
    policy_artifact: Optional[str] = None

    def __post_init__(self):
        if self.success and not self.policy_artifact:
            raise LearnerError("a successful outcome must carry a policy artifact")


def _artifact_for(seed: int) -> str:
    return f"policy-{seed & 0xFFFFFFFFFFFFFFFF:016x}"


class AlwaysSuccessLearner:
    """Simulated learning: every task trains instantly and succeeds."""

    kind = "always_success"

    def train(self, request: TrainRequest) -> LearnerOutcome:
        return LearnerOutcome(
            success=True,
            steps_used=0,
            policy_artifact=_artifact_for(request.rng_seed),
        )


class SkillModelLearner:
    """Desk-scale trainer stand-in.

    With a script, outcomes are popped in order and exhaustion raises.
    Without one, success is a Bernoulli draw whose probability depends on
    whether the request carries a warm start; the draw is a pure function
    of (rng_seed, warm-start presence), so reruns reproduce it.
    """

    kind = "skill_model"

    def __init__(self, p_warm: float = 0.8, p_cold: float = 0.3,
                 script: Optional[Sequence[bool]] = None):
        for name, p in (("p_warm", p_warm), ("p_cold", p_cold)):
            if not 0.0 <= p <= 1.0:
                raise LearnerError(f"{name} must be in [0, 1]")
        self.p_warm = p_warm
        self.p_cold = p_cold
        self.script = list(script) if script is not None else None
        self._cursor = 0
        self._lock = threading.Lock()

    def skip(self, n: int) -> None:
        """Advance the script cursor past outcomes consumed before a resume."""
        if self.script is not None:
            self._cursor = min(n, len(self.script))

    def train(self, request: TrainRequest) -> LearnerOutcome:
        if self.script is not None:
            with self._lock:
                if self._cursor >= len(self.script):
                    raise LearnerScriptExhausted("learner script exhausted")
                success = self.script[self._cursor]
                self._cursor += 1
        else:
            warm = request.warm_start is not None
            digest = hashlib.blake2b(
                f"{request.rng_seed}:{int(warm)}".encode(), digest_size=8
            ).digest()
            draw = random.Random(int.from_bytes(digest, "big")).random()
            success = draw < (self.p_warm if warm else self.p_cold)
        if success:
            return LearnerOutcome(
                success=True,
                steps_used=request.budget_steps // 2,
                policy_artifact=_artifact_for(request.rng_seed),
            )
        return LearnerOutcome(
            success=False,
            steps_used=request.budget_steps,
            failure_reason="did not reach success criterion within budget",
        )


class ProcessLearner:
    """External trainer process relaying the wire protocol.

    A crash or timeout is reported as a failed outcome with reason
    "learner-fault" so the log can tell trainer faults from task
    failures; budget_steps is advisory to the child, the engine enforces
    only the wall-clock timeout.
    """

    kind = "process"

    def __init__(self, argv: Sequence[str], timeout_s: float = 600.0):
        if not argv:
            raise LearnerError("process learner needs a command")
        self.timeout_s = timeout_s
        self._proc = NdjsonProcess(argv)

    def train(self, request: TrainRequest) -> LearnerOutcome:
        payload = {
            "op": "train",
            "env_code": request.env_code,
            "warm_start": request.warm_start,
            "budget_steps": request.budget_steps,
            "rng_seed": request.rng_seed,
        }
        try:
            reply = self._proc.request(payload, timeout_s=self.timeout_s)
        except ProcessProtocolError as exc:
            return LearnerOutcome(success=False, failure_reason=f"{LEARNER_FAULT}: {exc}")
        if not reply.get("ok", False):
            return LearnerOutcome(
                success=False,
                failure_reason=f"{LEARNER_FAULT}: {reply.get('failure_reason') or 'trainer error'}",
            )
        blob = None
        if reply.get("final_state_blob"):
            blob = base64.b64decode(reply["final_state_blob"])
        success = bool(reply.get("success", False))
        return LearnerOutcome(
            success=success,
            steps_used=int(reply.get("steps_used", 0)),
            final_state_blob=blob,
            failure_reason=reply.get("failure_reason"),
            policy_artifact=reply.get("policy_artifact") or (_artifact_for(request.rng_seed) if success else None),
        )

    def close(self) -> None:
        self._proc.close()
