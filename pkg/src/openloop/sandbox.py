"""Client-side view of the environment sandbox.

The engine validates generated code through four ops: compile (module
executes), contract (an Env class exposes the five required methods),
rollout (a short random-action smoke run), and success_check (restore a
state blob, call get_success). Any conforming child process can serve
these over the newline-JSON protocol; the in-process clients here cover
runs and tests that don't want a real execution backend.
"""
from __future__ import annotations

import ast
import base64
import traceback as tb_module
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .procio import NdjsonProcess, ProcessCrashed, ProcessProtocolError, ProcessTimeout

REQUIRED_ENV_METHODS = ("reset", "step", "get_task_rewards", "get_terminated", "get_success")


class SandboxError(Exception):
    pass


@dataclass(frozen=True)
class SandboxVerdict:
    ok: bool
    traceback: Optional[str] = None
    methods_found: tuple[str, ...] = ()
    reward_keys: tuple[str, ...] = ()
    terminated: Optional[bool] = None
    success: Optional[bool] = None

    def __post_init__(self):
        if not self.ok and not self.traceback:
            object.__setattr__(self, "traceback", "unspecified failure")

    def to_payload(self) -> dict:
        return {
            "ok": self.ok,
            "traceback": self.traceback,
            "methods_found": list(self.methods_found),
            "reward_keys": list(self.reward_keys),
            "terminated": self.terminated,
            "success": self.success,
        }


class AcceptAllSandbox:
    """Every check passes; success_check defers to the learner's claim."""

    kind = "acceptall"

    def compile(self, env_code: str) -> SandboxVerdict:
        return SandboxVerdict(ok=True)

    def contract(self, env_code: str) -> SandboxVerdict:
        return SandboxVerdict(ok=True, methods_found=REQUIRED_ENV_METHODS)

    def rollout(self, env_code: str, max_steps: int, rng_seed: int) -> SandboxVerdict:
        return SandboxVerdict(ok=True)

    def success_check(self, env_code: str, state_blob: bytes) -> SandboxVerdict:
        return SandboxVerdict(ok=True, success=None)


class SyntaxCheckSandbox:
    """Compile step parses the source; nothing is executed.

    Contract checking is static: the AST must define a class named Env
    with the five required methods. Rollout is a no-op and success_check
    defers to the learner, so this backend is safe against arbitrary
    generated code while still catching the common failure mode.
    """

    kind = "syntax"

    def compile(self, env_code: str) -> SandboxVerdict:
        try:
            compile(env_code, "<env>", "exec")
            return SandboxVerdict(ok=True)
        except SyntaxError:
            return SandboxVerdict(ok=False, traceback=tb_module.format_exc())

    def contract(self, env_code: str) -> SandboxVerdict:
        try:
            tree = ast.parse(env_code)
        except SyntaxError:
            return SandboxVerdict(ok=False, traceback=tb_module.format_exc())
        methods: list[str] = []
        for node in ast.walk(tree):
            if isinstance(node, ast.ClassDef) and node.name == "Env":
                methods = [
                    item.name for item in node.body
                    if isinstance(item, (ast.FunctionDef, ast.AsyncFunctionDef))
                ]
                break
        else:
            return SandboxVerdict(ok=False, traceback="no class named Env defined")
        missing = [m for m in REQUIRED_ENV_METHODS if m not in methods]
        if missing:
            return SandboxVerdict(
                ok=False,
                traceback=f"Env is missing required methods: {', '.join(missing)}",
                methods_found=tuple(m for m in REQUIRED_ENV_METHODS if m in methods),
            )
        return SandboxVerdict(ok=True, methods_found=tuple(methods))

    def rollout(self, env_code: str, max_steps: int, rng_seed: int) -> SandboxVerdict:
        return SandboxVerdict(ok=True)

    def success_check(self, env_code: str, state_blob: bytes) -> SandboxVerdict:
        return SandboxVerdict(ok=True, success=None)


class ScriptedSandbox:
    """Test double driven by a plan callable (op, env_code) -> verdict."""

    kind = "scripted"

    def __init__(self, plan: Callable[[str, str], SandboxVerdict]):
        self._plan = plan
        self.calls: list[tuple[str, str]] = []

    @classmethod
    def failing_compiles(cls, n: int, success: Optional[bool] = True) -> "ScriptedSandbox":
        """First n compile requests fail, everything else is fine."""
        state = {"compile_failures": 0}

        def plan(op: str, env_code: str) -> SandboxVerdict:
            if op == "compile" and state["compile_failures"] < n:
                state["compile_failures"] += 1
                return SandboxVerdict(
                    ok=False,
                    traceback=f"Traceback (most recent call last):\ninjected failure {state['compile_failures']}",
                )
            if op == "success_check":
                return SandboxVerdict(ok=True, success=success)
            return SandboxVerdict(ok=True, methods_found=REQUIRED_ENV_METHODS)

        return cls(plan)

    def _run(self, op: str, env_code: str) -> SandboxVerdict:
        self.calls.append((op, env_code))
        return self._plan(op, env_code)

    def compile(self, env_code: str) -> SandboxVerdict:
        return self._run("compile", env_code)

    def contract(self, env_code: str) -> SandboxVerdict:
        return self._run("contract", env_code)

    def rollout(self, env_code: str, max_steps: int, rng_seed: int) -> SandboxVerdict:
        return self._run("rollout", env_code)

    def success_check(self, env_code: str, state_blob: bytes) -> SandboxVerdict:
        return self._run("success_check", env_code)


class ProcessSandbox:
    """Wire-protocol client for an external sandbox process."""

    kind = "process"

    def __init__(self, argv: Sequence[str], timeout_s: float = 30.0):
        if not argv:
            raise SandboxError("process sandbox needs a command")
        self.timeout_s = timeout_s
        self._proc = NdjsonProcess(argv)

    def _request(self, payload: dict) -> SandboxVerdict:
        try:
            reply = self._proc.request(payload, timeout_s=self.timeout_s)
        except ProcessTimeout:
            return SandboxVerdict(ok=False, traceback=f"timeout after {self.timeout_s}s")
        except (ProcessCrashed, ProcessProtocolError) as exc:
            return SandboxVerdict(ok=False, traceback=f"sandbox process fault: {exc}")
        return SandboxVerdict(
            ok=bool(reply.get("ok", False)),
            traceback=reply.get("traceback"),
            methods_found=tuple(reply.get("methods_found") or ()),
            reward_keys=tuple(reply.get("reward_keys") or ()),
            terminated=reply.get("terminated"),
            success=reply.get("success"),
        )

    def compile(self, env_code: str) -> SandboxVerdict:
        return self._request({"op": "compile", "env_code": env_code})

    def contract(self, env_code: str) -> SandboxVerdict:
        return self._request({"op": "contract", "env_code": env_code})

    def rollout(self, env_code: str, max_steps: int, rng_seed: int) -> SandboxVerdict:
        return self._request({
            "op": "rollout",
            "env_code": env_code,
            "max_steps": max_steps,
            "rng_seed": rng_seed,
        })

    def success_check(self, env_code: str, state_blob: bytes) -> SandboxVerdict:
        return self._request({
            "op": "success_check",
            "env_code": env_code,
            "state_blob": base64.b64encode(state_blob).decode("ascii"),
        })

    def close(self) -> None:
        self._proc.close()


@dataclass
class CheckOutcome:
    """Composite compile + contract + smoke-rollout result."""

    ok: bool
    failed_op: Optional[str] = None
    traceback: Optional[str] = None
    steps: list[tuple[str, SandboxVerdict]] = field(default_factory=list)


def run_checks(sandbox, env_code: str, max_steps: int, rng_seed: int) -> CheckOutcome:
    """Run the three validation ops in order, stopping at the first failure."""
    outcome = CheckOutcome(ok=True)
    for op in ("compile", "contract", "rollout"):
        if op == "rollout":
            verdict = sandbox.rollout(env_code, max_steps, rng_seed)
        else:
            verdict = getattr(sandbox, op)(env_code)
        outcome.steps.append((op, verdict))
        if not verdict.ok:
            outcome.ok = False
            outcome.failed_op = op
            outcome.traceback = verdict.traceback
            break
    return outcome
