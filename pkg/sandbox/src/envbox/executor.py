"""Loads generated environment code and runs the validation ops on it.

Each op builds everything from scratch: a fresh module namespace, a
fresh physics world, a fresh Env instance. State only crosses ops
through the JSON-serializable snapshot blob, which success checks
restore before calling get_success().
"""
from __future__ import annotations

import base64
import json
import linecache
import random
import traceback

import numpy as np

from .robot_env import R2D2Env, install_shim_modules

ENV_FILENAME = "<env>"

REQUIRED_METHODS = ("reset", "step", "get_task_rewards", "get_terminated", "get_success")


class ExecutionFailure(Exception):
    """Carries the traceback text of a failed op."""

    def __init__(self, traceback_text: str):
        super().__init__(traceback_text)
        self.traceback_text = traceback_text


class RequestTimeout(BaseException):
    """Raised by the alarm handler; derives from BaseException so the
    generated code's own except-Exception blocks cannot swallow it."""


def _capture() -> str:
    return traceback.format_exc()


def load_module(env_code: str) -> dict:
    """Execute the module body in an isolated namespace."""
    install_shim_modules()
    # let tracebacks quote the generated source
    linecache.cache[ENV_FILENAME] = (
        len(env_code), None, env_code.splitlines(keepends=True), ENV_FILENAME,
    )
    namespace: dict = {"__name__": "generated_env", "__builtins__": __builtins__}
    try:
        code = compile(env_code, ENV_FILENAME, "exec")
        exec(code, namespace)  # noqa: S102 - the sandbox process exists to exec this
    except RequestTimeout:
        raise
    except BaseException:
        raise ExecutionFailure(_capture()) from None
    return namespace


def find_env_class(namespace: dict):
    env_class = namespace.get("Env")
    if env_class is None or not isinstance(env_class, type):
        raise ExecutionFailure("no class named Env defined at module scope")
    return env_class


def contract_report(env_class) -> tuple[list[str], list[str]]:
    found = [m for m in REQUIRED_METHODS if callable(getattr(env_class, m, None))]
    missing = [m for m in REQUIRED_METHODS if m not in found]
    return found, missing


def _seed_everything(rng_seed: int) -> None:
    random.seed(rng_seed)
    np.random.seed(rng_seed & 0xFFFFFFFF)


def instantiate(env_code: str, rng_seed: int):
    _seed_everything(rng_seed)
    namespace = load_module(env_code)
    env_class = find_env_class(namespace)
    found, missing = contract_report(env_class)
    if missing:
        raise ExecutionFailure(
            f"Env is missing required methods: {', '.join(missing)}"
        )
    try:
        env = env_class()
        env.reset()
    except RequestTimeout:
        raise
    except BaseException:
        raise ExecutionFailure(_capture()) from None
    if not isinstance(env, R2D2Env):
        # still usable as long as it carries the physics handle and robot
        if not hasattr(env, "_p") or not hasattr(env, "robot"):
            raise ExecutionFailure("Env does not build on the provided base class")
    return env


def run_rollout(env, max_steps: int, rng_seed: int):
    """Uniform random actions from the env's declared action space."""
    rng = random.Random(rng_seed)
    num_actions = int(getattr(env, "num_actions", 6))
    reward_keys: list[str] = []
    terminated = False
    try:
        for _ in range(max_steps):
            action = rng.randrange(num_actions)
            _, _, terminated, truncated, _ = env.step(action)
            components = getattr(env, "_last_reward_components", None)
            if components is None:
                components = env.get_task_rewards(action)
            for key in components:
                if key not in reward_keys:
                    reward_keys.append(key)
            if terminated or truncated:
                break
    except RequestTimeout:
        raise
    except BaseException:
        raise ExecutionFailure(_capture()) from None
    return reward_keys, terminated


# -- state snapshots -----------------------------------------------------

def _jsonable(value):
    if isinstance(value, (bool, int, float, str, type(None))):
        return value
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (list, tuple)):
        items = [_jsonable(v) for v in value]
        if any(item is _SKIP for item in items):
            return _SKIP
        return items
    if isinstance(value, dict):
        out = {}
        for key, val in value.items():
            if not isinstance(key, str):
                return _SKIP
            converted = _jsonable(val)
            if converted is _SKIP:
                return _SKIP
            out[key] = converted
        return out
    return _SKIP


_SKIP = object()


def snapshot_state(env) -> bytes:
    physics = env._p
    bodies = {}
    for body_id in physics.body_ids():
        position, orientation = physics.body_pose(body_id)
        bodies[str(body_id)] = {
            "position": position.tolist(),
            "orientation": orientation.tolist(),
        }
    attrs = {}
    for name, value in vars(env).items():
        if name.startswith("_") or name in ("robot", "dt"):
            continue
        converted = _jsonable(value)
        if converted is not _SKIP:
            attrs[name] = converted
    state = {
        "bodies": bodies,
        "robot_id": int(env.robot.robot_id),
        "attrs": attrs,
    }
    return base64.b64encode(json.dumps(state).encode("utf-8"))


def restore_state(env, blob: bytes) -> None:
    try:
        state = json.loads(base64.b64decode(blob, validate=True).decode("utf-8"))
        bodies = state["bodies"]
        for body_id, pose in bodies.items():
            env._p.resetBasePositionAndOrientation(
                int(body_id), pose["position"], pose["orientation"]
            )
        for name, value in state.get("attrs", {}).items():
            setattr(env, name, value)
    except (ExecutionFailure, RequestTimeout):
        raise
    except BaseException:
        raise ExecutionFailure(_capture()) from None


# -- op entry points ------------------------------------------------------

def op_compile(env_code: str) -> dict:
    try:
        load_module(env_code)
    except ExecutionFailure as exc:
        return {"ok": False, "traceback": exc.traceback_text}
    return {"ok": True}


def op_contract(env_code: str) -> dict:
    try:
        namespace = load_module(env_code)
        env_class = find_env_class(namespace)
    except ExecutionFailure as exc:
        return {"ok": False, "traceback": exc.traceback_text}
    found, missing = contract_report(env_class)
    if missing:
        return {
            "ok": False,
            "traceback": f"Env is missing required methods: {', '.join(missing)}",
            "methods_found": found,
        }
    return {"ok": True, "methods_found": found}


def op_rollout(env_code: str, max_steps: int, rng_seed: int) -> dict:
    try:
        env = instantiate(env_code, rng_seed)
        reward_keys, terminated = run_rollout(env, max_steps, rng_seed)
    except ExecutionFailure as exc:
        return {"ok": False, "traceback": exc.traceback_text}
    return {"ok": True, "reward_keys": reward_keys, "terminated": terminated}


def op_success_check(env_code: str, state_blob: bytes) -> dict:
    try:
        env = instantiate(env_code, rng_seed=0)
        restore_state(env, state_blob)
        success = bool(env.get_success())
    except ExecutionFailure as exc:
        return {"ok": False, "traceback": exc.traceback_text}
    except RequestTimeout:
        raise
    except BaseException:
        return {"ok": False, "traceback": _capture()}
    return {"ok": True, "success": success}


def op_train_stub(env_code: str, budget_steps: int, rng_seed: int,
                  step_cap: int = 1000) -> dict:
    """Random-policy 'training': roll out, then judge with get_success.

    The budget is advisory; the stub caps actual steps so enormous real
    budgets stay cheap.
    """
    steps = max(1, min(int(budget_steps), step_cap))
    try:
        env = instantiate(env_code, rng_seed)
        run_rollout(env, steps, rng_seed)
        success = bool(env.get_success())
        blob = snapshot_state(env)
    except ExecutionFailure as exc:
        return {"ok": False, "failure_reason": exc.traceback_text}
    except RequestTimeout:
        raise
    except BaseException:
        return {"ok": False, "failure_reason": _capture()}
    return {
        "ok": True,
        "success": success,
        "steps_used": steps,
        "failure_reason": None if success else "random policy did not reach success",
        "policy_artifact": f"stub-policy-{rng_seed & 0xFFFFFFFFFFFFFFFF:016x}" if success else None,
        "final_state_blob": blob.decode("ascii"),
    }
