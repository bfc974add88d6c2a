"""Shared builders for scripted runs."""
from __future__ import annotations

import json
from pathlib import Path

# One line per acceptance criterion, printed by the conftest summary hook.
ACCEPTANCE_RESULTS: list[str] = []

from openloop.config import RunConfig
from openloop.engine import Engine, start_run
from openloop.gateway import ScriptedBackend
from openloop.learners import AlwaysSuccessLearner
from openloop.sandbox import AcceptAllSandbox

VALID_ENV_CODE = """import numpy as np
from oped.envs.r2d2.base import R2D2Env


class Env(R2D2Env):
    def __init__(self):
        super().__init__()
        self.goal = [5., 0., 0.]

    def reset(self):
        return super().reset()

    def step(self, action):
        return super().step(action)

    def get_task_rewards(self, action):
        return {"survival": 1.}

    def get_terminated(self, action):
        return False

    def get_success(self):
        return self.robot.links["base"].position[0] > self.goal[0]
"""


def taskgen_reply(desc: str, reasoning: str = "Build on prior skills.") -> str:
    return (
        f"Reasoning for what the next task should be:\n{reasoning}\n\n"
        f'Next task description:\n"""\n{desc}\n"""\n'
    )


def envgen_reply(code: str, preamble: str = "") -> str:
    return f"{preamble}Environment code:\n```python\n{code}\n```\n"


def reflect_reply(code: str) -> str:
    return (
        "How to solve the error:\nAdjusted the failing construction.\n\n"
        f"Environment code:\n```python\n{code}\n```\n"
    )


def moi_reply(interesting: bool) -> str:
    answer = "Yes" if interesting else "No"
    return (
        "Reasoning for why the new task is interesting or not:\nCompared "
        f"against the archive.\n\nIs the new task interesting?:\n{answer}\n"
    )


def iteration_entries(i: int, *, interesting: bool = True, code: str = VALID_ENV_CODE,
                      desc: str | None = None) -> list[tuple[str, str]]:
    """Script entries for one clean iteration: task gen, env gen, gate."""
    desc = desc or f"Scripted task {i}: push the block onto marker {i}."
    return [
        ("TaskGen", taskgen_reply(desc)),
        ("EnvGen", envgen_reply(f"{code}\n# variant {i}\n")),
        ("MoI", moi_reply(interesting)),
    ]


def script_for(n_iterations: int, **kwargs) -> list[tuple[str, str]]:
    entries: list[tuple[str, str]] = []
    for i in range(1, n_iterations + 1):
        entries.extend(iteration_entries(i, **kwargs))
    return entries


def write_script_dir(path: Path, entries: list[tuple[str, str]]) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    manifest = []
    for i, (kind, reply) in enumerate(entries):
        name = f"{i:04d}.txt"
        (path / name).write_text(reply, encoding="utf-8")
        manifest.append({"kind": kind, "file": name})
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return path


def make_engine(tmp_path: Path, entries: list[tuple[str, str]], *,
                config: RunConfig | None = None, learner=None, sandbox=None,
                name: str = "run") -> Engine:
    return start_run(
        config or RunConfig(),
        tmp_path / name,
        backend=ScriptedBackend(entries),
        learner=learner or AlwaysSuccessLearner(),
        sandbox=sandbox or AcceptAllSandbox(),
    )
