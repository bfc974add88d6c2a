"""Shipped task payloads: seed tasks and example environments.

Seeds initialize every run's archive; the example environments are the
few-shot material for code-generation prompts and the default fixtures
for sandbox validation.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

SEED_ORDER = ("bridge_gaps", "stairs_ascent", "ball_goal")
FIXTURE_ORDER = ("bridge_crossing", "lava_boat", "stairs_descent", "lever_door")

DEFAULT_ROBOT_DESC = (
    "The robot is a small wheeled robot, roughly 1 m tall, simulated in PyBullet. "
    "It observes its own joint positions and velocities along with camera images. "
    "It has a discrete action space with six actions: do nothing, go forward, go "
    "backward, rotate clockwise, rotate counterclockwise, and jump. The robot can "
    "push objects around but lacks the ability to grab, pick up, carry, or stack "
    "objects."
)


@dataclass(frozen=True)
class TaskPayload:
    name: str
    description: str
    env_code: str


def _data_root() -> Path:
    return Path(resources.files("openloop").joinpath("data"))


def _load_dir(kind: str, name: str) -> TaskPayload:
    root = _data_root() / kind / name
    return TaskPayload(
        name=name,
        description=(root / "description.txt").read_text(encoding="utf-8"),
        env_code=(root / "env.code").read_text(encoding="utf-8"),
    )


def load_seeds() -> list[TaskPayload]:
    return [_load_dir("seeds", name) for name in SEED_ORDER]


def load_fixtures() -> list[TaskPayload]:
    return [_load_dir("fixtures", name) for name in FIXTURE_ORDER]


def fixture_pairs(limit: int | None = None) -> list[tuple[str, str]]:
    pairs = [(f.description, f.env_code) for f in load_fixtures()]
    return pairs if limit is None else pairs[:limit]


def fixture_codes(limit: int | None = None) -> list[str]:
    codes = [f.env_code for f in load_fixtures()]
    return codes if limit is None else codes[:limit]
