"""Base environment class the generated code subclasses.

Generated modules import this as ``oped.envs.r2d2.base.R2D2Env``;
install_shim_modules() wires that dotted path into sys.modules. The base
owns the physics handle, a single-link wheeled robot with six discrete
actions, and the step plumbing that folds the subclass's reward,
termination, and success hooks into the usual 5-tuple.
"""
from __future__ import annotations

import sys
import types

import numpy as np

from .physics import KinematicPhysics

ROBOT_HALF_EXTENTS = np.array([0.2, 0.2, 0.25])
NUM_ACTIONS = 6  # noop, forward, backward, rotate cw, rotate ccw, jump
MOVE_SPEED = 1.5  # m/s
TURN_SPEED = 0.6  # rad/s
JUMP_SPEED = 3.0  # m/s, vertical
GRAVITY = 9.8


def _yaw_of(quat) -> float:
    x, y, z, w = (float(v) for v in quat)
    return float(np.arctan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z)))


def _quat_from_yaw(yaw: float):
    return np.array([0.0, 0.0, np.sin(yaw / 2.0), np.cos(yaw / 2.0)])


class Link:
    def __init__(self, physics: KinematicPhysics, body_id: int):
        self._physics = physics
        self._body_id = body_id
        self.position_init = np.array([0.0, 0.0, float(ROBOT_HALF_EXTENTS[2])])
        self.orientation_init = np.array([0.0, 0.0, 0.0, 1.0])

    @property
    def position(self) -> np.ndarray:
        return self._physics.body_pose(self._body_id)[0]

    @property
    def orientation(self) -> np.ndarray:
        return self._physics.body_pose(self._body_id)[1]


class Robot:
    def __init__(self, physics: KinematicPhysics):
        shape = physics.createCollisionShape(
            KinematicPhysics.GEOM_BOX, halfExtents=list(ROBOT_HALF_EXTENTS)
        )
        self.robot_id = physics.createMultiBody(
            baseMass=10.0,
            baseCollisionShapeIndex=shape,
            basePosition=[0.0, 0.0, float(ROBOT_HALF_EXTENTS[2])],
        )
        self.links = {"base": Link(physics, self.robot_id)}


class R2D2Env:
    """Kinematic robot environment base.

    Subclasses must provide get_task_rewards(action), get_terminated(action)
    and get_success(); reset() and step() here handle the robot itself.
    """

    num_actions = NUM_ACTIONS

    def __init__(self):
        self._p = KinematicPhysics()
        self.robot = Robot(self._p)
        self.dt = 0.1
        self._vertical_velocity = 0.0
        self._last_reward_components: dict[str, float] = {}

    # -- plumbing ----------------------------------------------------------

    def _observation(self) -> np.ndarray:
        link = self.robot.links["base"]
        return np.concatenate([
            link.position,
            link.orientation,
            [self._vertical_velocity],
        ]).astype(np.float64)

    def reset(self):
        link = self.robot.links["base"]
        self._p.resetBasePositionAndOrientation(
            self.robot.robot_id, link.position_init, link.orientation_init
        )
        self._vertical_velocity = 0.0
        return self._observation()

    def _apply_action(self, action: int) -> None:
        position, orientation = self._p.body_pose(self.robot.robot_id)
        yaw = _yaw_of(orientation)
        if action == 1:
            position[0] += MOVE_SPEED * self.dt * np.cos(yaw)
            position[1] += MOVE_SPEED * self.dt * np.sin(yaw)
        elif action == 2:
            position[0] -= MOVE_SPEED * self.dt * np.cos(yaw)
            position[1] -= MOVE_SPEED * self.dt * np.sin(yaw)
        elif action == 3:
            yaw -= TURN_SPEED * self.dt
            orientation = _quat_from_yaw(yaw)
        elif action == 4:
            yaw += TURN_SPEED * self.dt
            orientation = _quat_from_yaw(yaw)
        elif action == 5:
            support = self._p.support_height(position, ROBOT_HALF_EXTENTS,
                                             exclude={self.robot.robot_id})
            resting = (support is not None and
                       position[2] - ROBOT_HALF_EXTENTS[2] <= support + 0.06)
            if resting and self._vertical_velocity <= 0.0:
                self._vertical_velocity = JUMP_SPEED

        # gravity and support
        self._vertical_velocity -= GRAVITY * self.dt
        new_z = position[2] + self._vertical_velocity * self.dt
        support = self._p.support_height(position, ROBOT_HALF_EXTENTS,
                                         exclude={self.robot.robot_id})
        if support is not None and self._vertical_velocity <= 0.0:
            floor_z = support + float(ROBOT_HALF_EXTENTS[2])
            if new_z <= floor_z:
                new_z = floor_z
                self._vertical_velocity = 0.0
        position[2] = new_z
        self._p.resetBasePositionAndOrientation(self.robot.robot_id, position, orientation)

    def step(self, action):
        self._apply_action(int(action))
        components = self.get_task_rewards(action)
        self._last_reward_components = dict(components)
        reward = float(sum(components.values()))
        terminated = bool(self.get_terminated(action))
        return self._observation(), reward, terminated, False, {}


_SHIM_PATH = ("oped", "oped.envs", "oped.envs.r2d2", "oped.envs.r2d2.base")


def install_shim_modules() -> None:
    """Make ``from oped.envs.r2d2.base import R2D2Env`` resolve to this shim."""
    parent = None
    for name in _SHIM_PATH:
        module = sys.modules.get(name)
        if module is None:
            module = types.ModuleType(name)
            sys.modules[name] = module
        if parent is not None:
            setattr(parent, name.rsplit(".", 1)[1], module)
        parent = module
    sys.modules[_SHIM_PATH[-1]].R2D2Env = R2D2Env
