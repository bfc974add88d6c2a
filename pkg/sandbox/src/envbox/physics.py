"""Kinematic stand-in for the physics engine surface the envs use.

Implements exactly the API exercised by the example environments: shape
and body creation, pose get/reset, proximity-based contact queries, and
the two quaternion helpers. There is no dynamics integration; bodies
stay where they are put and "contact" means axis-aligned bounding boxes
overlap within a small margin.
"""
from __future__ import annotations

import numpy as np

CONTACT_MARGIN = 0.05


class PhysicsError(Exception):
    pass


class KinematicPhysics:
    GEOM_SPHERE = 2
    GEOM_BOX = 3
    GEOM_CYLINDER = 4
    GEOM_CAPSULE = 7
    GEOM_HEIGHTFIELD = 9

    def __init__(self):
        self._shapes: dict[int, dict] = {}
        self._visuals: dict[int, dict] = {}
        self._bodies: dict[int, dict] = {}
        self._next_shape = 0
        self._next_visual = 0
        self._next_body = 0

    # -- shape creation --------------------------------------------------

    def createCollisionShape(self, shapeType, halfExtents=None, radius=None,
                             height=None, meshScale=None, heightfieldData=None,
                             numHeightfieldRows=0, numHeightfieldColumns=0, **_):
        if shapeType == self.GEOM_BOX:
            extents = np.asarray(halfExtents, dtype=float)
        elif shapeType in (self.GEOM_SPHERE, self.GEOM_CAPSULE):
            r = float(radius or 0.0)
            h = float(height) if height else 0.0
            extents = np.array([r, r, r + h / 2.0])
        elif shapeType == self.GEOM_CYLINDER:
            r = float(radius or 0.0)
            extents = np.array([r, r, float(height or 0.0) / 2.0])
        elif shapeType == self.GEOM_HEIGHTFIELD:
            scale = np.asarray(meshScale if meshScale is not None else [1.0, 1.0, 1.0],
                               dtype=float)
            data = np.asarray(heightfieldData, dtype=float)
            half_x = numHeightfieldRows * scale[0] / 2.0
            half_y = numHeightfieldColumns * scale[1] / 2.0
            half_z = (float(data.max()) * scale[2] / 2.0) if data.size else 0.0
            extents = np.array([half_x, half_y, max(half_z, 0.01)])
        else:
            raise PhysicsError(f"unsupported collision shape type {shapeType}")
        shape_id = self._next_shape
        self._next_shape += 1
        self._shapes[shape_id] = {"type": shapeType, "half_extents": extents}
        return shape_id

    def createVisualShape(self, shapeType, halfExtents=None, radius=None,
                          length=None, rgbaColor=None, **_):
        visual_id = self._next_visual
        self._next_visual += 1
        self._visuals[visual_id] = {"type": shapeType, "color": rgbaColor}
        return visual_id

    def createMultiBody(self, baseMass=0.0, baseCollisionShapeIndex=-1,
                        baseVisualShapeIndex=-1, basePosition=(0.0, 0.0, 0.0),
                        baseOrientation=(0.0, 0.0, 0.0, 1.0), **_):
        body_id = self._next_body
        self._next_body += 1
        self._bodies[body_id] = {
            "mass": float(baseMass),
            "shape": (self._shapes[baseCollisionShapeIndex]
                      if baseCollisionShapeIndex in self._shapes else None),
            "position": np.asarray(basePosition, dtype=float).copy(),
            "orientation": np.asarray(baseOrientation, dtype=float).copy(),
        }
        return body_id

    # -- pose ------------------------------------------------------------

    def _body(self, body_id) -> dict:
        try:
            return self._bodies[int(body_id)]
        except (KeyError, TypeError, ValueError):
            raise PhysicsError(f"unknown body id {body_id!r}") from None

    def resetBasePositionAndOrientation(self, bodyUniqueId, posObj, ornObj):
        body = self._body(bodyUniqueId)
        body["position"] = np.asarray(posObj, dtype=float).copy()
        body["orientation"] = np.asarray(ornObj, dtype=float).copy()

    def getBasePositionAndOrientation(self, bodyUniqueId):
        body = self._body(bodyUniqueId)
        return tuple(body["position"]), tuple(body["orientation"])

    # -- queries ---------------------------------------------------------

    def _aabb(self, body) -> tuple[np.ndarray, np.ndarray] | None:
        if body["shape"] is None:
            return None  # visual-only bodies neither collide nor support
        extents = body["shape"]["half_extents"]
        return body["position"] - extents, body["position"] + extents

    def getContactPoints(self, bodyA=None, bodyB=None, **_):
        if bodyA is None or bodyB is None:
            raise PhysicsError("contact queries need bodyA and bodyB")
        box_a = self._aabb(self._body(bodyA))
        box_b = self._aabb(self._body(bodyB))
        if box_a is None or box_b is None:
            return []
        lo = np.maximum(box_a[0], box_b[0])
        hi = np.minimum(box_a[1], box_b[1])
        if np.all(hi - lo >= -CONTACT_MARGIN):
            # single synthetic contact record; callers only count these
            return [(0, int(bodyA), int(bodyB), -1, -1)]
        return []

    def support_height(self, position, half_extents, exclude=()):
        """Highest body top under the given footprint, or None."""
        px, py, pz = float(position[0]), float(position[1]), float(position[2])
        bottom = pz - float(half_extents[2])
        best = None
        for body_id, body in self._bodies.items():
            if body_id in exclude:
                continue
            box = self._aabb(body)
            if box is None:
                continue
            lo, hi = box
            if not (lo[0] - CONTACT_MARGIN <= px <= hi[0] + CONTACT_MARGIN
                    and lo[1] - CONTACT_MARGIN <= py <= hi[1] + CONTACT_MARGIN):
                continue
            top = float(hi[2])
            if top <= bottom + CONTACT_MARGIN and (best is None or top > best):
                best = top
        return best

    # -- dynamics / appearance (recorded, not simulated) -------------------

    def changeDynamics(self, bodyUniqueId=None, linkIndex=-1, **props):
        body = self._body(bodyUniqueId)
        body.setdefault("dynamics", {}).update(props)

    def changeVisualShape(self, objectUniqueId=None, linkIndex=-1, rgbaColor=None, **_):
        body = self._body(objectUniqueId)
        body["color"] = rgbaColor

    # -- math helpers ------------------------------------------------------

    @staticmethod
    def getQuaternionFromEuler(eulerObj):
        roll, pitch, yaw = (float(v) for v in eulerObj)
        cr, sr = np.cos(roll / 2), np.sin(roll / 2)
        cp, sp = np.cos(pitch / 2), np.sin(pitch / 2)
        cy, sy = np.cos(yaw / 2), np.sin(yaw / 2)
        return (
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy,
            cr * cp * cy + sr * sp * sy,
        )

    @staticmethod
    def getMatrixFromQuaternion(quat):
        x, y, z, w = (float(v) for v in quat)
        return (
            1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w),
            2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
            2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y),
        )

    # -- introspection for state snapshots ---------------------------------

    def body_ids(self):
        return sorted(self._bodies)

    def body_pose(self, body_id):
        body = self._body(body_id)
        return body["position"].copy(), body["orientation"].copy()
