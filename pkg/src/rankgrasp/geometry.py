"""Boxes, the three-box gripper model and the averaged box distance.

For a box with half-extent ``H`` the per-point exterior distance is
``||max(|y| - H, 0)||`` where ``y`` is the point in the box frame; a box's
distance to a cloud is the mean of that over all points. The gradient
helpers differentiate it with respect to the gripper pose tangent
(world-frame translation, gripper-frame rotation).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cloud import PointCloud
from .errors import DomainError
from .se3 import Pose, compose

_CHUNK = 64


@dataclass(frozen=True, eq=False)
class Box:
    pose: Pose
    half_extent: np.ndarray

    def __post_init__(self):
        h = np.array(self.half_extent, dtype=float)
        if h.shape != (3,) or not np.all(h > 0):
            raise DomainError(f"half_extent must be three positive numbers, got {h!r}")
        h.setflags(write=False)
        object.__setattr__(self, "half_extent", h)

    @classmethod
    def centered(cls, center, half_extent, quaternion=(1.0, 0.0, 0.0, 0.0)) -> "Box":
        return cls(Pose(np.asarray(center, dtype=float), np.asarray(quaternion, dtype=float)), half_extent)


def _default_boxes():
    # palm at the origin, fingers ahead along +z at +-0.04 on the closing axis
    return (
        Box.centered((0.0, 0.0, 0.0), (0.02, 0.04, 0.02)),
        Box.centered((0.0, 0.04, 0.045), (0.01, 0.005, 0.025)),
        Box.centered((0.0, -0.04, 0.045), (0.01, 0.005, 0.025)),
    )


@dataclass(frozen=True, eq=False)
class GripperModel:
    """Parallel-jaw gripper as palm + two finger boxes, in the gripper frame.

    The gripper approaches along its local +z. ``closing_region`` is the
    volume between the fingers; its centre is the grasp centre.
    """

    boxes: tuple = field(default_factory=_default_boxes)
    closing_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    closing_region: Box = field(
        default_factory=lambda: Box.centered((0.0, 0.0, 0.045), (0.01, 0.035, 0.025)))

    def __post_init__(self):
        boxes = tuple(self.boxes)
        if len(boxes) != 3:
            raise DomainError(f"gripper needs exactly three boxes, got {len(boxes)}")
        object.__setattr__(self, "boxes", boxes)
        axis = np.array(self.closing_axis, dtype=float)
        n = np.linalg.norm(axis)
        if axis.shape != (3,) or n == 0:
            raise DomainError("closing_axis must be a non-zero 3-vector")
        axis = axis / n
        axis.setflags(write=False)
        object.__setattr__(self, "closing_axis", axis)

    @property
    def grasp_center(self) -> np.ndarray:
        return self.closing_region.pose.translation


def box_sdf(cloud: PointCloud, box: Box, parent: Pose | None = None) -> float:
    """Mean exterior distance of ``cloud`` from ``box``.

    The box lives at ``parent @ box.pose`` in the world (``parent``
    defaults to the identity).
    """
    if len(cloud) == 0:
        raise DomainError("box_sdf needs a non-empty cloud")
    world = box.pose if parent is None else compose(parent, box.pose)
    local = (cloud.points - world.translation) @ world.rotation
    return float(np.mean(np.linalg.norm(np.maximum(np.abs(local) - box.half_extent, 0.0), axis=1)))


def exterior_distance(y: np.ndarray, half_extent: np.ndarray, with_grad: bool = True):
    """Per-point ``||max(|y| - H, 0)||`` and its gradient w.r.t. ``y``.

    On the box boundary the one-sided derivative from outside is used.
    """
    s = np.sign(y)
    m = np.maximum(np.abs(y) - half_extent, 0.0)
    f = np.sqrt(np.sum(m * m, axis=-1))
    if not with_grad:
        return f, None
    outside = f > 0
    grad = s * m / np.where(outside, f, 1.0)[..., None]
    if not np.all(outside):
        inside = ~outside
        on_face = (np.abs(y[inside]) == half_extent)
        if np.any(on_face):
            face = s[inside] * on_face
            k = np.maximum(np.linalg.norm(face, axis=-1, keepdims=True), 1.0)
            grad[inside] = face / k
    return f, grad


def box_distance_batch(points: np.ndarray, t: np.ndarray, R: np.ndarray, box: Box,
                       with_grad: bool = True):
    """Mean exterior distance for a box carried by each of ``B`` gripper poses.

    Returns ``(d, grad)`` with ``d`` of shape ``(B,)`` and ``grad`` of
    shape ``(B, 6)`` (derivative w.r.t. the gripper tangent), or ``None``.
    """
    P = len(points)
    B = len(t)
    d = np.empty(B)
    grad = np.empty((B, 6)) if with_grad else None
    bt = box.pose.translation
    bR = box.pose.rotation
    H = box.half_extent
    for lo in range(0, B, _CHUNK):
        hi = min(lo + _CHUNK, B)
        # gripper-frame coordinates, (b, P, 3)
        xl = (points[None, :, :] - t[lo:hi, None, :]) @ R[lo:hi]
        y = (xl - bt) @ bR
        f, gy = exterior_distance(y, H, with_grad)
        d[lo:hi] = f.sum(axis=1) / P
        if with_grad:
            u = gy @ bR.T  # gripper frame
            grad[lo:hi, :3] = -np.einsum("bij,bj->bi", R[lo:hi], u.sum(axis=1)) / P
            grad[lo:hi, 3:] = np.cross(u, xl).sum(axis=1) / P
    return d, grad
