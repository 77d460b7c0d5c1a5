"""Rigid transforms and the 6-D tangent parameterisation of grasp poses.

Quaternions are stored scalar-first ``(w, x, y, z)`` and kept on the
``w >= 0`` hemisphere. A tangent vector is ``(dt, dw)``: ``dt`` is added
to the translation in the world frame and ``dw`` is a rotation vector
applied on the right, i.e. in the gripper's own frame.

Most helpers are vectorised over leading axes so the optimiser can work
on whole batches of poses.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DomainError

ROT_WEIGHT = 0.1  # metres per radian in se3_distance
_SMALL = 1e-8


def hat(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrices for vectors of shape ``(..., 3)``."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def canonical_quat(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm == 0) or not np.all(np.isfinite(norm)):
        raise DomainError("quaternion must be finite and non-zero")
    q = q / norm
    return np.where(q[..., :1] < 0, -q, q)


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = np.moveaxis(np.asarray(a, dtype=float), -1, 0)
    bw, bx, by, bz = np.moveaxis(np.asarray(b, dtype=float), -1, 0)
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = np.moveaxis(np.asarray(q, dtype=float), -1, 0)
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1),
        np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1),
        np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1),
    ], axis=-2)


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    xyzw = Rotation.from_matrix(R.reshape(-1, 3, 3)).as_quat()
    q = np.concatenate([xyzw[:, 3:], xyzw[:, :3]], axis=1)
    return canonical_quat(q).reshape(R.shape[:-2] + (4,))


def rotvec_to_quat(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    angle = np.linalg.norm(v, axis=-1, keepdims=True)
    half = 0.5 * angle
    small = angle < _SMALL
    # sin(a/2)/a with a Taylor fallback near zero
    k = np.where(small, 0.5 - angle ** 2 / 48.0, np.sin(half) / np.where(small, 1.0, angle))
    return np.concatenate([np.cos(half), k * v], axis=-1)


def quat_to_rotvec(q: np.ndarray) -> np.ndarray:
    q = canonical_quat(q)
    w = q[..., :1]
    xyz = q[..., 1:]
    s = np.linalg.norm(xyz, axis=-1, keepdims=True)
    angle = 2.0 * np.arctan2(s, w)
    small = s < _SMALL
    k = np.where(small, 2.0 / np.where(w == 0, 1.0, w), angle / np.where(small, 1.0, s))
    return k * xyz


def so3_exp(v: np.ndarray) -> np.ndarray:
    """Rodrigues' formula for rotation vectors of shape ``(..., 3)``."""
    return quat_to_matrix(rotvec_to_quat(v))


def so3_log(R: np.ndarray) -> np.ndarray:
    return quat_to_rotvec(matrix_to_quat(R))


def rotation_angle(q_rel: np.ndarray) -> np.ndarray:
    """Geodesic angle in ``[0, pi]`` of a relative rotation quaternion."""
    q = np.asarray(q_rel, dtype=float)
    return 2.0 * np.arctan2(np.linalg.norm(q[..., 1:], axis=-1), np.abs(q[..., 0]))


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.asarray(q, dtype=float) * np.array([1.0, -1.0, -1.0, -1.0])


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Pose:
    """A rigid transform: translation in metres plus a unit quaternion."""

    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    quaternion: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float)
        if t.shape != (3,) or not np.all(np.isfinite(t)):
            raise DomainError(f"translation must be a finite 3-vector, got {t!r}")
        q = np.asarray(self.quaternion, dtype=float)
        if q.shape != (4,):
            raise DomainError(f"quaternion must have 4 entries, got {q!r}")
        object.__setattr__(self, "translation", _frozen(t))
        object.__setattr__(self, "quaternion", _frozen(canonical_quat(q)))

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, T: np.ndarray) -> "Pose":
        T = np.asarray(T, dtype=float)
        return cls(T[:3, 3], matrix_to_quat(T[:3, :3]))

    @classmethod
    def from_rotation(cls, R: np.ndarray, t=(0.0, 0.0, 0.0)) -> "Pose":
        return cls(np.asarray(t, dtype=float), matrix_to_quat(R))

    @classmethod
    def from_rotvec(cls, rotvec, t=(0.0, 0.0, 0.0)) -> "Pose":
        return cls(np.asarray(t, dtype=float), rotvec_to_quat(rotvec))

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.quaternion)

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def inverse(self) -> "Pose":
        return inverse(self)

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Map points given in this frame into the parent frame."""
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def __matmul__(self, other: "Pose") -> "Pose":
        return compose(self, other)

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.translation, other.translation, atol=atol, rtol=0)
            and rotation_angle(quat_multiply(quat_conjugate(self.quaternion), other.quaternion)) <= atol
        )

    def __repr__(self):
        t = ", ".join(f"{x:.6g}" for x in self.translation)
        q = ", ".join(f"{x:.6g}" for x in self.quaternion)
        return f"Pose(t=[{t}], q=[{q}])"


def compose(a: Pose, b: Pose) -> Pose:
    return Pose(a.translation + a.rotation @ b.translation, quat_multiply(a.quaternion, b.quaternion))


def inverse(p: Pose) -> Pose:
    R = p.rotation
    return Pose(-R.T @ p.translation, quat_conjugate(p.quaternion))


def retract(g: Pose, xi) -> Pose:
    """Move ``g`` along tangent ``xi = (dt, dw)``."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (6,) or not np.all(np.isfinite(xi)):
        raise DomainError("tangent vector must be a finite 6-vector")
    t, q = retract_arrays(g.translation[None], g.quaternion[None], xi[None])
    return Pose(t[0], q[0])


def retract_arrays(t: np.ndarray, q: np.ndarray, xi: np.ndarray):
    """Batched :func:`retract` on ``(B, 3)`` translations and ``(B, 4)`` quaternions."""
    xi = np.asarray(xi, dtype=float)
    t_new = np.asarray(t, dtype=float) + xi[..., :3]
    q_new = canonical_quat(quat_multiply(q, rotvec_to_quat(xi[..., 3:])))
    return t_new, q_new


def relative_rotvec_arrays(qa: np.ndarray, qb: np.ndarray) -> np.ndarray:
    """Rotation vector of ``R_a^T R_b``."""
    return quat_to_rotvec(quat_multiply(quat_conjugate(qa), qb))


def se3_distance(a: Pose, b: Pose, rot_weight: float = ROT_WEIGHT) -> float:
    """``|t_a - t_b| + rot_weight * angle(R_a^T R_b)``."""
    return float(se3_distance_arrays(a.translation, a.quaternion, b.translation, b.quaternion, rot_weight))


def se3_distance_arrays(ta, qa, tb, qb, rot_weight: float = ROT_WEIGHT) -> np.ndarray:
    dt = np.linalg.norm(np.asarray(ta) - np.asarray(tb), axis=-1)
    rel = quat_multiply(quat_conjugate(qa), qb)
    return dt + rot_weight * rotation_angle(rel)


def look_rotation(approach: np.ndarray, closing_hint: np.ndarray) -> np.ndarray:
    """Rotation whose z column is ``approach`` and y column is as close to
    ``closing_hint`` as orthogonality allows. Batched over leading axes."""
    z = np.asarray(approach, dtype=float)
    z = z / np.linalg.norm(z, axis=-1, keepdims=True)
    h = np.asarray(closing_hint, dtype=float)
    y = h - np.sum(h * z, axis=-1, keepdims=True) * z
    ny = np.linalg.norm(y, axis=-1, keepdims=True)
    if np.any(ny < 1e-9):
        raise DomainError("closing hint is parallel to the approach direction")
    y = y / ny
    x = np.cross(y, z)
    return np.stack([x, y, z], axis=-1)
