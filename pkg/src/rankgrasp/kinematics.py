"""Revolute serial chains: forward kinematics, geometric Jacobian,
manipulability and damped-least-squares inverse kinematics.

A chain is a list of joints; joint ``i`` sits at ``offset_i`` in the
frame left behind by joint ``i-1`` and rotates about its local ``axis_i``.
A fixed ``tool`` transform follows the last joint, and the whole chain is
mounted at ``base`` in the world.

Everything below is batched over a leading axis of joint vectors; the
single-configuration functions are thin wrappers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DomainError
from .se3 import (
    ROT_WEIGHT, Pose, hat, matrix_to_quat, quat_conjugate, quat_multiply,
    quat_to_matrix, quat_to_rotvec, se3_distance_arrays,
)

IK_DAMPING = 1e-2
IK_MAX_ITERS = 200
IK_TOL = 1e-4
IK_MAX_STEP = 0.5  # rad, per joint per iteration
IK_RESTARTS = 8


@dataclass(frozen=True, eq=False)
class SerialChain:
    offsets: np.ndarray
    axes: np.ndarray
    limits: np.ndarray
    tool: Pose = field(default_factory=Pose)
    base: Pose = field(default_factory=Pose)

    def __post_init__(self):
        offsets = np.array(self.offsets, dtype=float).reshape(-1, 3)
        axes = np.array(self.axes, dtype=float).reshape(-1, 3)
        limits = np.array(self.limits, dtype=float).reshape(-1, 2)
        D = len(offsets)
        if D < 2:
            raise DomainError(f"a chain needs at least 2 joints, got {D}")
        if len(axes) != D or len(limits) != D:
            raise DomainError("offsets, axes and limits must have one row per joint")
        norms = np.linalg.norm(axes, axis=1)
        if np.any(norms == 0):
            raise DomainError("joint axes must be non-zero")
        axes = axes / norms[:, None]
        if np.any(limits[:, 0] > limits[:, 1]):
            raise DomainError("joint limits must satisfy lo <= hi")
        for name, arr in (("offsets", offsets), ("axes", axes), ("limits", limits)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        K = hat(axes)
        K.setflags(write=False)
        object.__setattr__(self, "_K", K)
        K2 = K @ K
        K2.setflags(write=False)
        object.__setattr__(self, "_K2", K2)

    @property
    def dof(self) -> int:
        return len(self.offsets)

    @property
    def reach(self) -> float:
        """Upper bound on the distance from the first joint to the tool."""
        return float(np.linalg.norm(self.offsets[1:], axis=1).sum()
                     + np.linalg.norm(self.tool.translation))

    def mid_configuration(self) -> np.ndarray:
        return self.limits.mean(axis=1)

    @property
    def continuous(self) -> np.ndarray:
        """Joints whose limits span a full turn; these wrap instead of clamping."""
        return (self.limits[:, 1] - self.limits[:, 0]) >= 2 * np.pi - 1e-9

    def clamp(self, theta: np.ndarray) -> np.ndarray:
        lo, hi = self.limits[:, 0], self.limits[:, 1]
        wrapped = lo + np.mod(theta - lo, 2 * np.pi)
        return np.where(self.continuous, wrapped, np.clip(theta, lo, hi))


def planar_two_link(l1: float = 1.0, l2: float = 1.0) -> SerialChain:
    """Two revolute joints about z, links along x."""
    return SerialChain(
        offsets=[[0, 0, 0], [l1, 0, 0]],
        axes=[[0, 0, 1], [0, 0, 1]],
        limits=[[-np.pi, np.pi], [-np.pi, np.pi]],
        tool=Pose([l2, 0.0, 0.0]),
    )


def six_axis_arm(base: Pose | None = None) -> SerialChain:
    """A 6R arm with a spherical wrist, about 1 m of reach.

    Limits keep the elbow and wrist bent at mid-range so the default
    IK seed is away from the stretched and wrist singularities.
    """
    return SerialChain(
        offsets=[[0, 0, 0], [0, 0, 0.33], [0, 0, 0.40], [0, 0, 0.40], [0, 0, 0], [0, 0, 0]],
        axes=[[0, 0, 1], [0, 1, 0], [0, 1, 0], [0, 0, 1], [0, 1, 0], [0, 0, 1]],
        limits=[[-np.pi, np.pi], [-2.0, 2.0], [0.15, 2.8],
                [-np.pi, np.pi], [0.05, 3.05], [-np.pi, np.pi]],
        tool=Pose([0.0, 0.0, 0.10]),
        base=base or Pose(),
    )


def _check_theta(chain: SerialChain, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1:] != (chain.dof,):
        raise DomainError(f"expected {chain.dof} joint values, got shape {theta.shape}")
    return theta


def fk_batch(chain: SerialChain, theta: np.ndarray, with_joints: bool = False):
    """World-frame tool pose for each row of ``theta`` (shape ``(B, D)``).

    Returns ``(t, R)`` and, when ``with_joints``, also the world joint
    origins ``(B, D, 3)`` and axes ``(B, D, 3)``.
    """
    theta = _check_theta(chain, np.atleast_2d(theta))
    B = len(theta)
    R = np.broadcast_to(chain.base.rotation, (B, 3, 3)).copy()
    p = np.broadcast_to(chain.base.translation, (B, 3)).copy()
    origins = np.empty((B, chain.dof, 3))
    axes = np.empty((B, chain.dof, 3))
    eye = np.eye(3)
    for i in range(chain.dof):
        p = p + R @ chain.offsets[i]
        origins[:, i] = p
        axes[:, i] = R @ chain.axes[i]
        s = np.sin(theta[:, i])[:, None, None]
        c = np.cos(theta[:, i])[:, None, None]
        R = R @ (eye + s * chain._K[i] + (1.0 - c) * chain._K2[i])
    p = p + R @ chain.tool.translation
    R = R @ chain.tool.rotation
    if with_joints:
        return p, R, origins, axes
    return p, R


def jacobian_batch(chain: SerialChain, theta: np.ndarray):
    """Geometric Jacobians ``(B, 6, D)``: linear rows, then angular rows."""
    p, R, origins, axes = fk_batch(chain, theta, with_joints=True)
    Jv = np.cross(axes, p[:, None, :] - origins)
    J = np.concatenate([Jv, axes], axis=2).transpose(0, 2, 1)
    return J, p, R


def manipulability_from_jacobian(J: np.ndarray) -> np.ndarray:
    """``sqrt(det(J J^T))`` on the task block.

    Chains with fewer than six joints use the position rows only, and if
    that block is wider than it is tall the Gram matrix ``J^T J`` is used
    instead, so the value is the product of the block's singular values.
    """
    D = J.shape[-1]
    block = J if D >= 6 else J[..., :3, :]
    # singular values stay accurate near zero where det(J J^T) loses digits
    return np.prod(np.linalg.svd(block, compute_uv=False), axis=-1)


def forward_kinematics(chain: SerialChain, theta) -> Pose:
    theta = _check_theta(chain, theta)
    if theta.ndim != 1:
        raise DomainError("forward_kinematics takes one joint vector")
    p, R = fk_batch(chain, theta[None])
    return Pose.from_rotation(R[0], p[0])


def jacobian(chain: SerialChain, theta) -> np.ndarray:
    theta = _check_theta(chain, theta)
    if theta.ndim != 1:
        raise DomainError("jacobian takes one joint vector")
    return jacobian_batch(chain, theta[None])[0][0]


def manipulability(chain: SerialChain, theta) -> float:
    return float(manipulability_from_jacobian(jacobian(chain, theta)))


class IKResult(NamedTuple):
    theta: np.ndarray
    pose: Pose
    converged: bool
    iterations: int


def _dls_step(J, err, damped_eye):
    A = J @ np.swapaxes(J, 1, 2) + damped_eye
    return np.einsum("bji,bj->bi", J, np.linalg.solve(A, err[..., None])[..., 0])


def restart_seeds(chain: SerialChain, count: int) -> np.ndarray:
    """Fixed, chain-dependent joint vectors used when IK stalls."""
    rng = np.random.default_rng(0x1C)
    return rng.uniform(chain.limits[:, 0], chain.limits[:, 1], (count, chain.dof))


def solve_ik_batch(chain: SerialChain, target_t: np.ndarray, target_q: np.ndarray,
                   theta0: np.ndarray | None = None, damping: float = IK_DAMPING,
                   max_iters: int = IK_MAX_ITERS, tol: float = IK_TOL,
                   rot_weight: float = ROT_WEIGHT, restarts: int = IK_RESTARTS):
    """Damped-least-squares IK for ``B`` targets at once.

    Each row iterates ``dq = J^T (J J^T + lam I)^-1 e`` with the joint step
    capped and joint limits clamped, until its ``se3_distance`` to the
    target drops below ``tol``. ``lam`` starts at ``damping`` and adapts
    per row: it shrinks after an improving step and grows (with the step
    rejected) otherwise. A row whose damping blows up is stuck in a local
    minimum and restarts from the next of a fixed list of seeds; all
    restarts share the ``max_iters`` budget. The best iterate per row is
    returned.

    Returns ``(theta, t, q, converged, iterations, distance)``.
    """
    target_t = np.atleast_2d(np.asarray(target_t, dtype=float))
    target_q = np.atleast_2d(np.asarray(target_q, dtype=float))
    B = len(target_t)
    if theta0 is None:
        theta0 = chain.mid_configuration()
    theta = chain.clamp(np.broadcast_to(_check_theta(chain, theta0), (B, chain.dof)).copy())
    seeds = restart_seeds(chain, restarts)
    # targets beyond the chain's reach cannot converge; no restarts for them
    first_joint = chain.base.translation + chain.base.rotation @ chain.offsets[0]
    hopeless = np.linalg.norm(target_t - first_joint, axis=1) > chain.reach
    target_R = quat_to_matrix(target_q)
    eye = np.eye(6)

    J, p, R = jacobian_batch(chain, theta)
    q = matrix_to_quat(R)
    dist = se3_distance_arrays(p, q, target_t, target_q, rot_weight)
    best = [theta.copy(), p.copy(), q.copy(), dist.copy()]
    lam = np.full(B, float(damping))
    used = np.where(hopeless, restarts, 0)
    iters = np.zeros(B, dtype=int)
    active = dist >= tol
    for _ in range(max_iters):
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        Ja = J[idx]
        rot_err = quat_to_rotvec(matrix_to_quat(target_R[idx] @ np.swapaxes(R[idx], 1, 2)))
        err = np.concatenate([target_t[idx] - p[idx], rot_err], axis=1)
        damped = lam[idx, None, None] * eye
        dq = _dls_step(Ja, err, damped)
        # joints pinned at a limit and pushed outward drop out of the solve
        th = theta[idx]
        pinned = ~chain.continuous & (
            ((th <= chain.limits[:, 0]) & (dq < 0)) | ((th >= chain.limits[:, 1]) & (dq > 0)))
        redo = np.any(pinned, axis=1)
        if np.any(redo):
            Jm = Ja[redo] * ~pinned[redo][:, None, :]
            dq[redo] = _dls_step(Jm, err[redo], damped[redo])
        scale = np.maximum(np.abs(dq).max(axis=1) / IK_MAX_STEP, 1.0)
        trial = chain.clamp(th + dq / scale[:, None])
        iters[idx] += 1

        Jn, pn, Rn = jacobian_batch(chain, trial)
        qn = matrix_to_quat(Rn)
        dn = se3_distance_arrays(pn, qn, target_t[idx], target_q[idx], rot_weight)
        better = dn < dist[idx]
        ai = idx[better]
        theta[ai], J[ai], p[ai], R[ai], q[ai], dist[ai] = (
            trial[better], Jn[better], pn[better], Rn[better], qn[better], dn[better])
        lam[ai] = np.maximum(lam[ai] * 0.5, 1e-6)
        ri = idx[~better]
        lam[ri] = lam[ri] * 4.0

        gain = dist[idx] < best[3][idx]
        gi = idx[gain]
        best[0][gi], best[1][gi], best[2][gi], best[3][gi] = theta[gi], p[gi], q[gi], dist[gi]

        stuck = idx[(lam[idx] >= 1e6) & (dist[idx] >= tol)]
        fresh = stuck[used[stuck] < restarts]
        if len(fresh):
            theta[fresh] = seeds[used[fresh]]
            used[fresh] += 1
            lam[fresh] = damping
            Js, ps, Rs = jacobian_batch(chain, theta[fresh])
            J[fresh], p[fresh], R[fresh] = Js, ps, Rs
            q[fresh] = matrix_to_quat(Rs)
            dist[fresh] = se3_distance_arrays(ps, q[fresh], target_t[fresh], target_q[fresh], rot_weight)
        active[idx] = (best[3][idx] >= tol) & ((lam[idx] < 1e6) | (used[idx] < restarts))
    theta, p, q, dist = best
    return theta, p, q, dist < tol, iters, dist


def solve_ik(chain: SerialChain, target: Pose, theta0=None, **kwargs) -> IKResult:
    theta, t, q, ok, iters, _ = solve_ik_batch(
        chain, target.translation[None], target.quaternion[None], theta0, **kwargs)
    return IKResult(theta[0], Pose(t[0], q[0]), bool(ok[0]), int(iters[0]))

