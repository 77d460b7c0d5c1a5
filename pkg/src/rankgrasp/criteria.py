"""Criterion evaluators: probability that a grasp satisfies a criterion.

Every evaluator maps a batch of gripper poses (translations ``(B, 3)``,
quaternions ``(B, 4)``) and a scene to probabilities ``(B,)`` and their
gradients ``(B, 6)`` with respect to the pose tangent. The four built-in
criteria are registered under ``"stability"``, ``"execution"``,
``"collision"`` and ``"intention"``.

Stability and intention here are analytic surrogates: stability rewards
object points inside the closing region whose normals line up with the
closing axis; intention rewards a grasp centre inside an affordance region
labelled with the requested intent, and is gated to zero once the grasp
centre is more than ``gate_radius`` from the object.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Callable

import numpy as np
from scipy.special import expit
from scipy.spatial import cKDTree

from .errors import ConfigurationError, DomainError
from .geometry import Box, box_distance_batch, exterior_distance
from .kinematics import jacobian_batch, manipulability_from_jacobian, solve_ik_batch
from .se3 import Pose, quat_to_matrix, relative_rotvec_arrays, retract, se3_distance_arrays

_CHUNK = 64


@dataclass(frozen=True)
class ClassifierParams:
    reach_scale: float = 5.0            # C_m
    manip_scale: float = 50.0           # C_w
    collision_scale: float = 100.0      # C_c
    stability_scale: float = 5.0        # C_s
    intention_scale: float = 100.0      # C_n
    manip_threshold: float = 0.05
    distance_threshold: float = 0.02    # metres
    stability_threshold: float = 1.0
    affordance_radius: float = 0.05     # metres
    membership_radius: float = 0.01     # metres, width of the closing-region falloff
    pose_tolerance: float = 1e-3        # se3_distance units
    gate_radius: float = 0.03           # metres
    gate_scale: float = 200.0
    rot_weight: float = 0.1             # metres per radian
    paper_literal_collision_sign: bool = False
    collision_includes_target: bool = False

    _SCALES = ("reach_scale", "manip_scale", "collision_scale", "stability_scale",
               "intention_scale", "membership_radius", "gate_scale")

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                continue
            if not np.isfinite(v):
                raise DomainError(f"{f.name} must be finite")
            if f.name in self._SCALES and v <= 0:
                raise DomainError(f"{f.name} must be positive, got {v}")
            if v < 0:
                raise DomainError(f"{f.name} must be non-negative, got {v}")

    def replace(self, **changes) -> "ClassifierParams":
        values = asdict(self)
        unknown = set(changes) - set(values)
        if unknown:
            raise ConfigurationError(f"unknown classifier parameter(s): {sorted(unknown)}")
        values.update(changes)
        return ClassifierParams(**values)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class AffordanceRegion:
    box: Box
    intents: tuple[str, ...]

    def __post_init__(self):
        intents = tuple(self.intents)
        if not intents:
            raise DomainError("an affordance region needs at least one intent")
        object.__setattr__(self, "intents", intents)


def _pose_arrays(pose: Pose):
    return pose.translation[None], pose.quaternion[None]


class Criterion:
    """Base class; subclasses implement :meth:`evaluate_batch`."""

    identifier = "criterion"

    def evaluate_batch(self, t, q, scene, with_grad=True):
        raise NotImplementedError

    def evaluate(self, pose: Pose, scene) -> float:
        p, _ = self.evaluate_batch(*_pose_arrays(pose), scene, with_grad=False)
        return float(p[0])

    def gradient(self, pose: Pose, scene) -> np.ndarray:
        _, g = self.evaluate_batch(*_pose_arrays(pose), scene, with_grad=True)
        return g[0]

    def __repr__(self):
        return f"{type(self).__name__}({self.identifier!r})"


class ConstantCriterion(Criterion):
    def __init__(self, value: float, identifier: str = "constant"):
        if not 0.0 <= value <= 1.0:
            raise DomainError("constant probability must be in [0, 1]")
        self.value = float(value)
        self.identifier = identifier

    def evaluate_batch(self, t, q, scene, with_grad=True):
        B = len(t)
        return np.full(B, self.value), (np.zeros((B, 6)) if with_grad else None)


class FunctionCriterion(Criterion):
    """Wrap ``fn(t, q, scene) -> (p, grad)`` as a criterion."""

    def __init__(self, identifier: str, fn: Callable):
        self.identifier = identifier
        self.fn = fn

    def evaluate_batch(self, t, q, scene, with_grad=True):
        p, g = self.fn(np.asarray(t, dtype=float), np.asarray(q, dtype=float), scene)
        return np.asarray(p, dtype=float), (np.asarray(g, dtype=float) if with_grad else None)


class ExecutionCriterion(Criterion):
    """Reachability and distance from singularity, via IK.

    If the IK solution misses the grasp by more than ``pose_tolerance``,
    ``p = sigmoid(-C_m d(g, FK(theta)))``; otherwise
    ``p = sigmoid(C_w (w(theta) - w_th))``. The gradient holds the IK
    solution fixed, so the second branch has zero gradient.
    """

    identifier = "execution"

    def solve(self, t, q, scene):
        chain = getattr(scene, "chain", None)
        if chain is None:
            raise ConfigurationError("execution criterion needs a serial chain in the scene")
        seed = getattr(scene, "ik_seed", None)
        theta, tt, qt, _, _, _ = solve_ik_batch(
            chain, t, q, seed, rot_weight=scene.params.rot_weight)
        J, _, _ = jacobian_batch(chain, theta)
        return theta, tt, qt, manipulability_from_jacobian(J)

    def diagnostics(self, t, q, scene) -> dict:
        """Branch, distance, manipulability and the jump between branches.

        ``branch_gap`` is the difference between the two branch values at
        ``d = pose_tolerance``: the size of the discontinuity a grasp would
        see crossing the boundary at its current manipulability.
        """
        t = np.atleast_2d(t)
        q = np.atleast_2d(q)
        P = scene.params
        theta, tt, qt, omega = self.solve(t, q, scene)
        d = se3_distance_arrays(t, q, tt, qt, P.rot_weight)
        reached = d <= P.pose_tolerance
        gap = expit(P.manip_scale * (omega - P.manip_threshold)) - expit(-P.reach_scale * P.pose_tolerance)
        return {"theta": theta, "distance": d, "manipulability": omega,
                "reached": reached, "branch_gap": gap}

    def evaluate_batch(self, t, q, scene, with_grad=True):
        t = np.asarray(t, dtype=float)
        q = np.asarray(q, dtype=float)
        P = scene.params
        _, tt, qt, omega = self.solve(t, q, scene)
        dt = t - tt
        nt = np.linalg.norm(dt, axis=1)
        phi = relative_rotvec_arrays(q, qt)
        angle = np.linalg.norm(phi, axis=1)
        d = nt + P.rot_weight * angle
        reached = d <= P.pose_tolerance
        p_miss = expit(-P.reach_scale * d)
        p_hit = expit(P.manip_scale * (omega - P.manip_threshold))
        p = np.where(reached, p_hit, p_miss)
        if not with_grad:
            return p, None
        grad = np.zeros((len(t), 6))
        dd = np.zeros((len(t), 6))
        dd[:, :3] = dt / np.where(nt > 0, nt, 1.0)[:, None]
        dd[:, 3:] = -P.rot_weight * phi / np.where(angle > 0, angle, 1.0)[:, None]
        coef = -P.reach_scale * p_miss * (1.0 - p_miss)
        grad[~reached] = coef[~reached, None] * dd[~reached]
        return p, grad


def _obstacle_points(scene) -> np.ndarray:
    pts = scene.obstacle_cloud.points
    if scene.params.collision_includes_target:
        pts = np.vstack([pts, scene.target_cloud.points])
    return pts


def mean_box_distance(t, q, scene, with_grad=False):
    """Average over the three gripper boxes of the mean cloud distance."""
    t = np.atleast_2d(np.asarray(t, dtype=float))
    R = quat_to_matrix(np.atleast_2d(q))
    pts = _obstacle_points(scene)
    total = np.zeros(len(t))
    grad = np.zeros((len(t), 6)) if with_grad else None
    for box in scene.gripper.boxes:
        d, g = box_distance_batch(pts, t, R, box, with_grad)
        total += d
        if with_grad:
            grad += g
    total /= 3.0
    if with_grad:
        grad /= 3.0
    return total, grad


class CollisionCriterion(Criterion):
    """``sigmoid(C_c (dbar - d_th))`` where ``dbar`` is the mean box distance
    of the obstacle cloud from the three gripper boxes."""

    identifier = "collision"

    def evaluate_batch(self, t, q, scene, with_grad=True):
        P = scene.params
        B = len(t)
        if len(_obstacle_points(scene)) == 0:
            return np.ones(B), (np.zeros((B, 6)) if with_grad else None)
        dbar, gd = mean_box_distance(t, q, scene, with_grad)
        sign = -1.0 if P.paper_literal_collision_sign else 1.0
        p = expit(sign * P.collision_scale * (dbar - P.distance_threshold))
        if not with_grad:
            return p, None
        return p, (sign * P.collision_scale * p * (1.0 - p))[:, None] * gd


class StabilityCriterion(Criterion):
    """``sigmoid(C_s (A - tau_s))`` with ``A = sum_k w_k (n_k . c)^2``.

    ``w_k = exp(-rho_k^2 / (2 sigma_r^2))`` where ``rho_k`` is the exterior
    distance of object point ``k`` from the closing region and ``c`` the
    world-frame closing axis.
    """

    identifier = "stability"

    def score(self, t, q, scene, with_grad=True):
        cloud = scene.target_cloud
        if cloud.normals is None:
            raise ConfigurationError("stability criterion needs target-cloud normals")
        P = scene.params
        gripper = scene.gripper
        region = gripper.closing_region
        bt, bR, H = region.pose.translation, region.pose.rotation, region.half_extent
        c = gripper.closing_axis
        pts, nrm = cloud.points, cloud.normals
        t = np.atleast_2d(np.asarray(t, dtype=float))
        R = quat_to_matrix(np.atleast_2d(q))
        B = len(t)
        A = np.empty(B)
        grad = np.empty((B, 6)) if with_grad else None
        s2 = P.membership_radius ** 2
        for lo in range(0, B, _CHUNK):
            hi = min(lo + _CHUNK, B)
            Rb = R[lo:hi]
            xl = (pts[None] - t[lo:hi, None, :]) @ Rb
            y = (xl - bt) @ bR
            rho, drho = exterior_distance(y, H, with_grad)
            w = np.exp(-0.5 * rho ** 2 / s2)
            nl = nrm[None] @ Rb  # normals in gripper frame
            dot = nl @ c
            a = dot ** 2
            A[lo:hi] = np.sum(w * a, axis=1)
            if with_grad:
                dw_dy = (-w * rho / s2)[..., None] * drho
                u = (a[..., None] * dw_dy) @ bR.T
                grad[lo:hi, :3] = -np.einsum("bij,bj->bi", Rb, u.sum(axis=1))
                grad[lo:hi, 3:] = np.cross(u, xl).sum(axis=1)
                # closing-axis alignment term
                da = -2.0 * (w * dot)[..., None] * np.cross(nl, c)
                grad[lo:hi, 3:] += da.sum(axis=1)
        return A, grad

    def evaluate_batch(self, t, q, scene, with_grad=True):
        P = scene.params
        A, gA = self.score(t, q, scene, with_grad)
        p = expit(P.stability_scale * (A - P.stability_threshold))
        if not with_grad:
            return p, None
        return p, (P.stability_scale * p * (1.0 - p))[:, None] * gA


def _cloud_tree(cloud):
    tree = getattr(cloud, "_kdtree", None)
    if tree is None:
        tree = cKDTree(cloud.points)
        object.__setattr__(cloud, "_kdtree", tree)
    return tree


class IntentionCriterion(Criterion):
    """Affordance-region score times a proximity gate, both measured from
    the grasp centre (the centre of the closing region)."""

    identifier = "intention"

    def evaluate_batch(self, t, q, scene, with_grad=True):
        intent = getattr(scene, "intent", None)
        if not intent:
            raise ConfigurationError("intention criterion needs an intent label in the scene")
        P = scene.params
        t = np.atleast_2d(np.asarray(t, dtype=float))
        R = quat_to_matrix(np.atleast_2d(q))
        B = len(t)
        c0 = scene.gripper.grasp_center
        centre = t + R @ c0

        regions = [r for r in scene.affordance_regions if intent in r.intents]
        dbase = np.zeros((B, 3))
        if regions:
            best = np.full(B, np.inf)
            for region in regions:
                pose = region.box.pose
                y = (centre - pose.translation) @ pose.rotation
                rho, drho = exterior_distance(y, region.box.half_extent)
                closer = rho < best
                best = np.where(closer, rho, best)
                dbase = np.where(closer[:, None], drho @ pose.rotation.T, dbase)
            base = expit(P.intention_scale * (P.affordance_radius - best))
            dbase = (-P.intention_scale * base * (1.0 - base))[:, None] * dbase
        else:
            base = np.full(B, expit(-P.intention_scale * P.affordance_radius))

        if len(scene.target_cloud) == 0:
            raise ConfigurationError("intention criterion needs a non-empty target cloud")
        dist, nearest = _cloud_tree(scene.target_cloud).query(centre)
        gate = expit(P.gate_scale * (P.gate_radius - dist))
        p = base * gate
        if not with_grad:
            return p, None
        offset = centre - scene.target_cloud.points[nearest]
        dgate = (-P.gate_scale * gate * (1.0 - gate) / np.where(dist > 0, dist, 1.0))[:, None] * offset
        dp = gate[:, None] * dbase + base[:, None] * dgate
        grad = np.empty((B, 6))
        grad[:, :3] = dp
        grad[:, 3:] = np.cross(c0, np.einsum("bji,bj->bi", R, dp))
        return p, grad


DEFAULT_CRITERIA = {
    c.identifier: c
    for c in (StabilityCriterion(), ExecutionCriterion(), CollisionCriterion(), IntentionCriterion())
}


def resolve_criteria(ids, extra=None) -> dict:
    """Map identifiers to evaluators; ``extra`` overrides or extends the defaults."""
    registry = dict(DEFAULT_CRITERIA)
    if extra:
        registry.update(extra)
    missing = [i for i in ids if i not in registry]
    if missing:
        raise ConfigurationError(f"unregistered criterion identifier(s): {missing}")
    return {i: registry[i] for i in ids}


def gradient_of(evaluator: Criterion, g: Pose, scene) -> np.ndarray:
    return evaluator.gradient(g, scene)


def numerical_gradient(evaluator: Criterion, g: Pose, scene, h: float = 1e-5) -> np.ndarray:
    """Central differences of ``evaluate`` along each tangent direction."""
    grad = np.empty(6)
    for k in range(6):
        e = np.zeros(6)
        e[k] = h
        grad[k] = (evaluator.evaluate(retract(g, e), scene)
                   - evaluator.evaluate(retract(g, -e), scene)) / (2 * h)
    return grad
