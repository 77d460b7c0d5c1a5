"""Grasp search: initial samplers, the evolution-strategy optimiser with an
inner gradient-ascent loop, and the sample-and-filter baseline.

Candidates are ranked by expected utility ``U`` (rank preserving); the
gradient steps climb the log lower bound ``L`` instead, which is smooth
and decomposes over criteria.

Randomness is drawn from per-pose streams keyed on ``(seed, purpose,
iteration, index)`` so results do not depend on batch layout.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .criteria import resolve_criteria
from .errors import ConfigurationError, DomainError
from .hierarchy import PROB_FLOOR, RuleHierarchy, expected_utility, rank_distribution
from .scene import GraspResult, ResultRecord
from .se3 import Pose, canonical_quat, look_rotation, matrix_to_quat, retract_arrays

_SAMPLE_STREAM = 1
_PERTURB_STREAM = 2


def default_covariance(trans_std: float = 0.01, rot_std: float = 0.05) -> np.ndarray:
    return np.diag([trans_std ** 2] * 3 + [rot_std ** 2] * 3)


@dataclass(frozen=True, eq=False)
class OptimizerConfig:
    outer_iters: int = 10       # T
    inner_steps: int = 5        # K
    step_size: float = 0.01     # eta
    covariance: np.ndarray = field(default_factory=default_covariance)
    top_q: int = 50
    seed: int = 0
    batch: int = 50
    max_step: float = 0.005     # cap on the tangent-step norm, None disables
    prob_floor: float = PROB_FLOOR

    def __post_init__(self):
        if int(self.outer_iters) != self.outer_iters or self.outer_iters < 1:
            raise DomainError(f"outer_iters must be an integer >= 1, got {self.outer_iters}")
        if int(self.inner_steps) != self.inner_steps or self.inner_steps < 0:
            raise DomainError(f"inner_steps must be an integer >= 0, got {self.inner_steps}")
        if not self.step_size > 0:
            raise DomainError(f"step_size must be positive, got {self.step_size}")
        if int(self.top_q) != self.top_q or self.top_q < 1:
            raise DomainError(f"top_q must be an integer >= 1, got {self.top_q}")
        if int(self.batch) != self.batch or self.batch < 1:
            raise DomainError(f"batch must be an integer >= 1, got {self.batch}")
        if self.max_step is not None and not self.max_step > 0:
            raise DomainError("max_step must be positive or None")
        cov = np.array(self.covariance, dtype=float)
        if cov.shape != (6, 6) or not np.all(np.isfinite(cov)):
            raise DomainError("covariance must be a finite 6x6 matrix")
        if not np.allclose(cov, cov.T, atol=1e-12, rtol=0):
            raise DomainError("covariance must be symmetric")
        w = np.linalg.eigvalsh(cov)
        if w.min() < -1e-12 * max(1.0, w.max()):
            raise DomainError("covariance must be positive semidefinite")
        cov.setflags(write=False)
        object.__setattr__(self, "covariance", cov)

    def noise_factor(self) -> np.ndarray:
        """``F`` with ``F F^T = covariance``."""
        w, V = np.linalg.eigh(self.covariance)
        return V * np.sqrt(np.clip(w, 0.0, None))

    def to_dict(self) -> dict:
        return {"outer_iters": self.outer_iters, "inner_steps": self.inner_steps,
                "step_size": self.step_size, "covariance": self.covariance.tolist(),
                "top_q": self.top_q, "seed": self.seed, "batch": self.batch,
                "max_step": self.max_step, "prob_floor": self.prob_floor}


@dataclass(frozen=True)
class SamplerSpec:
    """How initial grasps are drawn.

    ``surface-antipodal``: approach a random target point against its
    normal from ``standoff`` metres, rolled about the approach axis by up to
    ``roll_jitter`` radians. ``uniform-box``: uniform translations in
    ``bounds`` with uniformly random orientation. ``file``: poses read from
    ``path``.
    """

    kind: str = "surface-antipodal"
    standoff: float = 0.05
    roll_jitter: float = np.pi
    bounds: tuple | None = None
    path: str | None = None

    KINDS = ("surface-antipodal", "uniform-box", "file")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise DomainError(f"unknown sampler kind {self.kind!r}; expected one of {self.KINDS}")
        if self.kind == "surface-antipodal":
            if not self.standoff >= 0 or not self.roll_jitter >= 0:
                raise DomainError("standoff and roll_jitter must be non-negative")
        if self.kind == "uniform-box":
            b = np.asarray(self.bounds, dtype=float) if self.bounds is not None else None
            if b is None or b.shape != (2, 3) or np.any(b[0] > b[1]):
                raise DomainError("uniform-box needs bounds ((xmin, ymin, zmin), (xmax, ymax, zmax))")
        if self.kind == "file" and not self.path:
            raise DomainError("file sampler needs a path")


@dataclass
class GraspBatch:
    """Poses with their scores and provenance, stored as parallel arrays."""

    translations: np.ndarray          # (M, 3)
    quaternions: np.ndarray           # (M, 4)
    probabilities: dict               # criterion id -> (M,)
    rule_probabilities: np.ndarray    # (M, N)
    utility: np.ndarray               # (M,)
    lower_bound: np.ndarray           # (M,)
    iteration: np.ndarray             # (M,) iteration that produced the pose
    origin: np.ndarray                # (M,) "sampled" or "perturbed"
    hierarchy: RuleHierarchy
    stats: list = field(default_factory=list)
    evaluations: int = 0

    def __len__(self):
        return len(self.utility)

    @property
    def poses(self) -> list[Pose]:
        return [Pose(t, q) for t, q in zip(self.translations, self.quaternions)]

    def take(self, idx) -> "GraspBatch":
        idx = np.asarray(idx, dtype=int)
        return GraspBatch(
            self.translations[idx], self.quaternions[idx],
            {k: v[idx] for k, v in self.probabilities.items()},
            self.rule_probabilities[idx], self.utility[idx], self.lower_bound[idx],
            self.iteration[idx], self.origin[idx], self.hierarchy, list(self.stats), self.evaluations)

    def concat(self, other: "GraspBatch") -> "GraspBatch":
        return GraspBatch(
            np.concatenate([self.translations, other.translations]),
            np.concatenate([self.quaternions, other.quaternions]),
            {k: np.concatenate([v, other.probabilities[k]]) for k, v in self.probabilities.items()},
            np.concatenate([self.rule_probabilities, other.rule_probabilities]),
            np.concatenate([self.utility, other.utility]),
            np.concatenate([self.lower_bound, other.lower_bound]),
            np.concatenate([self.iteration, other.iteration]),
            np.concatenate([self.origin, other.origin]),
            self.hierarchy, list(self.stats), self.evaluations + other.evaluations)

    def sorted(self) -> "GraspBatch":
        """Descending by ``U``; ties keep their current order."""
        return self.take(np.argsort(-self.utility, kind="stable"))

    def top(self, q: int) -> "GraspBatch":
        return self.sorted().take(np.arange(min(q, len(self))))

    def to_record(self, config: dict | None = None, seed: int = 0, timings=None) -> ResultRecord:
        ids = list(self.probabilities)
        grasps = []
        n = self.hierarchy.n_rules
        for i in range(len(self)):
            dist = rank_distribution(self.rule_probabilities[i]).tolist() if n <= 16 else []
            grasps.append(GraspResult(
                self.translations[i].copy(), self.quaternions[i].copy(), float(self.utility[i]),
                float(self.lower_bound[i]), {c: float(self.probabilities[c][i]) for c in ids},
                dist, str(self.origin[i]), int(self.iteration[i])))
        return ResultRecord(grasps, self.hierarchy.as_lists(), config or {}, seed, timings)


# --- evaluation ------------------------------------------------------------

def _criteria_for(hierarchy: RuleHierarchy, criteria):
    return resolve_criteria(hierarchy.criteria, criteria)


def evaluate(t, q, scene, hierarchy: RuleHierarchy, criteria=None, with_grad=False,
             prob_floor: float = PROB_FLOOR):
    """Score poses. Returns ``(probs, rule_probs, U, L, grad_L)``.

    ``grad_L`` is ``sum_j grad p_j / max(p_j, prob_floor)`` or ``None``.
    """
    evaluators = _criteria_for(hierarchy, criteria)
    # a criterion listed under several rules contributes one log factor per listing
    listings = {cid: sum(r.criteria.count(cid) for r in hierarchy.rules) for cid in evaluators}
    t = np.asarray(t, dtype=float).reshape(-1, 3)
    q = np.asarray(q, dtype=float).reshape(-1, 4)
    probs = {}
    L = np.zeros(len(t))
    grad = np.zeros((len(t), 6)) if with_grad else None
    for cid, ev in evaluators.items():
        p, g = ev.evaluate_batch(t, q, scene, with_grad=with_grad)
        p = np.asarray(p, dtype=float)
        if p.shape != (len(t),) or np.any(~((p >= 0) & (p <= 1))):
            raise DomainError(f"criterion {cid!r} returned probabilities outside [0, 1]")
        probs[cid] = p
        clamped = np.maximum(p, prob_floor)
        L += listings[cid] * np.log(clamped)
        if with_grad:
            grad += listings[cid] * np.asarray(g, dtype=float) / clamped[:, None]
    rule_probs = hierarchy.rule_probabilities(probs)
    U = expected_utility(rule_probs)
    return probs, rule_probs, np.atleast_1d(U), L, grad


def make_batch(t, q, scene, hierarchy, criteria=None, iteration=0, origin="sampled") -> GraspBatch:
    t = np.asarray(t, dtype=float).reshape(-1, 3)
    q = np.asarray(q, dtype=float).reshape(-1, 4)
    probs, rule_probs, U, L, _ = evaluate(t, q, scene, hierarchy, criteria)
    M = len(t)
    return GraspBatch(t, q, probs, rule_probs, U, L, np.full(M, iteration, dtype=int),
                      np.full(M, origin, dtype=object), hierarchy, [], M)


# --- samplers --------------------------------------------------------------

def _pose_stream(seed: int, purpose: int, iteration: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, purpose, iteration, index])


def _perpendicular(z: np.ndarray) -> np.ndarray:
    # helper axis least aligned with each approach direction
    axes = np.eye(3)[np.argmin(np.abs(z), axis=-1)]
    return axes


def _read_pose_file(path) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        if path.suffix.lower() == ".csv":
            rows = list(csv.DictReader(fh))
            t = [[float(r["tx"]), float(r["ty"]), float(r["tz"])] for r in rows]
            q = [[float(r["qw"]), float(r["qx"]), float(r["qy"]), float(r["qz"])] for r in rows]
        else:
            doc = json.load(fh)
            items = doc.get("grasps", doc.get("poses")) if isinstance(doc, dict) else doc
            if not isinstance(items, list):
                raise DomainError(f"{path}: expected a list of poses")
            t = [g["translation"] for g in items]
            q = [g["quaternion"] for g in items]
    t = np.array(t, dtype=float).reshape(-1, 3)
    q = canonical_quat(np.array(q, dtype=float).reshape(-1, 4)) if len(q) else np.zeros((0, 4))
    return t, q


def sample_poses(spec: SamplerSpec, scene, n: int, seed: int):
    """Draw ``n`` raw poses; returns ``(translations, quaternions)``."""
    if int(n) != n or n < 1:
        raise DomainError(f"sample count must be an integer >= 1, got {n}")
    n = int(n)
    if spec.kind == "file":
        t, q = _read_pose_file(spec.path)
        if len(t) == 0:
            raise DomainError(f"{spec.path}: no poses")
        return t[:n], q[:n]

    streams = [_pose_stream(seed, _SAMPLE_STREAM, 0, i) for i in range(n)]
    if spec.kind == "uniform-box":
        lo, hi = np.asarray(spec.bounds, dtype=float)
        t = np.empty((n, 3))
        q = np.empty((n, 4))
        for i, rng in enumerate(streams):
            t[i] = lo + (hi - lo) * rng.random(3)
            q[i] = rng.normal(size=4)
        return t, canonical_quat(q)

    cloud = scene.target_cloud
    if len(cloud) == 0:
        raise DomainError("surface sampler needs a non-empty target cloud")
    if not cloud.has_normals:
        from .cloud import estimate_normals
        cloud = estimate_normals(cloud, k=min(16, len(cloud)))
    idx = np.empty(n, dtype=int)
    roll = np.empty(n)
    for i, rng in enumerate(streams):
        idx[i] = rng.integers(len(cloud))
        roll[i] = rng.uniform(-spec.roll_jitter, spec.roll_jitter)
    normal = cloud.normals[idx]
    approach = -normal
    R0 = look_rotation(approach, _perpendicular(approach))
    c, s = np.cos(roll), np.sin(roll)
    Rz = np.zeros((n, 3, 3))
    Rz[:, 0, 0], Rz[:, 0, 1], Rz[:, 1, 0], Rz[:, 1, 1], Rz[:, 2, 2] = c, -s, s, c, 1.0
    R = R0 @ Rz
    t = cloud.points[idx] + spec.standoff * normal
    return t, matrix_to_quat(R)


def sample_initial(spec: SamplerSpec, scene, n: int, seed: int, hierarchy=None,
                   criteria=None) -> GraspBatch:
    """Sample and score ``n`` initial grasps (fewer for a short pose file)."""
    hierarchy = hierarchy or scene.hierarchy
    t, q = sample_poses(spec, scene, n, seed)
    return make_batch(t, q, scene, hierarchy, criteria, 0, "sampled")


# --- optimisation ----------------------------------------------------------

def _capped(step: np.ndarray, cap) -> np.ndarray:
    if cap is None:
        return step
    norm = np.linalg.norm(step, axis=1, keepdims=True)
    return np.where(norm > cap, step * (cap / np.where(norm > 0, norm, 1.0)), step)


def inner_gradient_ascent(batch: GraspBatch, scene, hierarchy=None, K: int = 5, eta: float = 0.01,
                          criteria=None, max_step=0.005, prob_floor: float = PROB_FLOOR) -> GraspBatch:
    """``K`` capped retract steps along ``eta * grad L``; scores are refreshed."""
    if int(K) != K or K < 0:
        raise DomainError(f"K must be an integer >= 0, got {K}")
    if K == 0:
        return batch
    hierarchy = hierarchy or batch.hierarchy
    t, q = batch.translations, batch.quaternions
    evals = 0
    for _ in range(K):
        _, _, _, _, grad = evaluate(t, q, scene, hierarchy, criteria, True, prob_floor)
        evals += len(t)
        t, q = retract_arrays(t, q, _capped(eta * grad, max_step))
    probs, rule_probs, U, L, _ = evaluate(t, q, scene, hierarchy, criteria, False, prob_floor)
    evals += len(t)
    return GraspBatch(t, q, probs, rule_probs, U, L, batch.iteration.copy(), batch.origin.copy(),
                      hierarchy, list(batch.stats), batch.evaluations + evals)


def perturb(batch: GraspBatch, config: OptimizerConfig, iteration: int) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian tangent noise with covariance ``config.covariance``."""
    F = config.noise_factor()
    M = len(batch)
    z = np.empty((M, 6))
    for i in range(M):
        z[i] = _pose_stream(config.seed, _PERTURB_STREAM, iteration, i).standard_normal(6)
    xi = z @ F.T
    t, q = batch.translations.copy(), batch.quaternions.copy()
    moved = np.any(xi != 0.0, axis=1)
    if np.any(moved):
        t[moved], q[moved] = retract_arrays(t[moved], q[moved], xi[moved])
    return t, q


def _dedupe(batch: GraspBatch) -> GraspBatch:
    """Drop exact pose repeats, keeping the first occurrence."""
    keys = np.ascontiguousarray(np.hstack([batch.translations, batch.quaternions]))
    _, first = np.unique(keys.view(np.dtype((np.void, keys.dtype.itemsize * 7))), return_index=True)
    if len(first) == len(batch):
        return batch
    return batch.take(np.sort(first))


def _stats_row(iteration: int, batch: GraspBatch) -> dict:
    row = {"iteration": iteration, "best_utility": float(batch.utility[0]),
           "mean_utility": float(np.mean(batch.utility)), "evaluations": int(batch.evaluations)}
    for i, rp in enumerate(batch.rule_probabilities[0], start=1):
        row[f"best_rule_{i}"] = float(rp)
    return row


def select(candidates: GraspBatch, q: int) -> GraspBatch:
    return _dedupe(candidates).top(q)


def grace_opt(scene, hierarchy=None, config: OptimizerConfig | None = None,
              sampler: SamplerSpec | None = None, criteria=None) -> GraspBatch:
    """Evolution-strategy search ranked by ``U`` with gradient refinement on ``L``.

    Each outer iteration perturbs the current set, refines the perturbed
    copies with ``inner_steps`` gradient steps, pools them with the current
    set and keeps the best ``top_q`` by expected utility.
    """
    config = config or OptimizerConfig()
    sampler = sampler or SamplerSpec()
    hierarchy = hierarchy or scene.hierarchy
    current = sample_initial(sampler, scene, config.batch, config.seed, hierarchy, criteria)
    current = _dedupe(current).sorted()
    stats = [_stats_row(0, current)]
    for it in range(1, config.outer_iters + 1):
        t, q = perturb(current, config, it)
        fresh = make_batch(t, q, scene, hierarchy, criteria, it, "perturbed")
        fresh = inner_gradient_ascent(fresh, scene, hierarchy, config.inner_steps, config.step_size,
                                      criteria, config.max_step, config.prob_floor)
        evaluations = current.evaluations + fresh.evaluations
        current = select(current.concat(fresh), config.top_q)
        current.evaluations = evaluations
        stats.append(_stats_row(it, current))
    current.stats = stats
    return current


def filter_baseline(scene, hierarchy=None, sampler: SamplerSpec | None = None, n: int = 1000,
                    Q: int = 50, seed: int = 0, criteria=None) -> GraspBatch:
    """Score ``n`` samples once and keep the best ``Q``."""
    if int(Q) != Q or Q < 1:
        raise DomainError(f"Q must be an integer >= 1, got {Q}")
    if int(n) != n or n < Q:
        raise DomainError(f"need n >= Q, got n={n}, Q={Q}")
    sampler = sampler or SamplerSpec()
    hierarchy = hierarchy or scene.hierarchy
    batch = sample_initial(sampler, scene, n, seed, hierarchy, criteria)
    out = select(batch, Q)
    out.stats = [_stats_row(0, out)]
    return out


STATS_FIELDS = ("iteration", "best_utility", "mean_utility", "evaluations")


def write_stats(stats: list, path) -> Path:
    """Per-iteration statistics as CSV."""
    path = Path(path)
    if not stats:
        raise ConfigurationError("no statistics to write")
    cols = list(stats[0])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in stats:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return path
