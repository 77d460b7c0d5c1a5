"""Scene documents (``grace-scene/1``) and result records.

A scene is a JSON document. Point clouds are referenced by path (ASCII
PLY or XYZ, resolved relative to the scene file) or given inline as
``{"points": [...], "normals": [...]}``. Minimal example::

    {
      "schema": "grace-scene/1",
      "target_cloud": "mug.ply",
      "intent": "handover",
      "affordance_regions": [
        {"center": [0.5, 0, 0.1], "half_extent": [0.02, 0.02, 0.03], "intents": ["handover"]}
      ]
    }

Omitted sections take defaults: the three-box parallel-jaw gripper, the
six-axis arm at the origin, the stability / execution+collision /
intention hierarchy and default classifier parameters.

Results are written as a JSON document plus a CSV twin with one row per
grasp.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .cloud import PointCloud, estimate_normals, load_cloud, write_ply
from .criteria import DEFAULT_CRITERIA, AffordanceRegion, ClassifierParams
from .errors import ConfigurationError, DomainError, SceneValidationError
from .geometry import Box, GripperModel
from .hierarchy import RuleHierarchy
from .kinematics import SerialChain, six_axis_arm
from .se3 import Pose

SCENE_SCHEMA = "grace-scene/1"
RESULT_SCHEMA = "grace-result/1"


@dataclass(frozen=True, eq=False)
class Scene:
    target_cloud: PointCloud
    obstacle_cloud: PointCloud = field(default_factory=PointCloud.empty)
    gripper: GripperModel = field(default_factory=GripperModel)
    chain: SerialChain | None = field(default_factory=six_axis_arm)
    affordance_regions: tuple = ()
    intent: str | None = None
    params: ClassifierParams = field(default_factory=ClassifierParams)
    hierarchy: RuleHierarchy = field(default_factory=RuleHierarchy.default)
    ik_seed: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "affordance_regions", tuple(self.affordance_regions))

    def with_hierarchy(self, hierarchy: RuleHierarchy) -> "Scene":
        return replace(self, hierarchy=hierarchy)

    def with_params(self, **changes) -> "Scene":
        return replace(self, params=self.params.replace(**changes))

    def validate(self, registry=None, location=None) -> "Scene":
        """Check the scene can evaluate every criterion its hierarchy names."""
        known = set(DEFAULT_CRITERIA) | set(registry or ())
        if len(self.target_cloud) == 0:
            raise SceneValidationError("target cloud is empty", "target_cloud", location)
        for i, rule in enumerate(self.hierarchy.rules):
            for j, cid in enumerate(rule.criteria):
                if cid not in known:
                    raise SceneValidationError(
                        f"unknown criterion identifier {cid!r}", f"hierarchy[{i}][{j}]", location)
        ids = set(self.hierarchy.criteria)
        if "intention" in ids and not self.intent:
            raise SceneValidationError(
                "hierarchy uses 'intention' but the scene declares no intent", "intent", location)
        if "execution" in ids and self.chain is None:
            raise SceneValidationError(
                "hierarchy uses 'execution' but the scene has no chain", "chain", location)
        if "stability" in ids and not self.target_cloud.has_normals:
            raise SceneValidationError(
                "hierarchy uses 'stability' but the target cloud has no normals", "target_cloud", location)
        return self


# --- parsing helpers -------------------------------------------------------

def _vec(value, n, where, location, positive=False):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise SceneValidationError(f"expected {n} numbers, got {value!r}", where, location) from None
    if arr.shape != (n,) or not np.all(np.isfinite(arr)):
        raise SceneValidationError(f"expected {n} finite numbers, got {value!r}", where, location)
    if positive and not np.all(arr > 0):
        raise SceneValidationError(f"entries must be positive, got {value!r}", where, location)
    return arr


def _obj(value, where, location):
    if not isinstance(value, dict):
        raise SceneValidationError(f"expected an object, got {type(value).__name__}", where, location)
    return value


def _pose(doc, where, location):
    doc = _obj(doc, where, location)
    t = _vec(doc.get("translation", [0, 0, 0]), 3, f"{where}.translation", location)
    q = _vec(doc.get("quaternion", [1, 0, 0, 0]), 4, f"{where}.quaternion", location)
    if np.linalg.norm(q) == 0:
        raise SceneValidationError("quaternion is zero", f"{where}.quaternion", location)
    return Pose(t, q)


def _box(doc, where, location):
    doc = _obj(doc, where, location)
    center = _vec(doc.get("center", [0, 0, 0]), 3, f"{where}.center", location)
    q = _vec(doc.get("quaternion", [1, 0, 0, 0]), 4, f"{where}.quaternion", location)
    if "half_extent" not in doc:
        raise SceneValidationError("missing half_extent", where, location)
    h = _vec(doc["half_extent"], 3, f"{where}.half_extent", location, positive=True)
    return Box(Pose(center, q), h)


def _cloud(doc, where, base_dir, location):
    if isinstance(doc, str):
        doc = {"path": doc}
    doc = _obj(doc, where, location)
    if "path" in doc:
        path = Path(doc["path"])
        if not path.is_absolute():
            path = base_dir / path
        return load_cloud(path)  # OSError propagates
    if "points" not in doc:
        raise SceneValidationError("cloud needs 'path' or 'points'", where, location)
    try:
        pts = np.array(doc["points"], dtype=float).reshape(-1, 3)
        normals = None if doc.get("normals") is None else np.array(doc["normals"], dtype=float).reshape(-1, 3)
        return PointCloud(pts, normals)
    except (ValueError, DomainError) as exc:
        raise SceneValidationError(str(exc), where, location) from None


def _chain(doc, where, location):
    doc = _obj(doc, where, location)
    joints = doc.get("joints")
    if not isinstance(joints, list) or len(joints) < 2:
        raise SceneValidationError("need a list of at least two joints", f"{where}.joints", location)
    offsets, axes, limits = [], [], []
    for i, j in enumerate(joints):
        jw = f"{where}.joints[{i}]"
        j = _obj(j, jw, location)
        offsets.append(_vec(j.get("offset", [0, 0, 0]), 3, f"{jw}.offset", location))
        if "axis" not in j:
            raise SceneValidationError("missing axis", jw, location)
        axes.append(_vec(j["axis"], 3, f"{jw}.axis", location))
        lim = _vec(j.get("limits", [-np.pi, np.pi]), 2, f"{jw}.limits", location)
        if lim[0] > lim[1]:
            raise SceneValidationError("limits must satisfy lo <= hi", f"{jw}.limits", location)
        limits.append(lim)
    try:
        return SerialChain(
            offsets, axes, limits,
            tool=_pose(doc.get("tool", {}), f"{where}.tool", location),
            base=_pose(doc.get("base", {}), f"{where}.base", location),
        )
    except DomainError as exc:
        raise SceneValidationError(str(exc), where, location) from None


def _gripper(doc, where, location):
    doc = _obj(doc, where, location)
    default = GripperModel()
    boxes = default.boxes
    if "boxes" in doc:
        if not isinstance(doc["boxes"], list) or len(doc["boxes"]) != 3:
            raise SceneValidationError("gripper needs exactly three boxes", f"{where}.boxes", location)
        boxes = tuple(_box(b, f"{where}.boxes[{i}]", location) for i, b in enumerate(doc["boxes"]))
    axis = default.closing_axis
    if "closing_axis" in doc:
        axis = _vec(doc["closing_axis"], 3, f"{where}.closing_axis", location)
        if np.linalg.norm(axis) == 0:
            raise SceneValidationError("closing axis is zero", f"{where}.closing_axis", location)
    region = default.closing_region
    if "closing_region" in doc:
        region = _box(doc["closing_region"], f"{where}.closing_region", location)
    return GripperModel(boxes, axis, region)


def scene_from_dict(doc: dict, base_dir=".", location=None, registry=None) -> Scene:
    doc = _obj(doc, "<root>", location)
    base_dir = Path(base_dir)
    schema = doc.get("schema")
    if schema != SCENE_SCHEMA:
        raise SceneValidationError(f"expected {SCENE_SCHEMA!r}, got {schema!r}", "schema", location)
    if "target_cloud" not in doc:
        raise SceneValidationError("missing target cloud", "target_cloud", location)
    target = _cloud(doc["target_cloud"], "target_cloud", base_dir, location)
    obstacles = PointCloud.empty()
    if doc.get("obstacle_cloud") is not None:
        obstacles = _cloud(doc["obstacle_cloud"], "obstacle_cloud", base_dir, location)

    params_doc = _obj(doc.get("params", {}), "params", location)
    try:
        params = ClassifierParams().replace(**params_doc)
    except (ConfigurationError, DomainError, TypeError) as exc:
        raise SceneValidationError(str(exc), "params", location) from None

    hierarchy = RuleHierarchy.default()
    if "hierarchy" in doc:
        rules = doc["hierarchy"]
        if (not isinstance(rules, list) or not rules
                or not all(isinstance(r, list) and r and all(isinstance(c, str) for c in r) for r in rules)):
            raise SceneValidationError("expected a non-empty list of non-empty lists of criterion ids",
                                       "hierarchy", location)
        hierarchy = RuleHierarchy.from_lists(rules)

    if len(target) and not target.has_normals and "stability" in hierarchy.criteria:
        ne = _obj(doc.get("normal_estimation", {}), "normal_estimation", location)
        k = int(ne.get("k", 16))
        viewpoint = ne.get("viewpoint")
        try:
            target = estimate_normals(target, k=min(k, len(target)) if len(target) >= 3 else k,
                                      viewpoint=viewpoint)
        except DomainError as exc:
            raise SceneValidationError(str(exc), "normal_estimation", location) from None

    chain = six_axis_arm()
    ik_seed = None
    if "chain" in doc:
        chain = None if doc["chain"] is None else _chain(doc["chain"], "chain", location)
        if chain is not None and doc["chain"].get("ik_seed") is not None:
            ik_seed = _vec(doc["chain"]["ik_seed"], chain.dof, "chain.ik_seed", location)

    regions = []
    raw_regions = doc.get("affordance_regions", [])
    if not isinstance(raw_regions, list):
        raise SceneValidationError("expected a list", "affordance_regions", location)
    for i, r in enumerate(raw_regions):
        where = f"affordance_regions[{i}]"
        box = _box(r, where, location)
        intents = r.get("intents")
        if not isinstance(intents, list) or not intents or not all(isinstance(x, str) for x in intents):
            raise SceneValidationError("need a non-empty list of intent labels", f"{where}.intents", location)
        regions.append(AffordanceRegion(box, tuple(intents)))

    intent = doc.get("intent")
    if intent is not None and not isinstance(intent, str):
        raise SceneValidationError("intent must be a string", "intent", location)

    gripper = GripperModel()
    if doc.get("gripper") is not None:
        gripper = _gripper(doc["gripper"], "gripper", location)

    scene = Scene(target, obstacles, gripper, chain, tuple(regions), intent or None, params,
                  hierarchy, ik_seed, str(doc.get("name", "")))
    return scene.validate(registry, location)


def load_scene(path, registry=None) -> Scene:
    """Read and validate a scene document. Missing files raise ``OSError``."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SceneValidationError(f"invalid JSON: {exc}", None, str(path)) from None
    return scene_from_dict(doc, path.parent, str(path), registry)


# --- serialisation ---------------------------------------------------------

def _pose_doc(p: Pose) -> dict:
    return {"translation": p.translation.tolist(), "quaternion": p.quaternion.tolist()}


def _box_doc(b: Box) -> dict:
    return {"center": b.pose.translation.tolist(), "quaternion": b.pose.quaternion.tolist(),
            "half_extent": b.half_extent.tolist()}


def _cloud_inline(c: PointCloud) -> dict:
    doc = {"points": c.points.tolist()}
    if c.has_normals:
        doc["normals"] = c.normals.tolist()
    return doc


def scene_to_dict(scene: Scene, target_ref=None, obstacle_ref=None) -> dict:
    doc: dict[str, Any] = {"schema": SCENE_SCHEMA}
    if scene.name:
        doc["name"] = scene.name
    doc["target_cloud"] = target_ref if target_ref is not None else _cloud_inline(scene.target_cloud)
    doc["obstacle_cloud"] = obstacle_ref if obstacle_ref is not None else _cloud_inline(scene.obstacle_cloud)
    g = scene.gripper
    doc["gripper"] = {"boxes": [_box_doc(b) for b in g.boxes], "closing_axis": g.closing_axis.tolist(),
                      "closing_region": _box_doc(g.closing_region)}
    if scene.chain is None:
        doc["chain"] = None
    else:
        c = scene.chain
        doc["chain"] = {
            "base": _pose_doc(c.base), "tool": _pose_doc(c.tool),
            "joints": [{"offset": o.tolist(), "axis": a.tolist(), "limits": lim.tolist()}
                       for o, a, lim in zip(c.offsets, c.axes, c.limits)],
        }
        if scene.ik_seed is not None:
            doc["chain"]["ik_seed"] = np.asarray(scene.ik_seed).tolist()
    doc["affordance_regions"] = [dict(_box_doc(r.box), intents=list(r.intents))
                                 for r in scene.affordance_regions]
    doc["intent"] = scene.intent
    doc["params"] = scene.params.to_dict()
    doc["hierarchy"] = scene.hierarchy.as_lists()
    return doc


def save_scene(scene: Scene, path, inline_clouds: bool = False) -> Path:
    """Write a scene document; clouds go to sibling PLY files unless inlined."""
    path = Path(path)
    target_ref = obstacle_ref = None
    if not inline_clouds:
        target_ref = f"{path.stem}.target.ply"
        obstacle_ref = f"{path.stem}.obstacles.ply"
        write_ply(scene.target_cloud, path.parent / target_ref)
        write_ply(scene.obstacle_cloud, path.parent / obstacle_ref)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scene_to_dict(scene, target_ref, obstacle_ref), fh, indent=1)
        fh.write("\n")
    return path


# --- results ---------------------------------------------------------------

@dataclass
class GraspResult:
    translation: np.ndarray
    quaternion: np.ndarray
    utility: float
    lower_bound: float
    probabilities: dict
    rank_distribution: list
    origin: str = "sampled"
    iteration: int = 0

    @property
    def pose(self) -> Pose:
        return Pose(self.translation, self.quaternion)


@dataclass
class ResultRecord:
    grasps: list
    hierarchy: list
    config: dict = field(default_factory=dict)
    seed: int = 0
    timings: dict | None = None

    def __post_init__(self):
        us = [g.utility for g in self.grasps]
        if any(a < b for a, b in zip(us, us[1:])):
            raise DomainError("grasps must be sorted by utility, highest first")


def _csv_columns(record: ResultRecord) -> list[str]:
    ids = [c for rule in record.hierarchy for c in rule]
    ids = list(dict.fromkeys(ids))
    n_ranks = 2 ** len(record.hierarchy) if len(record.hierarchy) <= 16 else 0
    return (["index", "tx", "ty", "tz", "qw", "qx", "qy", "qz", "utility", "lower_bound"]
            + [f"p_{c}" for c in ids] + [f"rank_{r}" for r in range(1, n_ranks + 1)]
            + ["origin", "iteration"])


def save_results(record: ResultRecord, path) -> tuple[Path, Path]:
    """Write ``path`` (JSON) and its ``.csv`` twin. Returns both paths."""
    path = Path(path)
    csv_path = path.with_suffix(".csv")
    doc = {
        "schema": RESULT_SCHEMA,
        "seed": record.seed,
        "hierarchy": record.hierarchy,
        "config": record.config,
        "grasps": [
            {"translation": np.asarray(g.translation).tolist(), "quaternion": np.asarray(g.quaternion).tolist(),
             "utility": g.utility, "lower_bound": g.lower_bound, "probabilities": g.probabilities,
             "rank_distribution": list(g.rank_distribution), "origin": g.origin, "iteration": g.iteration}
            for g in record.grasps
        ],
    }
    if record.timings is not None:
        doc["timings"] = record.timings
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")
        cols = _csv_columns(record)
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for i, g in enumerate(record.grasps):
                row = [i, *map(repr, map(float, g.translation)), *map(repr, map(float, g.quaternion)),
                       repr(float(g.utility)), repr(float(g.lower_bound))]
                row += [repr(float(g.probabilities[c[2:]])) for c in cols if c.startswith("p_")]
                row += [repr(float(x)) for x in g.rank_distribution]
                row += [g.origin, g.iteration]
                w.writerow(row)
    except OSError as exc:
        raise OSError(f"could not write results to {path}: {exc}") from exc
    return path, csv_path


def load_results(path) -> ResultRecord:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema") != RESULT_SCHEMA:
        raise SceneValidationError(f"expected {RESULT_SCHEMA!r}", "schema", str(path))
    grasps = [
        GraspResult(np.array(g["translation"]), np.array(g["quaternion"]), g["utility"], g["lower_bound"],
                    g["probabilities"], g["rank_distribution"], g["origin"], g["iteration"])
        for g in doc["grasps"]
    ]
    return ResultRecord(grasps, doc["hierarchy"], doc.get("config", {}), doc.get("seed", 0), doc.get("timings"))
