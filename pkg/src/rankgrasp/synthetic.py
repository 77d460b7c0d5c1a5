"""Procedurally generated benchmark scenes.

``slot``
    An upright board standing in a U-shaped channel (two side walls and
    a floor); only the part above the walls is observed. Grasps over the
    top edge clear the walls; most others do not. A ``handover`` region
    marks one top corner.
``bowl-rim``
    An upright stick standing inside a ring of obstacle points.
``open``
    A horizontal stick with nothing around it.
``stick-free`` / ``stick-blocked``
    A horizontal stick whose head is labelled for the ``handover`` intent;
    in the blocked variant the head is caged by obstacle points.

Geometry is fixed; the seed only jitters point positions, so every scene
keeps the same layout across seeds. All scenes sit in front of the default
six-axis arm.
"""
from __future__ import annotations

import numpy as np

from .cloud import PointCloud
from .criteria import AffordanceRegion, ClassifierParams
from .errors import DomainError
from .geometry import Box
from .hierarchy import RuleHierarchy
from .kinematics import six_axis_arm
from .scene import Scene

SCENE_NAMES = ("slot", "bowl-rim", "open", "stick-free", "stick-blocked")

_JITTER = 0.0005  # metres


def box_surface(center, half_extent, spacing: float):
    """Grid samples on the six faces of an axis-aligned box, with outward normals."""
    c = np.asarray(center, dtype=float)
    h = np.asarray(half_extent, dtype=float)
    pts, nrm = [], []
    for axis in range(3):
        u, v = [a for a in range(3) if a != axis]
        nu = max(1, int(round(2 * h[u] / spacing)))
        nv = max(1, int(round(2 * h[v] / spacing)))
        su = (np.arange(nu) + 0.5) / nu * 2 * h[u] - h[u]
        sv = (np.arange(nv) + 0.5) / nv * 2 * h[v] - h[v]
        gu, gv = np.meshgrid(su, sv, indexing="ij")
        for sign in (-1.0, 1.0):
            p = np.zeros((gu.size, 3))
            p[:, u] = gu.ravel()
            p[:, v] = gv.ravel()
            p[:, axis] = sign * h[axis]
            n = np.zeros_like(p)
            n[:, axis] = sign
            pts.append(p + c)
            nrm.append(n)
    return np.vstack(pts), np.vstack(nrm)


def cylinder_surface(center, axis: int, radius: float, length: float, spacing: float):
    """Side and cap samples of a cylinder aligned with a coordinate axis."""
    c = np.asarray(center, dtype=float)
    u, v = [a for a in range(3) if a != axis]
    n_around = max(8, int(round(2 * np.pi * radius / spacing)))
    n_along = max(2, int(round(length / spacing)))
    phi = 2 * np.pi * np.arange(n_around) / n_around
    s = (np.arange(n_along) + 0.5) / n_along * length - length / 2
    P, S = np.meshgrid(phi, s, indexing="ij")
    side = np.zeros((P.size, 3))
    nside = np.zeros_like(side)
    nside[:, u] = np.cos(P).ravel()
    nside[:, v] = np.sin(P).ravel()
    side = radius * nside
    side[:, axis] = S.ravel()
    pts, nrm = [side], [nside]
    n_rings = max(1, int(round(radius / spacing)))
    for sign in (-1.0, 1.0):
        for k in range(n_rings):
            r = radius * (k + 0.5) / n_rings
            m = max(4, int(round(2 * np.pi * r / spacing)))
            a = 2 * np.pi * np.arange(m) / m
            p = np.zeros((m, 3))
            p[:, u] = r * np.cos(a)
            p[:, v] = r * np.sin(a)
            p[:, axis] = sign * length / 2
            n = np.zeros_like(p)
            n[:, axis] = sign
            pts.append(p)
            nrm.append(n)
    return np.vstack(pts) + c, np.vstack(nrm)


def ring_points(center, radius: float, tube: float, spacing: float):
    """Points filling a horizontal torus-like rim."""
    c = np.asarray(center, dtype=float)
    n_around = max(12, int(round(2 * np.pi * radius / spacing)))
    n_tube = max(6, int(round(2 * np.pi * tube / spacing)))
    a = 2 * np.pi * np.arange(n_around) / n_around
    b = 2 * np.pi * np.arange(n_tube) / n_tube
    A, Bt = np.meshgrid(a, b, indexing="ij")
    r = radius + tube * np.cos(Bt)
    p = np.stack([r * np.cos(A), r * np.sin(A), tube * np.sin(Bt)], axis=-1).reshape(-1, 3)
    return p + c


def _jittered(points, rng):
    return points + rng.normal(scale=_JITTER, size=points.shape)


def _slot(rng) -> Scene:
    base = np.array([0.50, 0.0, 0.10])          # plate bottom centre
    plate_half = np.array([0.01, 0.06, 0.07])
    wall_half = np.array([0.01, 0.09, 0.03])
    pts, nrm = box_surface(base + [0, 0, plate_half[2]], plate_half, 0.005)
    # viewed over the walls: anything below their top edge is hidden
    seen = pts[:, 2] > base[2] + 2 * wall_half[2]
    target = PointCloud(_jittered(pts[seen], rng), nrm[seen])

    gap = 0.05                                    # plate centre to inner wall face
    walls = [box_surface(base + [s * (gap + wall_half[0]), 0, wall_half[2]], wall_half, 0.01)[0]
             for s in (-1.0, 1.0)]
    floor = box_surface(base + [0, 0, -0.015], [gap + 2 * wall_half[0], 0.09, 0.01], 0.01)[0]
    obstacles = PointCloud(_jittered(np.vstack(walls + [floor]), rng))

    # a 30-point threshold needs a gentler slope than the default, or the
    # probability flips within a fraction of a millimetre
    params = ClassifierParams(distance_threshold=0.11, stability_threshold=30.0, stability_scale=0.5,
                              manip_threshold=0.02, manip_scale=200.0)
    corner = base + [0, plate_half[1] - 0.02, 2 * plate_half[2] - 0.02]
    region = AffordanceRegion(Box.centered(corner, [0.01, 0.02, 0.02]), ("handover",))
    return Scene(target, obstacles, chain=six_axis_arm(), affordance_regions=(region,),
                 intent="handover", params=params, hierarchy=RuleHierarchy.ablation("SEC"),
                 name="slot")


def _bowl_rim(rng) -> Scene:
    center = np.array([0.50, 0.0, 0.10])
    pts, nrm = cylinder_surface(center + [0, 0, 0.08], 2, 0.012, 0.16, 0.005)
    target = PointCloud(_jittered(pts, rng), nrm)
    rim = ring_points(center + [0, 0, 0.04], 0.09, 0.015, 0.01)
    obstacles = PointCloud(_jittered(rim, rng))
    params = ClassifierParams(distance_threshold=0.08, manip_threshold=0.02)
    return Scene(target, obstacles, chain=six_axis_arm(), params=params,
                 hierarchy=RuleHierarchy.ablation("SEC"), name="bowl-rim")


_STICK_CENTER = np.array([0.50, 0.0, 0.15])
_STICK_LENGTH = 0.30


def _stick(rng, intent: str):
    pts, nrm = cylinder_surface(_STICK_CENTER, 1, 0.012, _STICK_LENGTH, 0.005)
    return PointCloud(_jittered(pts, rng), nrm)


def _open(rng) -> Scene:
    target = _stick(rng, "use")
    region = AffordanceRegion(Box.centered(_STICK_CENTER, [0.03, _STICK_LENGTH / 2, 0.03]), ("use",))
    params = ClassifierParams(manip_threshold=0.02)
    return Scene(target, PointCloud.empty(), chain=six_axis_arm(), affordance_regions=(region,),
                 intent="use", params=params, name="open")


def _head_stick(rng, blocked: bool) -> Scene:
    target = _stick(rng, "handover")
    head = _STICK_CENTER + [0, _STICK_LENGTH / 2 - 0.03, 0]
    handle = _STICK_CENTER - [0, _STICK_LENGTH / 4, 0]
    regions = (
        AffordanceRegion(Box.centered(head, [0.02, 0.03, 0.02]), ("handover",)),
        AffordanceRegion(Box.centered(handle, [0.02, _STICK_LENGTH / 4, 0.02]), ("use",)),
    )
    obstacles = PointCloud.empty()
    if blocked:
        # a closed cage around the head, open only where the stick passes through
        cage = box_surface(head, [0.07, 0.06, 0.07], 0.01)[0]
        keep = ~((np.abs(cage[:, 1] - head[1] + 0.06) < 1e-9)
                 & (np.hypot(cage[:, 0] - head[0], cage[:, 2] - head[2]) < 0.02))
        obstacles = PointCloud(_jittered(cage[keep], rng))
    params = ClassifierParams(manip_threshold=0.02, affordance_radius=0.01, distance_threshold=0.09)
    name = "stick-blocked" if blocked else "stick-free"
    return Scene(target, obstacles, chain=six_axis_arm(), affordance_regions=regions,
                 intent="handover", params=params, name=name)


def make_synthetic_scene(name: str, seed: int = 0) -> Scene:
    """Build a named scene; the seed only perturbs point positions."""
    rng = np.random.default_rng([0x5CE7E, int(seed) & 0xFFFFFFFF])
    builders = {
        "slot": _slot,
        "bowl-rim": _bowl_rim,
        "open": _open,
        "stick-free": lambda r: _head_stick(r, False),
        "stick-blocked": lambda r: _head_stick(r, True),
    }
    if name not in builders:
        raise DomainError(f"unknown synthetic scene {name!r}; expected one of {SCENE_NAMES}")
    return builders[name](rng)
