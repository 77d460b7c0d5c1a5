"""Point clouds: container, ASCII PLY / XYZ I/O and PCA normal estimation."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import CloudLoadError, DomainError


@dataclass(frozen=True, eq=False)
class PointCloud:
    """World-frame points in metres with optional unit normals."""

    points: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise DomainError("point coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            nrm = np.array(self.normals, dtype=float).reshape(-1, 3)
            if nrm.shape != pts.shape:
                raise DomainError(f"{len(nrm)} normals for {len(pts)} points")
            if len(nrm) and np.max(np.abs(np.linalg.norm(nrm, axis=1) - 1.0)) > 1e-6:
                raise DomainError("normals must be unit length")
            nrm.setflags(write=False)
            object.__setattr__(self, "normals", nrm)

    def __len__(self):
        return len(self.points)

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)))

    @property
    def has_normals(self) -> bool:
        return self.normals is not None

    def transformed(self, pose) -> "PointCloud":
        R = pose.rotation
        normals = None if self.normals is None else self.normals @ R.T
        return PointCloud(self.points @ R.T + pose.translation, normals)

    def concatenate(self, other: "PointCloud") -> "PointCloud":
        normals = None
        if self.has_normals and other.has_normals:
            normals = np.vstack([self.normals, other.normals])
        return PointCloud(np.vstack([self.points, other.points]), normals)


def estimate_normals(cloud: PointCloud, k: int = 16, viewpoint=None) -> PointCloud:
    """Per-point normals from the k-nearest-neighbour covariance.

    Each normal is the eigenvector of the smallest covariance eigenvalue.
    Normals are flipped to face ``viewpoint`` (default: away from the
    cloud centroid, which suits closed object scans).
    """
    if k < 3:
        raise DomainError("k must be at least 3")
    pts = cloud.points
    if len(pts) < k:
        raise DomainError(f"need at least k={k} points, cloud has {len(pts)}")
    _, idx = cKDTree(pts).query(pts, k=k)
    nbrs = pts[idx]
    centred = nbrs - nbrs.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centred, centred) / k
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    if viewpoint is None:
        toward = pts - pts.mean(axis=0)
    else:
        toward = np.asarray(viewpoint, dtype=float) - pts
    flip = np.sum(normals * toward, axis=1) < 0
    normals[flip] *= -1.0
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return PointCloud(pts, normals)


_PLY_TYPES = {
    "char", "uchar", "short", "ushort", "int", "uint", "float", "double",
    "int8", "uint8", "int16", "uint16", "int32", "uint32", "float32", "float64",
}


def read_ply(path) -> PointCloud:
    """Read an ASCII PLY file; only the ``vertex`` element is used."""
    path = Path(path)
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise CloudLoadError("missing 'ply' magic line", path, 1)
    elements = []  # [name, count, [property names]]
    lineno = 1
    fmt = None
    while True:
        if lineno >= len(lines):
            raise CloudLoadError("header has no end_header", path, lineno)
        raw = lines[lineno].strip()
        lineno += 1
        if not raw or raw.startswith("comment") or raw.startswith("obj_info"):
            continue
        tok = raw.split()
        if tok[0] == "format":
            fmt = tok[1] if len(tok) > 1 else None
            if fmt != "ascii":
                raise CloudLoadError(f"only ascii PLY is supported, got {fmt!r}", path, lineno)
        elif tok[0] == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise CloudLoadError(f"bad element line {raw!r}", path, lineno)
            elements.append([tok[1], int(tok[2]), []])
        elif tok[0] == "property":
            if not elements:
                raise CloudLoadError("property before any element", path, lineno)
            if tok[1] == "list":
                elements[-1][2].append(("list", tok[-1]))
            elif len(tok) == 3 and tok[1] in _PLY_TYPES:
                elements[-1][2].append(("scalar", tok[2]))
            else:
                raise CloudLoadError(f"bad property line {raw!r}", path, lineno)
        elif tok[0] == "end_header":
            break
        else:
            raise CloudLoadError(f"unexpected header line {raw!r}", path, lineno)
    if fmt is None:
        raise CloudLoadError("header has no format line", path, lineno)

    points = normals = None
    for name, count, props in elements:
        if name != "vertex":
            lineno += count
            continue
        names = [p[1] for p in props]
        if any(kind == "list" for kind, _ in props):
            raise CloudLoadError("list properties on vertex are not supported", path, lineno)
        for axis in "xyz":
            if axis not in names:
                raise CloudLoadError(f"vertex element lacks property {axis!r}", path, lineno)
        cols = [names.index(a) for a in "xyz"]
        ncols = [names.index(a) for a in ("nx", "ny", "nz")] if all(
            a in names for a in ("nx", "ny", "nz")) else None
        data = np.empty((count, len(names)))
        for i in range(count):
            if lineno >= len(lines):
                raise CloudLoadError(f"expected {count} vertices, file ended after {i}", path, lineno)
            parts = lines[lineno].split()
            lineno += 1
            if len(parts) != len(names):
                raise CloudLoadError(
                    f"expected {len(names)} values, found {len(parts)}", path, lineno)
            try:
                data[i] = [float(x) for x in parts]
            except ValueError:
                raise CloudLoadError(f"non-numeric value in {lines[lineno - 1]!r}", path, lineno) from None
        points = data[:, cols]
        if ncols is not None:
            normals = data[:, ncols]
            norms = np.linalg.norm(normals, axis=1, keepdims=True)
            if np.any(norms == 0):
                raise CloudLoadError("zero-length normal", path)
            # float32 writers leave normals slightly off unit; exact ones pass through
            normals = np.where(np.abs(norms - 1.0) > 1e-12, normals / norms, normals)
    if points is None:
        raise CloudLoadError("no vertex element", path)
    return PointCloud(points, normals)


def write_ply(cloud: PointCloud, path) -> None:
    path = Path(path)
    props = ["x", "y", "z"] + (["nx", "ny", "nz"] if cloud.has_normals else [])
    header = ["ply", "format ascii 1.0", f"element vertex {len(cloud)}"]
    header += [f"property double {p}" for p in props]
    header.append("end_header")
    data = cloud.points if not cloud.has_normals else np.hstack([cloud.points, cloud.normals])
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(header) + "\n")
        for row in data:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_xyz(path) -> PointCloud:
    """Whitespace-delimited ``x y z`` or ``x y z nx ny nz`` rows; ``#`` comments."""
    path = Path(path)
    rows = []
    width = None
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) not in (3, 6):
                raise CloudLoadError(f"expected 3 or 6 columns, found {len(parts)}", path, lineno)
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise CloudLoadError(f"row has {len(parts)} columns, earlier rows had {width}", path, lineno)
            try:
                rows.append([float(x) for x in parts])
            except ValueError:
                raise CloudLoadError(f"non-numeric value in {text!r}", path, lineno) from None
    if not rows:
        return PointCloud.empty()
    data = np.array(rows)
    normals = None
    if width == 6:
        normals = data[:, 3:]
        normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    return PointCloud(data[:, :3], normals)


def load_cloud(path) -> PointCloud:
    path = Path(path)
    if path.suffix.lower() == ".ply":
        return read_ply(path)
    return read_xyz(path)
