import numpy as np
import pytest

from rankgrasp.cloud import PointCloud, estimate_normals, load_cloud, read_ply, read_xyz, write_ply
from rankgrasp.errors import CloudLoadError, DomainError
from rankgrasp.se3 import Pose


def test_normals_must_be_unit():
    with pytest.raises(DomainError):
        PointCloud(np.zeros((2, 3)), np.ones((2, 3)))


def test_transformed_moves_points_and_normals():
    c = PointCloud(np.array([[1.0, 0, 0]]), np.array([[1.0, 0, 0]]))
    out = c.transformed(Pose.from_rotvec([0, 0, np.pi / 2], [0, 0, 1]))
    np.testing.assert_allclose(out.points, [[0, 1, 1]], atol=1e-12)
    np.testing.assert_allclose(out.normals, [[0, 1, 0]], atol=1e-12)


def test_plane_normals(rng):
    pts = np.column_stack([rng.uniform(-1, 1, 200), rng.uniform(-1, 1, 200), np.zeros(200)])
    for k in (3, 8, 16):
        n = estimate_normals(PointCloud(pts), k=k).normals
        np.testing.assert_allclose(np.abs(n[:, 2]), 1.0, atol=1e-6)


def test_sphere_normals_are_radial(rng):
    pts = rng.normal(size=(2000, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    n = estimate_normals(PointCloud(pts), k=16).normals
    angle = np.degrees(np.arccos(np.clip(np.sum(n * pts, axis=1), -1, 1)))
    assert np.all(angle < 5.0)


def test_viewpoint_orientation(rng):
    pts = np.column_stack([rng.uniform(-1, 1, 50), rng.uniform(-1, 1, 50), np.zeros(50)])
    n = estimate_normals(PointCloud(pts), k=8, viewpoint=[0, 0, -5]).normals
    assert np.all(n[:, 2] < 0)


def test_estimate_normals_errors():
    with pytest.raises(DomainError):
        estimate_normals(PointCloud(np.zeros((5, 3))), k=10)
    with pytest.raises(DomainError):
        estimate_normals(PointCloud(np.random.default_rng(0).normal(size=(10, 3))), k=2)


def test_estimate_normals_is_deterministic(rng):
    c = PointCloud(rng.normal(size=(100, 3)))
    np.testing.assert_array_equal(estimate_normals(c).normals, estimate_normals(c).normals)


def test_ply_round_trip(tmp_path, rng):
    pts = rng.normal(size=(10, 3))
    nrm = rng.normal(size=(10, 3))
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    path = tmp_path / "c.ply"
    write_ply(PointCloud(pts, nrm), path)
    back = read_ply(path)
    np.testing.assert_array_equal(back.points, pts)
    np.testing.assert_allclose(back.normals, nrm, atol=1e-15)


def test_ply_with_extra_properties_and_elements(tmp_path):
    path = tmp_path / "c.ply"
    path.write_text(
        "ply\nformat ascii 1.0\ncomment test\n"
        "element vertex 2\nproperty float x\nproperty float y\nproperty float z\n"
        "property uchar red\n"
        "element face 1\nproperty list uchar int vertex_indices\n"
        "end_header\n0 0 0 255\n1 2 3 0\n3 0 1 1\n")
    c = read_ply(path)
    np.testing.assert_array_equal(c.points, [[0, 0, 0], [1, 2, 3]])
    assert c.normals is None


def test_ply_malformed_row_reports_line(tmp_path):
    path = tmp_path / "bad.ply"
    path.write_text("ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\n"
                    "property float y\nproperty float z\nend_header\n0 0 0\n1 oops 3\n")
    with pytest.raises(CloudLoadError, match=r"bad\.ply:9"):
        read_ply(path)


def test_ply_rejects_binary(tmp_path):
    path = tmp_path / "bin.ply"
    path.write_text("ply\nformat binary_little_endian 1.0\nelement vertex 0\nend_header\n")
    with pytest.raises(CloudLoadError):
        read_ply(path)


def test_xyz_reader(tmp_path):
    path = tmp_path / "c.xyz"
    path.write_text("# comment\n0 0 0\n1 2 3\n\n")
    np.testing.assert_array_equal(read_xyz(path).points, [[0, 0, 0], [1, 2, 3]])
    path.write_text("0 0 0 0 0 1\n1 1 1 1 0 0\n")
    np.testing.assert_array_equal(read_xyz(path).normals, [[0, 0, 1], [1, 0, 0]])
    path.write_text("0 0 0\n1 2\n")
    with pytest.raises(CloudLoadError, match=":2"):
        read_xyz(path)


def test_load_cloud_dispatch_and_missing_file(tmp_path):
    path = tmp_path / "c.xyz"
    path.write_text("1 2 3\n")
    assert len(load_cloud(path)) == 1
    with pytest.raises(OSError):
        load_cloud(tmp_path / "missing.ply")
