"""Pose math and projection against independent oracles.

The oracle route never touches the library's quaternion code: rotations
go through scipy (which stores quaternions x,y,z,w, hence the rolls),
poses become explicit 4x4 homogeneous matrices, and projection is
redone by hand with numpy ops.
"""

from __future__ import annotations

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

import pastdepth as pd
from pastdepth import ContractViolation, FormatError

from conftest import random_camera, random_pose, random_unit_quat


def pose_matrix(pose: pd.RigidPose) -> np.ndarray:
    """Independent 4x4 homogeneous matrix via scipy."""
    m = np.eye(4)
    m[:3, :3] = Rotation.from_quat(np.roll(pose.rotation, -1)).as_matrix()
    m[:3, 3] = pose.translation
    return m


def apply_matrix(m: np.ndarray, pts: np.ndarray) -> np.ndarray:
    homo = np.concatenate([pts, np.ones((len(pts), 1))], axis=1)
    return (m @ homo.T).T[:, :3]


# --- RigidPose construction --------------------------------------------------

def test_identity_applies_nothing(rng):
    pts = rng.standard_normal((20, 3))
    out = pd.RigidPose.identity().apply(pts)
    np.testing.assert_array_equal(out, pts)


def test_constructor_keeps_unit_quaternion_bits():
    q = np.array([0.5, 0.5, 0.5, 0.5])
    pose = pd.RigidPose(q, np.zeros(3))
    assert pose.rotation.tobytes() == q.tobytes()


def test_constructor_renormalizes_off_unit(rng):
    q = random_unit_quat(rng) * 3.7
    pose = pd.RigidPose(q, np.zeros(3))
    assert abs(np.linalg.norm(pose.rotation) - 1.0) <= 1e-9


def test_constructor_rejects_degenerate_quaternion():
    with pytest.raises(ContractViolation):
        pd.RigidPose(np.zeros(4), np.zeros(3))
    with pytest.raises(ContractViolation):
        pd.RigidPose(np.array([np.nan, 0, 0, 0]), np.zeros(3))
    with pytest.raises(ContractViolation):
        pd.RigidPose(np.array([1.0, 0.0, 0.0]), np.zeros(3))


def test_rotation_matrix_matches_scipy(rng):
    for _ in range(50):
        q = random_unit_quat(rng)
        ours = pd.quat_rotation_matrix(q)
        theirs = Rotation.from_quat(np.roll(q, -1)).as_matrix()
        np.testing.assert_allclose(ours, theirs, atol=1e-12)


# --- compose / inverse -------------------------------------------------------

def test_compose_identity_is_identity():
    ident = pd.RigidPose.identity()
    out = pd.compose(ident, ident)
    np.testing.assert_array_equal(out.rotation, ident.rotation)
    np.testing.assert_array_equal(out.translation, ident.translation)


def test_compose_with_inverse_is_identity(rng):
    for _ in range(50):
        pose = random_pose(rng)
        np.testing.assert_allclose(pose_matrix(pd.compose(pose, pose.inverse())), np.eye(4), atol=1e-9)
        np.testing.assert_allclose(pose_matrix(pd.compose(pose.inverse(), pose)), np.eye(4), atol=1e-9)


def test_compose_matches_matrix_product(rng):
    for _ in range(200):
        a, b = random_pose(rng), random_pose(rng)
        np.testing.assert_allclose(
            pose_matrix(pd.compose(a, b)), pose_matrix(a) @ pose_matrix(b), atol=1e-9
        )


def test_compose_is_associative_in_matrix_form(rng):
    for _ in range(50):
        a, b, c = (random_pose(rng) for _ in range(3))
        left = pose_matrix(pd.compose(pd.compose(a, b), c))
        right = pose_matrix(pd.compose(a, pd.compose(b, c)))
        np.testing.assert_allclose(left, right, atol=1e-9)


def test_compose_keeps_quaternion_normalized(rng):
    pose = random_pose(rng)
    for _ in range(300):
        pose = pd.compose(pose, random_pose(rng))
        assert abs(np.linalg.norm(pose.rotation) - 1.0) <= 1e-9


def test_apply_matches_homogeneous_oracle(rng):
    for _ in range(30):
        pose = random_pose(rng)
        pts = rng.uniform(-50, 50, (100, 3))
        np.testing.assert_allclose(pose.apply(pts), apply_matrix(pose_matrix(pose), pts), atol=1e-9)


def test_apply_promotes_float32_to_float64(rng):
    pose = random_pose(rng)
    out = pose.apply(rng.standard_normal((5, 3)).astype(np.float32))
    assert out.dtype == np.float64


# --- point clouds ------------------------------------------------------------

def test_pointcloud_rejects_bad_shapes_and_nonfinite():
    with pytest.raises(ContractViolation):
        pd.PointCloud(np.zeros((4, 2)), pd.Frame.GLOBAL)
    with pytest.raises(ContractViolation):
        pd.PointCloud(np.array([[0.0, 0.0, np.inf]]), pd.Frame.GLOBAL)
    with pytest.raises(ContractViolation):
        pd.PointCloud(np.zeros((1, 3)), "global")


def test_pointcloud_keeps_storage_dtype(rng):
    pts32 = rng.standard_normal((7, 3)).astype(np.float32)
    assert pd.PointCloud(pts32, pd.Frame.SENSOR).points.dtype == np.float32
    assert pd.PointCloud(pts32.astype(np.float64), pd.Frame.SENSOR).points.dtype == np.float64


# --- camera model ------------------------------------------------------------

def test_camera_validation():
    with pytest.raises(ContractViolation):
        pd.CameraModel.from_values(-1.0, 100.0, 10.0, 10.0, 64, 64)
    with pytest.raises(ContractViolation):
        pd.CameraModel.from_values(100.0, 100.0, 70.0, 10.0, 64, 64)  # cx out of bounds
    bad_k = np.array([[100.0, 0.0, 10.0], [0.0, 100.0, 10.0], [0.0, 0.0, 2.0]])
    with pytest.raises(ContractViolation):
        pd.CameraModel(bad_k, pd.RigidPose.identity(), 64, 64)


def test_transform_to_camera_identity_chain(rng):
    pts = rng.uniform(-5, 5, (10, 3))
    cam = pd.CameraModel.from_values(100.0, 100.0, 32.0, 32.0, 64, 64)
    out = pd.transform_to_camera(pd.PointCloud(pts, pd.Frame.GLOBAL), pd.RigidPose.identity(), cam)
    assert out.frame is pd.Frame.CAMERA
    np.testing.assert_array_equal(out.points, pts)


def test_transform_to_camera_undoes_pure_translation():
    cam = pd.CameraModel.from_values(100.0, 100.0, 32.0, 32.0, 64, 64)
    ego = pd.RigidPose(np.array([1.0, 0.0, 0.0, 0.0]), np.array([1.0, 2.0, 3.0]))
    pc = pd.PointCloud(np.array([[5.0, 5.0, 5.0]]), pd.Frame.GLOBAL)
    out = pd.transform_to_camera(pc, ego, cam)
    np.testing.assert_allclose(out.points, [[4.0, 3.0, 2.0]], atol=1e-12)


def test_transform_to_camera_rejects_wrong_frame(rng):
    cam = random_camera(rng)
    pc = pd.PointCloud(np.zeros((2, 3)), pd.Frame.SENSOR)
    with pytest.raises(ContractViolation):
        pd.transform_to_camera(pc, pd.RigidPose.identity(), cam)


def test_transform_chain_matches_matrix_oracle(rng):
    for _ in range(40):
        ego, cam = random_pose(rng), random_camera(rng)
        pts = rng.uniform(-40, 40, (100, 3))
        out = pd.transform_to_camera(pd.PointCloud(pts, pd.Frame.GLOBAL), ego, cam)
        oracle = apply_matrix(
            pose_matrix(cam.extrinsics) @ np.linalg.inv(pose_matrix(ego)), pts
        )
        np.testing.assert_allclose(out.points, oracle, atol=1e-9)


def test_transform_preserves_pairwise_distances(rng):
    ego, cam = random_pose(rng), random_camera(rng)
    pts = rng.uniform(-30, 30, (60, 3))
    out = pd.transform_to_camera(pd.PointCloud(pts, pd.Frame.GLOBAL), ego, cam).points
    before = np.linalg.norm(pts[:, None] - pts[None, :], axis=-1)
    after = np.linalg.norm(out[:, None] - out[None, :], axis=-1)
    np.testing.assert_allclose(after, before, atol=1e-9)


# --- projection --------------------------------------------------------------

def _cam_320x240() -> pd.CameraModel:
    return pd.CameraModel.from_values(100.0, 100.0, 160.0, 120.0, 320, 240)


def test_projection_principal_point():
    proj = pd.project_points(pd.PointCloud(np.array([[0.0, 0.0, 10.0]]), pd.Frame.CAMERA), _cam_320x240())
    assert (proj.u[0], proj.v[0]) == (160, 120)
    assert proj.depth[0] == 10.0
    assert proj.dropped == 0


def test_projection_off_axis_point():
    proj = pd.project_points(pd.PointCloud(np.array([[1.0, 0.5, 10.0]]), pd.Frame.CAMERA), _cam_320x240())
    assert (proj.u[0], proj.v[0]) == (170, 125)
    assert proj.depth[0] == 10.0


def test_projection_drops_behind_camera():
    pts = np.array([[0.0, 0.0, -5.0], [0.0, 0.0, 10.0]])
    proj = pd.project_points(pd.PointCloud(pts, pd.Frame.CAMERA), _cam_320x240())
    assert proj.dropped == 1
    assert len(proj.u) == 1


def test_projection_floors_instead_of_rounding():
    # u_hat = 100 * 0.99999 / 10 + 160 = 169.9999 -> pixel 169, not 170
    proj = pd.project_points(pd.PointCloud(np.array([[0.99999, 0.0, 10.0]]), pd.Frame.CAMERA), _cam_320x240())
    assert proj.u[0] == 169


def test_projection_bounds_and_depth_floor(rng):
    cam = random_camera(rng, with_extrinsics=False)
    pts = rng.uniform(-20, 20, (5000, 3))
    proj = pd.project_points(pd.PointCloud(pts, pd.Frame.CAMERA), cam)
    assert np.all((proj.u >= 0) & (proj.u < cam.width))
    assert np.all((proj.v >= 0) & (proj.v < cam.height))
    assert np.all(proj.depth > 1e-3)
    assert proj.dropped + len(proj.u) == len(pts)


def test_projection_rejects_wrong_frame(rng):
    with pytest.raises(ContractViolation):
        pd.project_points(pd.PointCloud(np.zeros((1, 3)), pd.Frame.GLOBAL), random_camera(rng))


def test_pipeline_matches_bruteforce_oracle(rng):
    """transform + project vs an explicit matrix/floor re-implementation."""
    for _ in range(10):
        ego, cam = random_pose(rng), random_camera(rng)
        pts = rng.uniform(-60, 60, (1000, 3))
        local = pd.transform_to_camera(pd.PointCloud(pts, pd.Frame.GLOBAL), ego, cam)
        proj = pd.project_points(local, cam)

        cam_pts = apply_matrix(pose_matrix(cam.extrinsics) @ np.linalg.inv(pose_matrix(ego)), pts)
        k = cam.intrinsics
        z = cam_pts[:, 2]
        front = z > 1e-3
        u = np.floor(k[0, 0] * cam_pts[front, 0] / z[front] + k[0, 2]).astype(np.int64)
        v = np.floor(k[1, 1] * cam_pts[front, 1] / z[front] + k[1, 2]).astype(np.int64)
        inside = (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)

        np.testing.assert_array_equal(proj.u, u[inside])
        np.testing.assert_array_equal(proj.v, v[inside])
        np.testing.assert_allclose(proj.depth, z[front][inside], atol=1e-9)
        assert proj.dropped == len(pts) - int(inside.sum())


# --- descriptor files --------------------------------------------------------

def test_pose_file_roundtrip_is_bit_exact(tmp_path, rng):
    pose = random_pose(rng)
    path = tmp_path / "ego.pose"
    pd.write_pose_file(path, pose)
    back = pd.read_pose_file(path)
    assert back.rotation.tobytes() == pose.rotation.tobytes()
    assert back.translation.tobytes() == pose.translation.tobytes()


def test_camera_file_roundtrip_and_field_names(tmp_path, rng):
    cam = random_camera(rng)
    path = tmp_path / "a.cam"
    pd.write_camera_file(path, cam)
    text = path.read_text()
    for key in ("fx", "fy", "cx", "cy", "width", "height",
                "qw", "qx", "qy", "qz", "tx", "ty", "tz"):
        assert f"{key} = " in text
    back = pd.read_camera_file(path)
    assert back.intrinsics.tobytes() == cam.intrinsics.tobytes()
    assert back.extrinsics.rotation.tobytes() == cam.extrinsics.rotation.tobytes()
    assert (back.width, back.height) == (cam.width, cam.height)


def test_pose_file_errors(tmp_path):
    path = tmp_path / "bad.pose"
    path.write_text("qw = 1.0\nqx = 0.0\n")
    with pytest.raises(FormatError):
        pd.read_pose_file(path)
    path.write_text("qw = one\nqx = 0\nqy = 0\nqz = 0\ntx = 0\nty = 0\ntz = 0\n")
    with pytest.raises(FormatError):
        pd.read_pose_file(path)
