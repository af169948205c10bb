"""Depth rasterization: max rule, merge algebra, file formats.

The reference rasterizer below is a per-point Python loop (float64
transform, floor, bounds test, sequential float32 max), so any
vectorization shortcut in the library shows up as a bit mismatch.
"""

from __future__ import annotations

import logging
import struct

import numpy as np
import pytest

import pastdepth as pd
from pastdepth import ContractViolation, FormatError
from pastdepth.render import SENTINEL, write_depth_pgm, write_depth_png

from conftest import make_frame, random_camera, random_pose


def small_camera(width: int = 8, height: int = 6) -> pd.CameraModel:
    return pd.CameraModel.from_values(fx=10.0, fy=10.0, cx=4.0, cy=3.0,
                                      width=width, height=height)


def _naive_render(points, ego, cam, max_depth=60.0, z_near=1e-3):
    # The rigid transform is shared with the library (it is validated
    # against scipy elsewhere); everything after it is an independent
    # per-point reimplementation, so bit equality is meaningful.
    world_to_cam = pd.compose(cam.extrinsics, ego.inverse())
    locals_ = world_to_cam.apply(np.asarray(points, dtype=np.float64))
    fx, fy = cam.intrinsics[0, 0], cam.intrinsics[1, 1]
    cx, cy = cam.intrinsics[0, 2], cam.intrinsics[1, 2]
    raster = np.full((cam.height, cam.width), SENTINEL, dtype=np.float32)
    for local in locals_:
        z = local[2]
        if not (z > z_near and z <= max_depth):
            continue
        u = int(np.floor(fx * local[0] / z + cx))
        v = int(np.floor(fy * local[1] / z + cy))
        if 0 <= u < cam.width and 0 <= v < cam.height:
            raster[v, u] = max(raster[v, u], np.float32(z))
    return raster


def _global_cloud(points) -> pd.PointCloud:
    return pd.PointCloud(np.asarray(points, dtype=np.float64), pd.Frame.GLOBAL)


# --- densify -----------------------------------------------------------------

def test_densify_applies_poses():
    pose = pd.RigidPose(np.array([1.0, 0.0, 0.0, 0.0]), np.array([1.0, 1.0, 1.0]))
    fr = make_frame(3, 0, pose, np.array([[5.0, 0.0, 0.0]], dtype=np.float32))
    out = pd.densify([fr])
    assert out.traversal_id == 3
    assert out.source_frame_indices == (0,)
    np.testing.assert_allclose(out.points.points, [[6.0, 1.0, 1.0]])


def test_densify_concatenates_in_frame_order(rng):
    frames = [make_frame(0, i, random_pose(rng), rng.standard_normal((4, 3)).astype(np.float32))
              for i in range(3)]
    out = pd.densify(frames)
    assert len(out.points) == 12
    expected = np.concatenate([f.pose.apply(f.points.points) for f in frames])
    np.testing.assert_array_equal(out.points.points, expected)


def test_densify_rejects_mixed_traversals_and_empty(rng):
    a = make_frame(0, 0, random_pose(rng), np.ones((2, 3), dtype=np.float32))
    b = make_frame(1, 1, random_pose(rng), np.ones((2, 3), dtype=np.float32))
    with pytest.raises(ContractViolation, match="traversals"):
        pd.densify([a, b])
    with pytest.raises(ContractViolation):
        pd.densify([])


def test_densified_cloud_must_be_global():
    pc = pd.PointCloud(np.ones((1, 3), dtype=np.float32), pd.Frame.SENSOR)
    with pytest.raises(ContractViolation, match="global"):
        pd.DensifiedCloud(0, pc, (0,))


# --- rasterization rules -----------------------------------------------------

def test_colliding_points_keep_the_larger_depth():
    cam = small_camera()
    # both project to pixel (4, 3): points on the optical axis
    cloud = _global_cloud([[0.0, 0.0, 5.0], [0.0, 0.0, 12.0]])
    dm = pd.render_depth(cloud, pd.RigidPose.identity(), cam)
    assert dm.data[3, 4] == np.float32(12.0)
    assert (dm.data == SENTINEL).sum() == cam.width * cam.height - 1


def test_max_depth_boundary_is_inclusive():
    cam = small_camera()
    at_limit = _global_cloud([[0.0, 0.0, 60.0]])
    beyond = _global_cloud([[0.0, 0.0, 60.0 + 1e-9]])
    assert pd.render_depth(at_limit, pd.RigidPose.identity(), cam).data[3, 4] == np.float32(60.0)
    assert pd.render_depth(beyond, pd.RigidPose.identity(), cam).data[3, 4] == SENTINEL


def test_points_behind_camera_leave_sentinel():
    cam = small_camera()
    dm = pd.render_depth(_global_cloud([[0.0, 0.0, -5.0]]), pd.RigidPose.identity(), cam)
    assert (dm.data == SENTINEL).all()


def test_identity_rig_depth_is_float32_z(rng):
    cam = pd.CameraModel.from_values(fx=30.0, fy=30.0, cx=32.0, cy=24.0, width=64, height=48)
    z = rng.uniform(1.0, 50.0, 100)
    pts = np.stack([rng.uniform(-0.5, 0.5, 100) * z, rng.uniform(-0.3, 0.3, 100) * z, z], axis=1)
    dm = pd.render_depth(_global_cloud(pts), pd.RigidPose.identity(), cam)
    hit = dm.data[dm.data != SENTINEL]
    assert set(hit.tolist()) <= set(z.astype(np.float32).tolist())


def test_matches_naive_rasterizer(rng):
    for _ in range(8):
        cam = random_camera(rng)
        ego = random_pose(rng)
        # cluster points ahead of the camera so plenty survive the cull
        cam_to_global = pd.compose(ego, cam.extrinsics.inverse())
        local = np.stack([rng.uniform(-10, 10, 400), rng.uniform(-10, 10, 400),
                          rng.uniform(-5.0, 70.0, 400)], axis=1)
        pts = cam_to_global.apply(local)
        dm = pd.render_depth(_global_cloud(pts), ego, cam)
        np.testing.assert_array_equal(dm.data, _naive_render(pts, ego, cam))


def test_render_is_permutation_invariant(rng):
    cam = small_camera(width=16, height=12)
    pts = np.stack([rng.uniform(-5, 5, 500), rng.uniform(-4, 4, 500),
                    rng.uniform(0.5, 59.0, 500)], axis=1)
    base = pd.render_depth(_global_cloud(pts), pd.RigidPose.identity(), cam)
    for _ in range(5):
        perm = rng.permutation(len(pts))
        shuffled = pd.render_depth(_global_cloud(pts[perm]), pd.RigidPose.identity(), cam)
        assert shuffled.data.tobytes() == base.data.tobytes()


def test_renders_merge_exactly(rng):
    """render(A u B) == pixelwise max(render(A), render(B)), bit for bit."""
    cam = small_camera(width=20, height=15)
    ego = pd.RigidPose.identity()
    for _ in range(30):
        n = int(rng.integers(2, 300))
        pts = np.stack([rng.uniform(-6, 6, n), rng.uniform(-5, 5, n),
                        rng.uniform(0.2, 65.0, n)], axis=1)
        cut = int(rng.integers(1, n))
        whole = pd.render_depth(_global_cloud(pts), ego, cam).data
        part_a = pd.render_depth(_global_cloud(pts[:cut]), ego, cam).data
        part_b = pd.render_depth(_global_cloud(pts[cut:]), ego, cam).data
        assert np.maximum(part_a, part_b).tobytes() == whole.tobytes()


def test_densified_cloud_input_carries_traversal_id(rng):
    fr = make_frame(9, 0, pd.RigidPose.identity(),
                    np.array([[0.0, 0.0, 10.0]], dtype=np.float32))
    dm = pd.render_depth(pd.densify([fr]), pd.RigidPose.identity(), small_camera(), camera_id=2)
    assert dm.traversal_id == 9 and dm.camera_id == 2


def test_sensor_frame_cloud_is_rejected():
    pc = pd.PointCloud(np.ones((1, 3), dtype=np.float32), pd.Frame.SENSOR)
    with pytest.raises(ContractViolation):
        pd.render_depth(pc, pd.RigidPose.identity(), small_camera())


def test_bad_depth_window_is_rejected():
    with pytest.raises(ContractViolation):
        pd.render_depth(_global_cloud([[0.0, 0.0, 1.0]]), pd.RigidPose.identity(),
                        small_camera(), max_depth=1e-4)


# --- percentile reduction ----------------------------------------------------

def test_percentile_reduction_on_one_pixel():
    cam = small_camera()
    cloud = _global_cloud([[0.0, 0.0, 2.0], [0.0, 0.0, 4.0], [0.0, 0.0, 6.0]])
    ego = pd.RigidPose.identity()
    assert pd.render_depth(cloud, ego, cam, reduce=0).data[3, 4] == np.float32(2.0)
    assert pd.render_depth(cloud, ego, cam, reduce=50).data[3, 4] == np.float32(4.0)
    assert pd.render_depth(cloud, ego, cam, reduce=100).data[3, 4] == np.float32(6.0)
    assert pd.render_depth(cloud, ego, cam, reduce=25).data[3, 4] == np.float32(3.0)


def test_percentile_100_equals_max_everywhere(rng):
    cam = small_camera(width=10, height=10)
    pts = np.stack([rng.uniform(-4, 4, 300), rng.uniform(-4, 4, 300),
                    rng.uniform(0.5, 50.0, 300)], axis=1)
    ego = pd.RigidPose.identity()
    top = pd.render_depth(_global_cloud(pts), ego, cam, reduce=100).data
    mx = pd.render_depth(_global_cloud(pts), ego, cam).data
    np.testing.assert_allclose(top, mx, rtol=0, atol=1e-6)


def test_invalid_percentile_is_rejected():
    with pytest.raises(ContractViolation, match="percentile"):
        pd.render_depth(_global_cloud([[0.0, 0.0, 1.0]]), pd.RigidPose.identity(),
                        small_camera(), reduce=101.0)


# --- render_all --------------------------------------------------------------

def _line_store() -> pd.TraversalStore:
    store = pd.TraversalStore()
    for tid in range(2):
        frames = []
        for i, x in enumerate([0.0, 10.0, 20.0]):
            pose = pd.RigidPose(np.array([1.0, 0.0, 0.0, 0.0]),
                                np.array([x, 2.0 * tid, 0.0]))
            pts = np.array([[0.0, 0.0, 10.0 + i]], dtype=np.float32)
            frames.append(make_frame(tid, i, pose, pts))
        store.ingest_traversal(frames)
    return store


def test_render_all_keys_and_dedup():
    store = _line_store()
    cams = [small_camera(), small_camera(width=12, height=8)]
    cfg = pd.QueryConfig(offsets=(0.0, 0.5, 10.0), search_radius=5.0)
    ego = pd.RigidPose.identity()
    grids = pd.render_all(ego, cams, cfg, store, threads=1)
    assert set(grids) == {(0, 0), (0, 1), (1, 0), (1, 1)}
    # offsets 0.0 and 0.5 both resolve to frame 0; the union must hold
    # frames {0, 1} once each, identical to densifying them directly
    frames = store.frames(0)
    direct = pd.render_depth(pd.densify(frames[:2]), ego, cams[0], camera_id=0)
    assert grids[(0, 0)].data.tobytes() == direct.data.tobytes()


def test_render_all_threaded_matches_serial():
    store = _line_store()
    cams = [small_camera(), small_camera(width=12, height=8)]
    cfg = pd.QueryConfig(offsets=(0.0, 10.0, 20.0), search_radius=5.0)
    ego = pd.RigidPose.identity()
    serial = pd.render_all(ego, cams, cfg, store, threads=1)
    threaded = pd.render_all(ego, cams, cfg, store, threads=4)
    assert set(serial) == set(threaded)
    for key in serial:
        assert serial[key].data.tobytes() == threaded[key].data.tobytes()


def test_render_all_empty_is_warning_not_error(caplog):
    store = _line_store()
    ego = pd.RigidPose(np.array([1.0, 0.0, 0.0, 0.0]), np.array([900.0, 900.0, 0.0]))
    with caplog.at_level(logging.WARNING, logger="pastdepth.render"):
        grids = pd.render_all(ego, [small_camera()], pd.QueryConfig(search_radius=10.0), store)
    assert grids == {}
    assert any("no traversal" in rec.message for rec in caplog.records)


# --- DepthMap invariants -----------------------------------------------------

def test_depthmap_rejects_bad_values():
    with pytest.raises(ContractViolation):
        pd.DepthMap(np.zeros((2, 2), dtype=np.float32))  # 0 is neither sentinel nor positive
    with pytest.raises(ContractViolation):
        pd.DepthMap(np.full((2, 2), -0.5, dtype=np.float32))
    with pytest.raises(ContractViolation):
        pd.DepthMap(np.full((2, 2), np.nan, dtype=np.float32))
    with pytest.raises(ContractViolation):
        pd.DepthMap(np.ones(4, dtype=np.float32))


def test_depthmap_is_read_only():
    dm = pd.DepthMap(np.full((2, 3), 1.5, dtype=np.float32))
    assert dm.height == 2 and dm.width == 3
    with pytest.raises(ValueError):
        dm.data[0, 0] = 2.0


# --- files -------------------------------------------------------------------

def test_depthmap_file_golden_header(tmp_path):
    data = np.array([[1.0, 2.0, 3.0], [-1.0, 5.0, 6.0]], dtype=np.float32)
    path = tmp_path / "m.addm"
    pd.write_depthmap(path, pd.DepthMap(data))
    blob = path.read_bytes()
    assert blob[:4] == b"ADDM"
    assert struct.unpack_from("<II", blob, 4) == (3, 2)  # width, height
    assert blob[12:] == data.tobytes()


def test_depthmap_roundtrip_bits(tmp_path, rng):
    data = rng.uniform(0.1, 60.0, (17, 23)).astype(np.float32)
    data[rng.random((17, 23)) < 0.3] = SENTINEL
    path = tmp_path / "r.addm"
    pd.write_depthmap(path, pd.DepthMap(data, camera_id=1, traversal_id=5))
    back = pd.read_depthmap(path, camera_id=1, traversal_id=5)
    assert back.data.tobytes() == data.tobytes()
    assert back.camera_id == 1 and back.traversal_id == 5


def test_depthmap_read_errors(tmp_path):
    p = tmp_path / "bad.addm"
    p.write_bytes(b"JUNK" + b"\x00" * 16)
    with pytest.raises(FormatError):
        pd.read_depthmap(p)
    p.write_bytes(b"ADDM" + struct.pack("<II", 3, 2) + b"\x00" * 8)  # 16 bytes short
    with pytest.raises(FormatError, match="expected"):
        pd.read_depthmap(p)
    # right size, invalid payload (zeros)
    p.write_bytes(b"ADDM" + struct.pack("<II", 2, 1) + np.zeros(2, dtype="<f4").tobytes())
    with pytest.raises(FormatError):
        pd.read_depthmap(p)


def test_pgm_export_golden_bytes(tmp_path):
    dm = pd.DepthMap(np.array([[-1.0, 1.0], [0.0625, 70.0]], dtype=np.float32))
    path = tmp_path / "d.pgm"
    write_depth_pgm(path, dm)
    blob = path.read_bytes()
    header = b"P5\n2 2\n65535\n"
    assert blob[:len(header)] == header
    vals = np.frombuffer(blob[len(header):], dtype=">u2").reshape(2, 2)
    # sentinel -> 0; metres -> rounded millimetres; 70 m clips at u16 max
    np.testing.assert_array_equal(vals, [[0, 1000], [62, 65535]])


def test_png_export_roundtrip(tmp_path):
    pytest.importorskip("PIL")
    from PIL import Image

    dm = pd.DepthMap(np.array([[-1.0, 2.5], [30.0, 59.999]], dtype=np.float32))
    path = tmp_path / "d.png"
    write_depth_png(path, dm)
    vals = np.asarray(Image.open(path))
    np.testing.assert_array_equal(vals, [[0, 2500], [30000, 59999]])
