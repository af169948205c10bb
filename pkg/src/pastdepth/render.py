"""Densify queried frames and rasterize per-camera depth maps.

The rasterizer follows a strict z-buffer max rule: every point lands on
exactly one pixel (floor of its continuous image coordinates), multiple
points on a pixel keep the largest depth, and pixels nobody hits stay
at the -1.0 sentinel.  Depths are cast to float32 *before* the max fold
so the result is bitwise identical to a sequential float32 max, which
makes renders mergeable: render(A u B) == pixelwise-max(render(A),
render(B)) exactly.
"""

from __future__ import annotations

import concurrent.futures
import logging
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, FormatError
from .geometry import CameraModel, Frame, PointCloud, RigidPose, project_points, transform_to_camera
from .store import FrameRecord, QueryConfig, TraversalStore

log = logging.getLogger(__name__)

MAGIC = b"ADDM"
SENTINEL = np.float32(-1.0)

DEFAULT_MAX_DEPTH = 60.0
DEFAULT_Z_NEAR = 1e-3


@dataclass(frozen=True)
class DensifiedCloud:
    """Union of several frames of one traversal, in the global frame."""

    traversal_id: int
    points: PointCloud
    source_frame_indices: tuple[int, ...]

    def __post_init__(self):
        if self.points.frame is not Frame.GLOBAL:
            raise ContractViolation(f"densified cloud must be global-frame, got {self.points.frame.value}")


@dataclass(frozen=True)
class DepthMap:
    """H x W float32 raster of camera-frame depths; -1.0 marks empty pixels."""

    data: np.ndarray
    camera_id: int | None = None
    traversal_id: int | None = None

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ContractViolation(f"depth map must be 2-D, got shape {arr.shape}")
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        bad = ~((arr == SENTINEL) | (arr > 0.0))
        if bad.any():
            raise ContractViolation(
                f"{int(bad.sum())} depth values are neither the -1 sentinel nor positive"
            )
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def densify(frames: list[FrameRecord]) -> DensifiedCloud:
    """Concatenate frames of one traversal into a global-frame cloud.

    No deduplication: the output point count is the sum of the input
    frame point counts, in frame order.
    """
    if not frames:
        raise ContractViolation("densify needs at least one frame")
    tids = {fr.traversal_id for fr in frames}
    if len(tids) != 1:
        raise ContractViolation(f"densify got frames from traversals {sorted(tids)}")
    parts = [fr.pose.apply(fr.points.points) for fr in frames]
    cloud = PointCloud(np.concatenate(parts, axis=0), Frame.GLOBAL)
    return DensifiedCloud(tids.pop(), cloud, tuple(fr.frame_index for fr in frames))


def render_depth(
    cloud: DensifiedCloud | PointCloud,
    ego: RigidPose,
    cam: CameraModel,
    *,
    max_depth: float = DEFAULT_MAX_DEPTH,
    z_near: float = DEFAULT_Z_NEAR,
    reduce: "str | float" = "max",
    camera_id: int | None = None,
) -> DepthMap:
    """Rasterize a global-frame cloud into the camera's depth map.

    Points farther than max_depth are discarded before the per-pixel
    reduction.  reduce is "max" (the default, carrying the exact merge
    guarantees) or a percentile in [0, 100] applied per pixel.
    """
    if isinstance(cloud, DensifiedCloud):
        pc, tid = cloud.points, cloud.traversal_id
    else:
        pc, tid = cloud, None
    if not max_depth > z_near:
        raise ContractViolation(f"max_depth must exceed z_near, got {max_depth} <= {z_near}")

    local = transform_to_camera(pc, ego, cam)
    proj = project_points(local, cam, z_near=z_near)
    keep = proj.depth <= max_depth
    u, v = proj.u[keep], proj.v[keep]
    z32 = proj.depth[keep].astype(np.float32)

    raster = np.full((cam.height, cam.width), SENTINEL, dtype=np.float32)
    if reduce == "max":
        np.maximum.at(raster, (v, u), z32)
    else:
        q = float(reduce)
        if not 0.0 <= q <= 100.0:
            raise ContractViolation(f"percentile must be in [0, 100], got {reduce!r}")
        flat = v * cam.width + u
        order = np.argsort(flat, kind="stable")
        flat, depths = flat[order], proj.depth[keep][order]
        pixels, starts = np.unique(flat, return_index=True)
        bounds = np.append(starts, len(flat))
        for i, pix in enumerate(pixels):
            group = depths[bounds[i]:bounds[i + 1]]
            raster.flat[pix] = np.float32(np.percentile(group, q))
    return DepthMap(raster, camera_id=camera_id, traversal_id=tid)


def render_all(
    ego: RigidPose,
    cams: list[CameraModel],
    cfg: QueryConfig,
    store: TraversalStore,
    *,
    max_depth: float = DEFAULT_MAX_DEPTH,
    z_near: float = DEFAULT_Z_NEAR,
    threads: int = 1,
) -> dict[tuple[int, int], DepthMap]:
    """One depth map per (traversal-id, camera-index) near the ego pose.

    Offsets may resolve to the same frame more than once; each distinct
    frame enters the densified union exactly once.
    """
    matches = store.query_frames(ego.translation, cfg)
    if not matches:
        log.warning("no traversal within %.1f m of query point; empty depth-map grid",
                    cfg.search_radius)
        return {}
    clouds = []
    for m in matches:
        unique = {fr.frame_index: fr for fr in m.frames}
        clouds.append(densify([unique[k] for k in sorted(unique)]))

    def job(args):
        cloud, ci = args
        dm = render_depth(cloud, ego, cams[ci], max_depth=max_depth, z_near=z_near, camera_id=ci)
        return (cloud.traversal_id, ci), dm

    pairs = [(cloud, ci) for cloud in clouds for ci in range(len(cams))]
    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, pairs))
    else:
        results = [job(p) for p in pairs]
    return dict(results)


# --- depth-map files ---------------------------------------------------------

def write_depthmap(path, dm: DepthMap) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", dm.width, dm.height))
        fh.write(dm.data.astype("<f4", copy=False).tobytes())


def read_depthmap(path, camera_id: int | None = None, traversal_id: int | None = None) -> DepthMap:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise FormatError(f"{path}: not a depth map (bad magic)")
    width, height = struct.unpack_from("<II", blob, 4)
    expected = 12 + 4 * width * height
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for {width}x{height}, got {len(blob)}")
    data = np.frombuffer(blob, dtype="<f4", count=width * height, offset=12).reshape(height, width)
    try:
        return DepthMap(data, camera_id=camera_id, traversal_id=traversal_id)
    except ContractViolation as exc:
        raise FormatError(f"{path}: {exc}") from None


def write_depth_pgm(path, dm: DepthMap) -> None:
    """16-bit PGM export for visualization: millimeters, sentinel -> 0."""
    mm = _quantize_mm(dm)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{dm.width} {dm.height}\n65535\n".encode("ascii"))
        fh.write(mm.astype(">u2").tobytes())


def write_depth_png(path, dm: DepthMap) -> None:
    """16-bit grayscale PNG export; needs Pillow (install extra: pastdepth[png])."""
    try:
        from PIL import Image
    except ImportError:
        raise ContractViolation("PNG export requires Pillow; pip install pastdepth[png]") from None
    mm = _quantize_mm(dm)
    Image.fromarray(mm).save(path)  # uint16 maps to 16-bit grayscale


def _quantize_mm(dm: DepthMap) -> np.ndarray:
    mm = np.where(dm.data == SENTINEL, 0.0, np.rint(dm.data.astype(np.float64) * 1000.0))
    return np.clip(mm, 0, 65535).astype(np.uint16)
