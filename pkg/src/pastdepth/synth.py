"""Synthetic worlds with closed-form geometry.

Scenes are built from a horizontal ground plane and yaw-rotated boxes,
swept by an idealized ring LiDAR (uniform elevation rings x uniform
azimuth steps, exact ranges, optional Gaussian range noise).  Because
every surface intersection has a closed form, these scenes act as the
independent oracle for the projection and rasterization pipeline, and
transient boxes present in only some traversals reproduce the
foreground/background ambiguity the multi-traversal pooling is meant to
resolve.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, FormatError
from .geometry import CameraModel, Frame, PointCloud, RigidPose, compose, quat_about_z
from .render import DepthMap, DEFAULT_MAX_DEPTH, DEFAULT_Z_NEAR
from .store import FrameRecord
from . import kvfile

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box rotated by yaw about +z through its center."""

    center: np.ndarray
    size: np.ndarray
    yaw: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.center, dtype=np.float64)
        s = np.asarray(self.size, dtype=np.float64)
        if c.shape != (3,) or s.shape != (3,):
            raise ContractViolation("box center and size must be 3-vectors")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(s)) and np.isfinite(self.yaw)):
            raise ContractViolation("box parameters must be finite")
        if not np.all(s > 0):
            raise ContractViolation(f"box extents must be positive, got {s}")
        c.flags.writeable = False
        s.flags.writeable = False
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "size", s)
        object.__setattr__(self, "yaw", float(self.yaw))


@dataclass(frozen=True)
class SceneSpec:
    route: np.ndarray
    ground_height: float | None = None
    boxes: tuple[Box, ...] = ()
    transients: tuple[tuple[int, Box], ...] = ()
    rings: int = 32
    azimuth_step_deg: float = 0.5
    max_range: float = 80.0
    elev_min_deg: float = -25.0
    elev_max_deg: float = 5.0
    seed: int = 0

    def __post_init__(self):
        route = np.asarray(self.route, dtype=np.float64)
        if route.ndim != 2 or route.shape[1] != 3 or route.shape[0] < 2:
            raise ContractViolation("route must be an (M>=2, 3) polyline")
        if float(np.linalg.norm(np.diff(route, axis=0), axis=1).sum()) <= 0:
            raise ContractViolation("route length must be > 0")
        if self.rings < 1:
            raise ContractViolation(f"rings must be >= 1, got {self.rings}")
        if not self.azimuth_step_deg > 0:
            raise ContractViolation(f"azimuth step must be > 0, got {self.azimuth_step_deg}")
        if not self.max_range > 0:
            raise ContractViolation(f"max range must be > 0, got {self.max_range}")
        if self.elev_min_deg > self.elev_max_deg:
            raise ContractViolation("elev_min_deg must not exceed elev_max_deg")
        route = route.copy()
        route.flags.writeable = False
        object.__setattr__(self, "route", route)
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "transients", tuple(self.transients))


# --- intersection primitives -------------------------------------------------

def _ray_plane_z(origin: np.ndarray, dirs: np.ndarray, height: float) -> np.ndarray:
    dz = dirs[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (height - origin[2]) / dz
    t = np.where((dz != 0.0) & (t > 0.0), t, np.inf)
    return t


def _slab(o: np.ndarray, d: np.ndarray, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - o) / d
        t2 = (hi - o) / d
    near = np.minimum(t1, t2)
    far = np.maximum(t1, t2)
    parallel = d == 0.0
    inside = (o >= lo) & (o <= hi)
    near = np.where(parallel, np.where(inside, -np.inf, np.inf), near)
    far = np.where(parallel, np.where(inside, np.inf, -np.inf), far)
    return near, far


def _ray_box(origin: np.ndarray, dirs: np.ndarray, box: Box) -> np.ndarray:
    """Entry distance of each ray into the box, inf for misses.

    Rays starting inside the box count as misses; the sweep sensor is
    never expected to sit inside scene geometry.
    """
    cos, sin = np.cos(-box.yaw), np.sin(-box.yaw)
    rot = np.array([[cos, -sin, 0.0], [sin, cos, 0.0], [0.0, 0.0, 1.0]])
    o = rot @ (origin - box.center)
    d = dirs @ rot.T
    half = box.size / 2.0
    t_near = np.full(dirs.shape[0], -np.inf)
    t_far = np.full(dirs.shape[0], np.inf)
    for axis in range(3):
        near, far = _slab(o[axis], d[:, axis], -half[axis], half[axis])
        t_near = np.maximum(t_near, near)
        t_far = np.minimum(t_far, far)
    hit = (t_far >= t_near) & (t_near > 0.0)
    return np.where(hit, t_near, np.inf)


def _nearest_hit(origin: np.ndarray, dirs: np.ndarray, scene: SceneSpec,
                 transient_of: int | None) -> np.ndarray:
    t = np.full(dirs.shape[0], np.inf)
    if scene.ground_height is not None:
        t = np.minimum(t, _ray_plane_z(origin, dirs, scene.ground_height))
    for box in scene.boxes:
        t = np.minimum(t, _ray_box(origin, dirs, box))
    if transient_of is not None:
        for idx, box in scene.transients:
            if idx == transient_of:
                t = np.minimum(t, _ray_box(origin, dirs, box))
    return t


# --- sweeps, ground truth, traversals ---------------------------------------

def sweep_directions(scene: SceneSpec) -> np.ndarray:
    """Sensor-local unit ray directions of one sweep (rings x azimuths, 3)."""
    elev = np.radians(np.linspace(scene.elev_min_deg, scene.elev_max_deg, scene.rings))
    azim = np.radians(np.arange(0.0, 360.0, scene.azimuth_step_deg))
    ce, se = np.cos(elev)[:, None], np.sin(elev)[:, None]
    ca, sa = np.cos(azim)[None, :], np.sin(azim)[None, :]
    z = np.broadcast_to(se, (scene.rings, azim.size))
    dirs = np.stack([ce * ca, ce * sa, z], axis=-1)
    return dirs.reshape(-1, 3)


def raycast_sweep(
    scene: SceneSpec,
    sensor_pose: RigidPose,
    include_transients_of: int | None = None,
    *,
    range_noise_sigma: float = 0.0,
    rng: np.random.Generator | None = None,
) -> PointCloud:
    """One LiDAR sweep: nearest surface hit per ray, sensor-local float32."""
    dirs_local = sweep_directions(scene)
    dirs_global = dirs_local @ sensor_pose.rotation_matrix.T
    ranges = _nearest_hit(sensor_pose.translation, dirs_global, scene, include_transients_of)
    valid = ranges <= scene.max_range
    ranges = ranges[valid]
    if range_noise_sigma > 0.0:
        if rng is None:
            raise ContractViolation("range noise requires an rng")
        ranges = ranges + range_noise_sigma * rng.standard_normal(ranges.shape)
    pts = (dirs_local[valid] * ranges[:, None]).astype(np.float32)
    return PointCloud(pts, Frame.SENSOR)


def gt_depth(
    scene: SceneSpec,
    ego: RigidPose,
    cam: CameraModel,
    *,
    max_depth: float = DEFAULT_MAX_DEPTH,
    z_near: float = DEFAULT_Z_NEAR,
) -> DepthMap:
    """Analytic depth of the static scene (transients excluded).

    Each pixel casts a ray through its center; the returned value is
    the camera-frame z of the nearest static surface, -1 where nothing
    lies within (z_near, max_depth].
    """
    k_inv = np.linalg.inv(cam.intrinsics)
    us, vs = np.meshgrid(np.arange(cam.width), np.arange(cam.height))
    pix = np.stack([us.ravel() + 0.5, vs.ravel() + 0.5, np.ones(us.size)], axis=0)
    dirs_cam = (k_inv @ pix).T  # z component is 1, so ray parameter == depth

    cam_to_global = compose(ego, cam.extrinsics.inverse())
    dirs_global = dirs_cam @ cam_to_global.rotation_matrix.T
    t = _nearest_hit(cam_to_global.translation, dirs_global, scene, None)
    depth = np.where((t > z_near) & (t <= max_depth), t, -1.0)
    return DepthMap(depth.reshape(cam.height, cam.width).astype(np.float32))


def route_poses(scene: SceneSpec, frame_spacing: float) -> list[RigidPose]:
    """Sensor poses sampled every frame_spacing meters of route arc length.

    Heading follows the local route tangent (yaw only; the sensor stays
    level).
    """
    if not frame_spacing > 0:
        raise ContractViolation(f"frame_spacing must be > 0, got {frame_spacing}")
    route = scene.route
    seg = np.diff(route, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    arcs = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = float(arcs[-1])
    samples = np.arange(0.0, total + 1e-9, frame_spacing)
    poses = []
    for s in samples:
        j = min(int(np.searchsorted(arcs, s, side="right")) - 1, len(seg) - 1)
        frac = (s - arcs[j]) / seg_len[j] if seg_len[j] > 0 else 0.0
        pos = route[j] + frac * seg[j]
        yaw = float(np.arctan2(seg[j][1], seg[j][0]))
        poses.append(RigidPose(quat_about_z(yaw), pos))
    return poses


def generate_traversals(
    scene: SceneSpec,
    n_traversals: int,
    frame_spacing: float = 5.0,
    *,
    jitter_t: float = 0.0,
    jitter_yaw_deg: float = 0.0,
) -> list[list[FrameRecord]]:
    """Sweep the route once per traversal, with its transients and jitter.

    Jitter draws come from a single PCG64 stream seeded by the scene, so
    the whole multi-traversal world is reproducible.  The returned frame
    lists feed TraversalStore.ingest_traversal directly.
    """
    if n_traversals < 1:
        raise ContractViolation(f"n_traversals must be >= 1, got {n_traversals}")
    rng = np.random.Generator(np.random.PCG64(scene.seed))
    base = route_poses(scene, frame_spacing)
    traversals = []
    for n in range(n_traversals):
        frames = []
        for j, pose in enumerate(base):
            dt = jitter_t * rng.standard_normal(3)
            dyaw = np.radians(jitter_yaw_deg * float(rng.standard_normal()))
            jittered = RigidPose(
                quat_about_z(_pose_yaw(pose) + dyaw) if jitter_yaw_deg > 0 else pose.rotation,
                pose.translation + dt if jitter_t > 0 else pose.translation,
            )
            cloud = raycast_sweep(scene, jittered, include_transients_of=n)
            if len(cloud) == 0:
                log.debug("traversal %d frame %d sees no surface; skipped", n, j)
                continue
            frames.append(
                FrameRecord(
                    traversal_id=n,
                    frame_index=j,
                    timestamp=n * 1e4 + float(j),
                    pose=jittered,
                    points=cloud,
                )
            )
        if not frames:
            raise ContractViolation(f"traversal {n} saw no surface anywhere along the route")
        traversals.append(frames)
    return traversals


def _pose_yaw(pose: RigidPose) -> float:
    w, x, y, z = pose.rotation
    return float(np.arctan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z)))


# --- scene descriptor files --------------------------------------------------

def _parse_csv_floats(text: str, n: int, source: str) -> list[float]:
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != n:
        raise FormatError(f"{source}: expected {n} comma-separated numbers, got {text!r}")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise FormatError(f"{source}: non-numeric value in {text!r}") from None


def _parse_box(text: str, source: str) -> Box:
    vals = _parse_csv_floats(text, 7, source)
    return Box(np.array(vals[0:3]), np.array(vals[3:6]), np.radians(vals[6]))


def read_scene_file(path) -> SceneSpec:
    """Scene descriptor: repeatable `box`, `transient`, `route` keys plus
    scalar LiDAR parameters.  Boxes are cx,cy,cz, sx,sy,sz, yaw_deg;
    transients carry a `traversal-index:` prefix; routes are
    semicolon-separated x,y,z triples."""
    pairs = kvfile.read_kv_file(path)
    source = str(path)
    scalars: dict[str, str] = {}
    boxes: list[Box] = []
    transients: list[tuple[int, Box]] = []
    route_pts: list[list[float]] = []
    for key, value in pairs:
        if key == "box":
            boxes.append(_parse_box(value, source))
        elif key == "transient":
            idx_text, sep, rest = value.partition(":")
            if not sep:
                raise FormatError(f"{source}: transient needs a 'traversal-index:' prefix, got {value!r}")
            try:
                idx = int(idx_text.strip())
            except ValueError:
                raise FormatError(f"{source}: bad transient traversal index {idx_text!r}") from None
            transients.append((idx, _parse_box(rest, source)))
        elif key == "route":
            for chunk in value.split(";"):
                chunk = chunk.strip()
                if chunk:
                    route_pts.append(_parse_csv_floats(chunk, 3, source))
        elif key in scalars:
            raise FormatError(f"{source}: duplicate key {key!r}")
        else:
            scalars[key] = value
    if len(route_pts) < 2:
        raise FormatError(f"{source}: route needs at least 2 points")

    known = {"ground", "rings", "azimuth_step", "max_range", "elev_min", "elev_max", "seed"}
    unknown = set(scalars) - known
    if unknown:
        raise FormatError(f"{source}: unknown keys: {', '.join(sorted(unknown))}")

    def opt_float(key: str, default: float) -> float:
        return kvfile.parse_float(scalars, key, source) if key in scalars else default

    try:
        return SceneSpec(
            route=np.array(route_pts),
            ground_height=kvfile.parse_float(scalars, "ground", source) if "ground" in scalars else None,
            boxes=tuple(boxes),
            transients=tuple(transients),
            rings=kvfile.parse_int(scalars, "rings", source) if "rings" in scalars else 32,
            azimuth_step_deg=opt_float("azimuth_step", 0.5),
            max_range=opt_float("max_range", 80.0),
            elev_min_deg=opt_float("elev_min", -25.0),
            elev_max_deg=opt_float("elev_max", 5.0),
            seed=kvfile.parse_int(scalars, "seed", source) if "seed" in scalars else 0,
        )
    except ContractViolation as exc:
        raise FormatError(f"{source}: {exc}") from None


def write_scene_file(path, scene: SceneSpec) -> None:
    lines = []
    if scene.ground_height is not None:
        lines.append(f"ground = {scene.ground_height!r}")
    for box in scene.boxes:
        lines.append("box = " + _format_box(box))
    for idx, box in scene.transients:
        lines.append(f"transient = {idx}: " + _format_box(box))
    route = "; ".join(f"{p[0]!r}, {p[1]!r}, {p[2]!r}" for p in scene.route.tolist())
    lines.append(f"route = {route}")
    lines.append(f"rings = {scene.rings}")
    lines.append(f"azimuth_step = {scene.azimuth_step_deg!r}")
    lines.append(f"max_range = {scene.max_range!r}")
    lines.append(f"elev_min = {scene.elev_min_deg!r}")
    lines.append(f"elev_max = {scene.elev_max_deg!r}")
    lines.append(f"seed = {scene.seed}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _format_box(box: Box) -> str:
    vals = [*box.center.tolist(), *box.size.tolist(), float(np.degrees(box.yaw))]
    return ", ".join(repr(v) for v in vals)
