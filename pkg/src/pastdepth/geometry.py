"""Rigid transforms and pinhole projection.

Conventions used throughout the package:

* quaternions are scalar-first ``(w, x, y, z)`` and kept unit-norm,
* pose math runs in float64; point payloads may arrive as float32
  (the storage dtype) and are promoted to float64 inside transforms,
* pixel ``u`` indexes columns (width axis), ``v`` indexes rows (height
  axis), and continuous image coordinates are mapped to indices with
  ``floor``, never ``round``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ContractViolation, FormatError
from . import kvfile

_UNIT_TOL = 1e-9

# Exact field names of the camera / pose descriptor text format.
POSE_KEYS = ("qw", "qx", "qy", "qz", "tx", "ty", "tz")
CAMERA_KEYS = ("fx", "fy", "cx", "cy", "width", "height") + POSE_KEYS


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product of two (w, x, y, z) quaternions."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_rotation_matrix(q: np.ndarray) -> np.ndarray:
    """3x3 rotation matrix of a unit (w, x, y, z) quaternion."""
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_about_z(angle_rad: float) -> np.ndarray:
    """Unit quaternion for a rotation of ``angle_rad`` about the +z axis."""
    half = 0.5 * angle_rad
    return np.array([np.cos(half), 0.0, 0.0, np.sin(half)])


def _frozen_f64(values, shape: tuple[int, ...], what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != shape:
        raise ContractViolation(f"{what}: expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation(f"{what}: non-finite entries")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class RigidPose:
    """6-DoF transform from a local frame into its parent frame.

    ``apply`` maps local coordinates to parent coordinates:
    ``x_parent = R(rotation) @ x_local + translation``.
    """

    rotation: np.ndarray
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = _frozen_f64(self.rotation, (4,), "rotation quaternion")
        t = _frozen_f64(self.translation, (3,), "translation")
        norm = float(np.sqrt(np.dot(q, q)))
        if abs(norm - 1.0) > _UNIT_TOL:
            if norm < 1e-12:
                raise ContractViolation(f"rotation quaternion has near-zero norm {norm}")
            # Renormalize only when actually off-unit: dividing an already
            # unit quaternion by its ~1.0 norm would perturb the bits and
            # break exact round-trips through the store.
            q = q / norm
            q.flags.writeable = False
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidPose":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @property
    def rotation_matrix(self) -> np.ndarray:
        return quat_rotation_matrix(self.rotation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (N, 3) array of points into the parent frame (float64)."""
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ContractViolation(f"expected (N, 3) points, got shape {pts.shape}")
        rotated = pts @ self.rotation_matrix.T
        np.add(rotated, self.translation, out=rotated)
        return rotated

    def inverse(self) -> "RigidPose":
        conj = np.array([self.rotation[0], -self.rotation[1], -self.rotation[2], -self.rotation[3]])
        t_inv = -(quat_rotation_matrix(conj) @ self.translation)
        return RigidPose(conj, t_inv)


def compose(a: RigidPose, b: RigidPose) -> RigidPose:
    """Pose applying ``b`` first, then ``a``."""
    q = quat_multiply(a.rotation, b.rotation)
    t = a.rotation_matrix @ b.translation + a.translation
    return RigidPose(q, t)


class Frame(enum.Enum):
    SENSOR = "sensor-local"
    GLOBAL = "global"
    CAMERA = "camera-local"


@dataclass(frozen=True)
class PointCloud:
    """An (N, 3) batch of points tagged with the frame they live in.

    float32 and float64 payloads are both accepted; float32 is the
    storage dtype, float64 what transforms produce.
    """

    points: np.ndarray
    frame: Frame

    def __post_init__(self):
        pts = np.asarray(self.points)
        if pts.dtype not in (np.float32, np.float64):
            pts = pts.astype(np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ContractViolation(f"point cloud must be (N, 3), got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ContractViolation("point cloud contains non-finite coordinates")
        if not isinstance(self.frame, Frame):
            raise ContractViolation(f"frame tag must be a Frame, got {self.frame!r}")
        pts = np.ascontiguousarray(pts)
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera: 3x3 intrinsics plus an ego-to-camera extrinsic pose."""

    intrinsics: np.ndarray
    extrinsics: RigidPose
    width: int
    height: int

    def __post_init__(self):
        k = _frozen_f64(self.intrinsics, (3, 3), "intrinsics")
        if not (self.width > 0 and self.height > 0):
            raise ContractViolation(f"image size must be positive, got {self.width}x{self.height}")
        if k[2, 2] != 1.0 or k[2, 0] != 0.0 or k[2, 1] != 0.0:
            raise ContractViolation("intrinsics bottom row must be (0, 0, 1)")
        if k[0, 0] <= 0.0 or k[1, 1] <= 0.0:
            raise ContractViolation(f"focal lengths must be positive, got fx={k[0, 0]}, fy={k[1, 1]}")
        cx, cy = k[0, 2], k[1, 2]
        if not (0.0 <= cx < self.width and 0.0 <= cy < self.height):
            raise ContractViolation(
                f"principal point ({cx}, {cy}) outside image [0,{self.width})x[0,{self.height})"
            )
        object.__setattr__(self, "intrinsics", k)

    @classmethod
    def from_values(
        cls, fx: float, fy: float, cx: float, cy: float, width: int, height: int,
        extrinsics: RigidPose | None = None,
    ) -> "CameraModel":
        k = np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])
        return cls(k, extrinsics if extrinsics is not None else RigidPose.identity(), width, height)


def transform_to_camera(pc: PointCloud, ego: RigidPose, cam: CameraModel) -> PointCloud:
    """Express a global-frame cloud in a camera's local frame.

    ``ego`` is the querying vehicle's pose (local ego frame -> global);
    the result applies the camera extrinsics after undoing it.
    """
    if pc.frame is not Frame.GLOBAL:
        raise ContractViolation(f"expected a global-frame cloud, got {pc.frame.value}")
    world_to_cam = compose(cam.extrinsics, ego.inverse())
    return PointCloud(world_to_cam.apply(pc.points), Frame.CAMERA)


class Projection(NamedTuple):
    u: np.ndarray       # column indices, int64
    v: np.ndarray       # row indices, int64
    depth: np.ndarray   # camera-frame z, float64, > z_near
    dropped: int        # points culled (behind camera or out of frame)


def project_points(pc: PointCloud, cam: CameraModel, z_near: float = 1e-3) -> Projection:
    """Project a camera-frame cloud to integer pixel indices and depths.

    Points with depth <= z_near or landing outside the image are dropped
    silently; the count of dropped points is returned for diagnostics.
    """
    if pc.frame is not Frame.CAMERA:
        raise ContractViolation(f"expected a camera-frame cloud, got {pc.frame.value}")
    pts = np.asarray(pc.points, dtype=np.float64)
    k = cam.intrinsics
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    # Project everything and cull with a single mask; the division is
    # junk for points at or behind the image plane, but those rows are
    # discarded below and one gather pass beats two on large clouds.
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.floor((k[0, 0] * x + k[0, 1] * y + k[0, 2] * z) / z).astype(np.int64)
        v = np.floor((k[1, 0] * x + k[1, 1] * y + k[1, 2] * z) / z).astype(np.int64)
    keep = (z > z_near) & (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
    dropped = len(pc) - int(np.count_nonzero(keep))
    return Projection(u[keep], v[keep], z[keep], dropped)


# --- descriptor files -------------------------------------------------------

def _pose_from_dict(d: dict[str, str], source: str) -> RigidPose:
    q = [kvfile.parse_float(d, k, source) for k in ("qw", "qx", "qy", "qz")]
    t = [kvfile.parse_float(d, k, source) for k in ("tx", "ty", "tz")]
    try:
        return RigidPose(np.array(q), np.array(t))
    except ContractViolation as exc:
        raise FormatError(f"{source}: {exc}") from None


def read_pose_file(path) -> RigidPose:
    """Read a pose descriptor (qw qx qy qz tx ty tz key-value lines)."""
    d = kvfile.kv_to_dict(kvfile.read_kv_file(path), source=str(path))
    kvfile.require_keys(d, POSE_KEYS, str(path))
    return _pose_from_dict(d, str(path))


def write_pose_file(path, pose: RigidPose, extra: dict[str, str] | None = None) -> None:
    lines = []
    # repr(float) is the shortest round-trip form, so reading the file back
    # reproduces the exact float64 bits.
    for key, value in zip(POSE_KEYS, (*pose.rotation, *pose.translation)):
        lines.append(f"{key} = {float(value)!r}")
    for key, value in (extra or {}).items():
        lines.append(f"{key} = {value}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_camera_file(path) -> CameraModel:
    """Read a camera descriptor (intrinsics + ego-to-camera extrinsics)."""
    d = kvfile.kv_to_dict(kvfile.read_kv_file(path), source=str(path))
    kvfile.require_keys(d, CAMERA_KEYS, str(path))
    pose = _pose_from_dict(d, str(path))
    try:
        return CameraModel.from_values(
            fx=kvfile.parse_float(d, "fx", str(path)),
            fy=kvfile.parse_float(d, "fy", str(path)),
            cx=kvfile.parse_float(d, "cx", str(path)),
            cy=kvfile.parse_float(d, "cy", str(path)),
            width=kvfile.parse_int(d, "width", str(path)),
            height=kvfile.parse_int(d, "height", str(path)),
            extrinsics=pose,
        )
    except ContractViolation as exc:
        raise FormatError(f"{path}: {exc}") from None


def write_camera_file(path, cam: CameraModel) -> None:
    k = cam.intrinsics
    lines = [f"{key} = {float(k[i, j])!r}" for key, (i, j) in
             (("fx", (0, 0)), ("fy", (1, 1)), ("cx", (0, 2)), ("cy", (1, 2)))]
    lines.append(f"width = {int(cam.width)}")
    lines.append(f"height = {int(cam.height)}")
    for key, value in zip(POSE_KEYS, (*cam.extrinsics.rotation, *cam.extrinsics.translation)):
        lines.append(f"{key} = {float(value)!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
