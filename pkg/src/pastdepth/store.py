"""Geo-indexed persistence of past LiDAR traversals.

A store holds whole traversals (ordered frames of sensor-local points
plus sensor-to-global poses) and answers "frames near location p at
given along-road offsets" queries.  Along-road distance is arc length
along the piecewise-linear polyline of ego positions; the closest
approach of that polyline to the query point defines offset zero.

On-disk layout (ADST, little-endian):

    magic 'ADST' | version u32 | traversal-count u32
    per traversal: id u64 | frame-count u32
    per frame: timestamp f64 | qw qx qy qz f64 | tx ty tz f64
               | point-count u32 | count x (x, y, z) f32

Poses round-trip bit-exactly in float64, points in float32.  The
spatial index is rebuilt on open, never persisted.
"""

from __future__ import annotations

import dataclasses
import logging
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, FormatError
from .geometry import Frame, PointCloud, RigidPose
from . import kvfile

log = logging.getLogger(__name__)

MAGIC = b"ADST"
FORMAT_VERSION = 1

FILE_HEADER_BYTES = 12        # magic + version + traversal count
TRAVERSAL_HEADER_BYTES = 12   # id u64 + frame count u32
FRAME_HEADER_BYTES = 68       # timestamp + 7-float pose + point count
POINT_BYTES = 12              # x, y, z float32

DEFAULT_GRID_CELL = 25.0
DEFAULT_SEARCH_RADIUS = 10.0
DEFAULT_FRAME_SPACING = 5.0


@dataclass(frozen=True)
class FrameRecord:
    """One LiDAR sweep of a traversal: sensor-local points plus pose."""

    traversal_id: int
    frame_index: int
    timestamp: float
    pose: RigidPose
    points: PointCloud

    def __post_init__(self):
        if self.points.frame is not Frame.SENSOR:
            raise ContractViolation(
                f"frame points must be sensor-local, got {self.points.frame.value}"
            )
        if len(self.points) == 0:
            raise ContractViolation("frame has zero points")

    @property
    def ego_position(self) -> np.ndarray:
        return self.pose.translation


@dataclass(frozen=True)
class QueryConfig:
    """Limits for query_frames.

    offsets are meters along the traversal polyline relative to the
    closest approach to the query point; exclude_time_range optionally
    skips traversals whose timestamp span intersects the given
    (t0, t1) interval (no default policy is applied).
    """

    max_traversals: int = 5
    offsets: tuple[float, ...] = (0.0, -20.0, 20.0)
    search_radius: float = DEFAULT_SEARCH_RADIUS
    exclude_time_range: tuple[float, float] | None = None

    def __post_init__(self):
        if self.max_traversals < 1:
            raise ContractViolation(f"max_traversals must be >= 1, got {self.max_traversals}")
        if len(self.offsets) == 0:
            raise ContractViolation("offsets must be non-empty")
        if not self.search_radius > 0:
            raise ContractViolation(f"search_radius must be > 0, got {self.search_radius}")
        object.__setattr__(self, "offsets", tuple(float(o) for o in self.offsets))


@dataclass(frozen=True)
class TraversalMatch:
    """Per-traversal query result: one frame per requested offset."""

    traversal_id: int
    frames: tuple[FrameRecord, ...]
    approach_distance: float
    approach_arc: float


class TraversalStore:
    """In-memory traversal collection with an xy grid index.

    One writer or any number of readers; queries do not mutate state
    once the index is built (build happens eagerly on ingest/open).
    """

    def __init__(self, grid_cell: float = DEFAULT_GRID_CELL):
        if not grid_cell > 0:
            raise ContractViolation(f"grid_cell must be > 0, got {grid_cell}")
        self.grid_cell = float(grid_cell)
        self._traversals: dict[int, list[FrameRecord]] = {}
        self._next_id = 0
        self._grid: dict[tuple[int, int], list[tuple[int, int]]] = {}
        self._polylines: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._max_segment = 0.0

    # --- ingest -------------------------------------------------------

    def ingest_traversal(
        self, frames, frame_spacing: float | None = None, traversal_id: int | None = None
    ) -> int:
        """Persist one traversal, returning its new id.

        Frames must arrive ordered by strictly increasing frame-index.
        When frame_spacing is given, frames closer than spacing/2 to the
        previously kept frame (straight-line ego distance) are thinned.
        Ids are assigned sequentially unless an unused traversal_id is
        forced explicitly.
        """
        frames = list(frames)
        if not frames:
            raise ContractViolation("traversal must contain at least one frame")
        for i in range(1, len(frames)):
            if frames[i].frame_index <= frames[i - 1].frame_index:
                raise ContractViolation(
                    f"frames out of order at position {i}: frame-index "
                    f"{frames[i].frame_index} after {frames[i - 1].frame_index}"
                )
        if frame_spacing is not None:
            if not frame_spacing > 0:
                raise ContractViolation(f"frame_spacing must be > 0, got {frame_spacing}")
            kept = [frames[0]]
            for fr in frames[1:]:
                gap = float(np.linalg.norm(fr.ego_position - kept[-1].ego_position))
                if gap >= frame_spacing / 2.0:
                    kept.append(fr)
            frames = kept
        if traversal_id is None:
            tid = self._next_id
        else:
            tid = int(traversal_id)
            if tid < 0 or tid in self._traversals:
                raise ContractViolation(f"traversal id {traversal_id} is negative or already taken")
        self._next_id = max(self._next_id, tid + 1)
        self._traversals[tid] = [dataclasses.replace(fr, traversal_id=tid) for fr in frames]
        self._index_traversal(tid)
        return tid

    def _index_traversal(self, tid: int) -> None:
        frames = self._traversals[tid]
        positions = np.stack([fr.ego_position for fr in frames])
        seg_lengths = np.linalg.norm(np.diff(positions, axis=0), axis=1)
        arcs = np.concatenate([[0.0], np.cumsum(seg_lengths)])
        self._polylines[tid] = (positions, arcs)
        if len(seg_lengths):
            self._max_segment = max(self._max_segment, float(seg_lengths.max()))
        for fidx, fr in enumerate(frames):
            cell = self._cell_of(fr.ego_position[0], fr.ego_position[1])
            self._grid.setdefault(cell, []).append((tid, fidx))

    def _cell_of(self, x: float, y: float) -> tuple[int, int]:
        return (int(np.floor(x / self.grid_cell)), int(np.floor(y / self.grid_cell)))

    def grid_lookup(self, x: float, y: float) -> list[tuple[int, int]]:
        """(traversal-id, frame-position) references indexed in the cell at (x, y)."""
        return list(self._grid.get(self._cell_of(x, y), ()))

    # --- access -------------------------------------------------------

    @property
    def traversal_ids(self) -> list[int]:
        return sorted(self._traversals)

    def frames(self, tid: int) -> list[FrameRecord]:
        if tid not in self._traversals:
            raise ContractViolation(f"unknown traversal id {tid}")
        return list(self._traversals[tid])

    def __len__(self) -> int:
        return len(self._traversals)

    # --- query --------------------------------------------------------

    def query_frames(self, p, cfg: QueryConfig) -> list[TraversalMatch]:
        """Frames of up to cfg.max_traversals traversals near point p.

        For each matched traversal and each offset o, returns the frame
        whose polyline arc position is nearest to (closest-approach arc
        + o); ties go to the earlier frame.  Results are ordered by
        ascending traversal-id.  An empty list (no polyline within
        search_radius) is a valid result, not an error.
        """
        if not self._traversals:
            raise ContractViolation("query on an empty store")
        p = np.asarray(p, dtype=np.float64)
        if p.shape != (3,):
            raise ContractViolation(f"query point must be a 3-vector, got shape {p.shape}")

        # A polyline passing within search_radius has a vertex within
        # sqrt(radius^2 + (max_segment/2)^2) of p, which bounds the grid
        # box to scan.
        reach = float(np.hypot(cfg.search_radius, self._max_segment / 2.0)) + 1e-9
        gx0, gy0 = self._cell_of(p[0] - reach, p[1] - reach)
        gx1, gy1 = self._cell_of(p[0] + reach, p[1] + reach)
        candidates: set[int] = set()
        for gx in range(gx0, gx1 + 1):
            for gy in range(gy0, gy1 + 1):
                for tid, _ in self._grid.get((gx, gy), ()):
                    candidates.add(tid)

        scored: list[tuple[float, int, float]] = []
        for tid in sorted(candidates):
            if cfg.exclude_time_range is not None and self._overlaps_time(tid, cfg.exclude_time_range):
                continue
            dist, arc = self._closest_approach(tid, p)
            if dist <= cfg.search_radius:
                scored.append((dist, tid, arc))
        scored.sort(key=lambda s: (s[0], s[1]))
        chosen = sorted(scored[: cfg.max_traversals], key=lambda s: s[1])

        out = []
        for dist, tid, arc in chosen:
            frames = self._traversals[tid]
            _, arcs = self._polylines[tid]
            picks = []
            for off in cfg.offsets:
                j = int(np.argmin(np.abs(arcs - (arc + off))))
                picks.append(frames[j])
            out.append(TraversalMatch(tid, tuple(picks), dist, arc))
        return out

    def _overlaps_time(self, tid: int, span: tuple[float, float]) -> bool:
        stamps = [fr.timestamp for fr in self._traversals[tid]]
        t0, t1 = span
        return max(stamps) >= t0 and min(stamps) <= t1

    def _closest_approach(self, tid: int, p: np.ndarray) -> tuple[float, float]:
        """Distance from p to the traversal polyline and the arc length there."""
        positions, arcs = self._polylines[tid]
        if len(positions) == 1:
            return float(np.linalg.norm(p - positions[0])), 0.0
        a = positions[:-1]
        b = positions[1:]
        ab = b - a
        seg_len2 = np.einsum("ij,ij->i", ab, ab)
        t = np.einsum("ij,ij->i", p - a, ab) / np.where(seg_len2 > 0, seg_len2, 1.0)
        t = np.clip(t, 0.0, 1.0)
        closest = a + t[:, None] * ab
        d2 = np.einsum("ij,ij->i", p - closest, p - closest)
        j = int(np.argmin(d2))
        arc = float(arcs[j] + t[j] * np.sqrt(seg_len2[j]))
        return float(np.sqrt(d2[j])), arc

    # --- size & serialization ------------------------------------------

    def store_size_bytes(self, traversal_ids=None) -> int:
        """Exact serialized byte count of the selected traversals."""
        if traversal_ids is None:
            traversal_ids = self.traversal_ids
        total = FILE_HEADER_BYTES
        for tid in traversal_ids:
            if tid not in self._traversals:
                raise ContractViolation(f"unknown traversal id {tid}")
            total += TRAVERSAL_HEADER_BYTES
            for fr in self._traversals[tid]:
                total += FRAME_HEADER_BYTES + POINT_BYTES * len(fr.points)
        return total

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<II", FORMAT_VERSION, len(self._traversals)))
            for tid in self.traversal_ids:
                frames = self._traversals[tid]
                fh.write(struct.pack("<QI", tid, len(frames)))
                for fr in frames:
                    fh.write(struct.pack("<d", fr.timestamp))
                    fh.write(struct.pack("<4d", *fr.pose.rotation))
                    fh.write(struct.pack("<3d", *fr.pose.translation))
                    pts = np.ascontiguousarray(fr.points.points, dtype="<f4")
                    fh.write(struct.pack("<I", pts.shape[0]))
                    fh.write(pts.tobytes())

    @classmethod
    def open(cls, path, grid_cell: float = DEFAULT_GRID_CELL) -> "TraversalStore":
        with open(path, "rb") as fh:
            blob = fh.read()
        store = cls(grid_cell=grid_cell)
        view = memoryview(blob)
        if len(blob) < FILE_HEADER_BYTES or view[:4] != MAGIC:
            raise FormatError(f"{path}: not a traversal store (bad magic)")
        version, n_traversals = struct.unpack_from("<II", view, 4)
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported store version {version}")
        pos = FILE_HEADER_BYTES
        try:
            for _ in range(n_traversals):
                tid, n_frames = struct.unpack_from("<QI", view, pos)
                pos += TRAVERSAL_HEADER_BYTES
                frames = []
                for fidx in range(n_frames):
                    vals = struct.unpack_from("<8d", view, pos)
                    pos += 64
                    (count,) = struct.unpack_from("<I", view, pos)
                    pos += 4
                    pts = np.frombuffer(view, dtype="<f4", count=3 * count, offset=pos)
                    pos += POINT_BYTES * count
                    frames.append(
                        FrameRecord(
                            traversal_id=int(tid),
                            frame_index=fidx,
                            timestamp=vals[0],
                            pose=RigidPose(np.array(vals[1:5]), np.array(vals[5:8])),
                            points=PointCloud(pts.reshape(-1, 3), Frame.SENSOR),
                        )
                    )
                store._traversals[int(tid)] = frames
                store._index_traversal(int(tid))
        except struct.error as exc:
            raise FormatError(f"{path}: truncated store file ({exc})") from None
        if pos != len(blob):
            raise FormatError(f"{path}: {len(blob) - pos} trailing bytes after last frame")
        store._next_id = max(store._traversals, default=-1) + 1
        return store


# --- per-frame cloud / pose files for ingestion -----------------------------

def read_cloud_file(path) -> np.ndarray:
    """Load an (N, 3) float32 cloud from .ply (ascii or binary LE) or a raw
    float32 xyz blob (.xyz / .bin)."""
    path = str(path)
    if path.endswith(".ply"):
        return _read_ply(path)
    data = np.fromfile(path, dtype="<f4")
    if data.size == 0 or data.size % 3:
        raise FormatError(f"{path}: raw cloud must hold a multiple of 3 float32 values")
    return data.reshape(-1, 3)


def _read_ply(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(b"ply"):
        raise FormatError(f"{path}: missing ply magic")
    end = blob.find(b"end_header\n")
    if end < 0:
        raise FormatError(f"{path}: unterminated ply header")
    header = blob[:end].decode("ascii", errors="replace").splitlines()
    body = blob[end + len(b"end_header\n"):]

    fmt = None
    count = None
    props: list[tuple[str, str]] = []
    in_vertex = False
    for line in header[1:]:
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            in_vertex = parts[1] == "vertex"
            if in_vertex:
                count = int(parts[2])
        elif parts[0] == "property" and in_vertex:
            props.append((parts[2], parts[1]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise FormatError(f"{path}: unsupported ply format {fmt!r}")
    if count is None:
        raise FormatError(f"{path}: no vertex element")
    names = [n for n, _ in props]
    if not {"x", "y", "z"} <= set(names):
        raise FormatError(f"{path}: vertex element lacks x/y/z properties")

    np_types = {"float": "<f4", "float32": "<f4", "double": "<f8", "float64": "<f8",
                "uchar": "u1", "uint8": "u1", "int": "<i4", "int32": "<i4",
                "uint": "<u4", "uint32": "<u4", "short": "<i2", "ushort": "<u2"}
    try:
        dtypes = [np_types[t] for _, t in props]
    except KeyError as exc:
        raise FormatError(f"{path}: unsupported ply property type {exc}") from None

    if fmt == "ascii":
        rows = np.loadtxt(body.decode("ascii").splitlines(), ndmin=2, dtype=np.float64)
        if rows.shape[0] != count or rows.shape[1] != len(props):
            raise FormatError(f"{path}: expected {count}x{len(props)} ascii values")
        cols = [rows[:, names.index(k)] for k in ("x", "y", "z")]
    else:
        rec = np.dtype([(f"c{i}", t) for i, t in enumerate(dtypes)])
        if len(body) < rec.itemsize * count:
            raise FormatError(f"{path}: binary ply body shorter than header promises")
        table = np.frombuffer(body, dtype=rec, count=count)
        cols = [table[f"c{names.index(k)}"] for k in ("x", "y", "z")]
    return np.stack(cols, axis=1).astype(np.float32)


def read_frame_pose_file(path) -> tuple[RigidPose, float | None]:
    """Pose descriptor for one frame; returns (pose, optional timestamp)."""
    from .geometry import POSE_KEYS, _pose_from_dict

    d = kvfile.kv_to_dict(kvfile.read_kv_file(path), source=str(path))
    kvfile.require_keys(d, POSE_KEYS, str(path))
    pose = _pose_from_dict(d, str(path))
    ts = kvfile.parse_float(d, "timestamp", str(path)) if "timestamp" in d else None
    return pose, ts
