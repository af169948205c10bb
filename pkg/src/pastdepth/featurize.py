"""Depth-map featurization and cross-traversal pooling.

The built-in featurizer is deliberately unlearned: downsample each
depth map by an integer factor with sentinel-aware averaging, then pool
elementwise across traversals.  Learned featurizers live elsewhere and
interoperate through the ADTF tensor file format defined here.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, FormatError
from .render import SENTINEL, DepthMap

MAGIC = b"ADTF"

POOL_MODES = ("mean", "max")


@dataclass(frozen=True)
class FeatureTensor:
    """(channels, height, width) float32 tensor, channel-major in memory."""

    data: np.ndarray
    traversal_id: int | None = None

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise ContractViolation(f"feature tensor must be (channels, H, W), got shape {arr.shape}")
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        if not np.all(np.isfinite(arr)):
            raise ContractViolation("feature tensor contains non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


def downavg_featurize(dm: DepthMap, scale: int) -> FeatureTensor:
    """Downsample a depth map by an integer factor, skipping sentinels.

    Output cell (i, j) averages the valid (non-sentinel) depths of the
    scale x scale input block; an all-sentinel block stays -1.  Edge
    blocks are padded with sentinels, so output size is ceil(H/scale) x
    ceil(W/scale).  For an integer factor this equals an antialiased
    bilinear resize restricted to the valid mask.
    """
    if not (isinstance(scale, (int, np.integer)) and scale >= 1):
        raise ContractViolation(f"scale must be an integer >= 1, got {scale!r}")
    scale = int(scale)
    h, w = dm.height, dm.width
    out_h, out_w = math.ceil(h / scale), math.ceil(w / scale)
    padded = np.full((out_h * scale, out_w * scale), SENTINEL, dtype=np.float32)
    padded[:h, :w] = dm.data
    blocks = padded.reshape(out_h, scale, out_w, scale)
    valid = blocks != SENTINEL
    counts = valid.sum(axis=(1, 3))
    sums = np.where(valid, blocks.astype(np.float64), 0.0).sum(axis=(1, 3))
    cells = np.where(counts > 0, sums / np.maximum(counts, 1), -1.0)
    return FeatureTensor(cells.astype(np.float32)[None, :, :], traversal_id=dm.traversal_id)


def pool_traversals(feats: list[FeatureTensor], mode: str = "mean") -> FeatureTensor:
    """Elementwise pool across traversals.

    Inputs are processed in ascending traversal-id order (tensors
    without an id keep their list position, after the tagged ones), so
    mean pooling is bit-deterministic under input permutation.
    """
    if mode not in POOL_MODES:
        raise ContractViolation(f"pool mode must be one of {POOL_MODES}, got {mode!r}")
    if not feats:
        raise ContractViolation("pool_traversals needs at least one tensor")
    shape = feats[0].data.shape
    for i, f in enumerate(feats):
        if f.data.shape != shape:
            raise ContractViolation(
                f"tensor {i} has shape {f.data.shape}, expected {shape} (all inputs must match)"
            )
    ordered = sorted(
        enumerate(feats),
        key=lambda kv: (kv[1].traversal_id is None, kv[1].traversal_id
                        if kv[1].traversal_id is not None else kv[0]),
    )
    if mode == "max":
        acc32 = ordered[0][1].data
        for _, f in ordered[1:]:
            acc32 = np.maximum(acc32, f.data)
        return FeatureTensor(acc32)
    acc = np.zeros(shape, dtype=np.float64)
    for _, f in ordered:
        acc += f.data
    return FeatureTensor((acc / len(feats)).astype(np.float32))


def concat_features(f_img: FeatureTensor, f_depth: FeatureTensor) -> FeatureTensor:
    """Stack image channels first, then depth channels; spatial dims must match."""
    if (f_img.height, f_img.width) != (f_depth.height, f_depth.width):
        raise ContractViolation(
            f"spatial mismatch: image {f_img.height}x{f_img.width} vs "
            f"depth {f_depth.height}x{f_depth.width}"
        )
    return FeatureTensor(np.concatenate([f_img.data, f_depth.data], axis=0))


def write_tensor(path, t: FeatureTensor) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", 3))
        fh.write(struct.pack("<3I", t.channels, t.height, t.width))
        fh.write(t.data.astype("<f4", copy=False).tobytes())


def read_tensor(path) -> FeatureTensor:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise FormatError(f"{path}: not a feature tensor (bad magic)")
    (ndim,) = struct.unpack_from("<I", blob, 4)
    if ndim != 3:
        raise FormatError(f"{path}: unsupported tensor rank {ndim}")
    if len(blob) < 8 + 4 * ndim:
        raise FormatError(f"{path}: truncated dimension list")
    dims = struct.unpack_from(f"<{ndim}I", blob, 8)
    payload = 8 + 4 * ndim + 4 * int(np.prod(dims))
    if len(blob) != payload:
        raise FormatError(f"{path}: expected {payload} bytes for dims {dims}, got {len(blob)}")
    data = np.frombuffer(blob, dtype="<f4", offset=8 + 4 * ndim).reshape(dims)
    try:
        return FeatureTensor(data)
    except ContractViolation as exc:
        raise FormatError(f"{path}: {exc}") from None
