"""Composite detection score and depth error.

The score folds mAP and the three true-positive error metrics into one
number: DS = (3 * mAP + sum over metrics of (1 - min(1, m))) / 6, so a
metric at or beyond 1.0 contributes nothing and mAP carries half the
weight.  Computing mAP/ATE/ASE/AOE from raw boxes is detector-side and
out of scope; this module consumes the aggregated values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .render import SENTINEL, DepthMap


@dataclass(frozen=True)
class TPMetrics:
    """True-positive errors: translation (m), scale (fraction), orientation (rad)."""

    ate: float
    ase: float
    aoe: float

    def __post_init__(self):
        for name in ("ate", "ase", "aoe"):
            if getattr(self, name) < 0:
                raise ContractViolation(f"{name} must be >= 0, got {getattr(self, name)}")


def detection_score(map_value: float, tp: TPMetrics) -> float:
    if not 0.0 <= map_value <= 1.0:
        raise ContractViolation(f"mAP must be in [0, 1], got {map_value}")
    bonus = sum(1.0 - min(1.0, m) for m in (tp.ate, tp.ase, tp.aoe))
    return (3.0 * map_value + bonus) / 6.0


def depth_l1(pred: DepthMap, gt: DepthMap) -> float:
    """Mean absolute difference over pixels where both maps carry depth."""
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise ContractViolation(
            f"size mismatch: {pred.height}x{pred.width} vs {gt.height}x{gt.width}"
        )
    both = (pred.data != SENTINEL) & (gt.data != SENTINEL)
    if not both.any():
        raise ContractViolation("no pixel carries depth in both maps")
    diff = pred.data[both].astype(np.float64) - gt.data[both].astype(np.float64)
    return float(np.abs(diff).mean())
