"""Shared factories for randomized tests.

Oracles live in the test modules themselves (scipy rotations, explicit
homogeneous matrices, naive loops); this file only builds inputs.
"""

from __future__ import annotations

import numpy as np
import pytest

from pastdepth import CameraModel, Frame, FrameRecord, PointCloud, RigidPose


def random_unit_quat(rng: np.random.Generator) -> np.ndarray:
    q = rng.standard_normal(4)
    return q / np.linalg.norm(q)


def random_pose(rng: np.random.Generator, t_scale: float = 10.0) -> RigidPose:
    return RigidPose(random_unit_quat(rng), rng.uniform(-t_scale, t_scale, 3))


def random_camera(rng: np.random.Generator, with_extrinsics: bool = True) -> CameraModel:
    width = int(rng.integers(64, 1024))
    height = int(rng.integers(64, 512))
    return CameraModel.from_values(
        fx=float(rng.uniform(50.0, 600.0)),
        fy=float(rng.uniform(50.0, 600.0)),
        cx=float(rng.uniform(0.0, width - 1e-6)),
        cy=float(rng.uniform(0.0, height - 1e-6)),
        width=width,
        height=height,
        extrinsics=random_pose(rng, t_scale=2.0) if with_extrinsics else None,
    )


def make_frame(
    tid: int,
    idx: int,
    pose: RigidPose,
    points: np.ndarray,
    timestamp: float | None = None,
) -> FrameRecord:
    return FrameRecord(
        traversal_id=tid,
        frame_index=idx,
        timestamp=float(idx) if timestamp is None else timestamp,
        pose=pose,
        points=PointCloud(np.asarray(points, dtype=np.float32), Frame.SENSOR),
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(1234))
