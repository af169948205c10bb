"""Latency and storage measurements for the query-to-feature pipeline.

All numbers are wall-clock and machine-dependent; the one portable
property is that rasterization cost scales linearly in point count,
which render_scaling_probe measures directly.
"""

from __future__ import annotations

import time

import numpy as np

from .errors import ContractViolation
from .featurize import downavg_featurize, pool_traversals
from .geometry import CameraModel, Frame, PointCloud, RigidPose
from .render import DEFAULT_MAX_DEPTH, densify, render_depth
from .store import QueryConfig, TraversalStore


def _stage_stats(out: dict, stage: str, seconds: list[float]) -> None:
    ms = np.asarray(seconds) * 1e3
    out[f"{stage}_mean_ms"] = float(ms.mean())
    out[f"{stage}_p50_ms"] = float(np.percentile(ms, 50))
    out[f"{stage}_p95_ms"] = float(np.percentile(ms, 95))


def run_pipeline_bench(
    store: TraversalStore,
    ego: RigidPose,
    cams: list[CameraModel],
    cfg: QueryConfig,
    *,
    repeat: int = 5,
    scale: int = 8,
    max_depth: float = DEFAULT_MAX_DEPTH,
) -> dict:
    """Time each stage (query, densify, render, featurize) over `repeat` runs.

    Returns a flat dict of metrics: per-stage mean/p50/p95 milliseconds,
    end-to-end latency, points processed per run, render throughput and
    store size.  An empty query result is fine; the downstream stages
    then time trivially over zero maps.
    """
    if repeat < 1:
        raise ContractViolation(f"repeat must be >= 1, got {repeat}")
    stages: dict[str, list[float]] = {"query": [], "densify": [], "render": [], "featurize": [], "total": []}
    points_processed = 0
    n_maps = 0
    for _ in range(repeat):
        t0 = time.perf_counter()
        # An empty store is a legal bench subject; query_frames itself
        # treats it as a caller error.
        matches = store.query_frames(ego.translation, cfg) if len(store) else []
        t1 = time.perf_counter()
        clouds = []
        for m in matches:
            unique = {fr.frame_index: fr for fr in m.frames}
            clouds.append(densify([unique[k] for k in sorted(unique)]))
        t2 = time.perf_counter()
        maps = [
            render_depth(cloud, ego, cam, max_depth=max_depth, camera_id=ci)
            for cloud in clouds
            for ci, cam in enumerate(cams)
        ]
        t3 = time.perf_counter()
        for ci in range(len(cams)):
            per_cam = [downavg_featurize(dm, scale) for dm in maps if dm.camera_id == ci]
            if per_cam:
                pool_traversals(per_cam, "mean")
        t4 = time.perf_counter()
        stages["query"].append(t1 - t0)
        stages["densify"].append(t2 - t1)
        stages["render"].append(t3 - t2)
        stages["featurize"].append(t4 - t3)
        stages["total"].append(t4 - t0)
        points_processed = sum(len(c.points) for c in clouds)
        n_maps = len(maps)

    out: dict = {}
    for stage, samples in stages.items():
        _stage_stats(out, stage, samples)
    out["repeat"] = repeat
    out["traversals_matched"] = n_maps // max(len(cams), 1)
    out["cameras"] = len(cams)
    out["depth_maps_per_run"] = n_maps
    out["points_per_run"] = points_processed
    render_s = out["render_mean_ms"] / 1e3
    out["render_points_per_second"] = float(points_processed * len(cams) / render_s) if render_s > 0 else 0.0
    out["store_bytes"] = store.store_size_bytes()
    return out


def _frustum_cloud(n: int, cam: CameraModel, rng: np.random.Generator,
                   max_depth: float) -> PointCloud:
    z = rng.uniform(1.0, max_depth - 1.0, n)
    u = rng.uniform(0.0, cam.width, n)
    v = rng.uniform(0.0, cam.height, n)
    k = cam.intrinsics
    x = (u - k[0, 2]) * z / k[0, 0]
    y = (v - k[1, 2]) * z / k[1, 1]
    return PointCloud(np.stack([x, y, z], axis=1), Frame.GLOBAL)


def render_scaling_probe(
    n_points: int = 150_000,
    *,
    width: int = 800,
    height: int = 384,
    repeat: int = 9,
    warmup: int = 2,
    seed: int = 0,
) -> dict:
    """Best render time at n and 2n in-frustum points, plus their ratio.

    With linear rasterization cost the ratio sits near 2.0; the camera
    is a plain centered pinhole at the requested resolution.  The two
    sizes are timed in alternation and aggregated with min so that a
    load spike hitting one stretch of the probe cannot skew the ratio:
    background load only ever adds time, never removes it.
    """
    if n_points < 1:
        raise ContractViolation(f"n_points must be >= 1, got {n_points}")
    cam = CameraModel.from_values(
        fx=0.5 * width, fy=0.5 * width, cx=width / 2.0, cy=height / 2.0,
        width=width, height=height,
    )
    ego = RigidPose.identity()
    rng = np.random.Generator(np.random.PCG64(seed))
    base = _frustum_cloud(n_points, cam, rng, DEFAULT_MAX_DEPTH)
    doubled = _frustum_cloud(2 * n_points, cam, rng, DEFAULT_MAX_DEPTH)
    times: dict[str, list[float]] = {"base": [], "doubled": []}
    for i in range(warmup + repeat):
        for label, cloud in (("base", base), ("doubled", doubled)):
            t0 = time.perf_counter()
            render_depth(cloud, ego, cam)
            elapsed = time.perf_counter() - t0
            if i >= warmup:
                times[label].append(elapsed)
    out: dict = {"scaling_points_base": n_points, "scaling_points_doubled": 2 * n_points}
    for label, samples in times.items():
        out[f"scaling_{label}_ms"] = float(min(samples) * 1e3)
    out["scaling_ratio"] = out["scaling_doubled_ms"] / out["scaling_base_ms"]
    return out
