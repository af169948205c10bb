#!/usr/bin/env python3
"""Turn per-traversal depth maps into one pooled feature block per camera.

Each depth map is downsampled by block averaging that ignores the -1
sentinel, the per-traversal features are pooled across traversals (mean
here, max also available), and the result is concatenated behind a fake
image feature tensor the way a detector backbone would consume it.

Run:  python3 demos/04_features_and_pooling.py
"""

import pathlib

import numpy as np

import pastdepth as pd

OUT = pathlib.Path(__file__).parent / "out"
FORWARD_Q = np.array([0.5, 0.5, -0.5, 0.5])
SCALE = 8


def main():
    OUT.mkdir(exist_ok=True)

    scene = pd.SceneSpec(
        route=np.array([[0.0, 0.0, 1.8], [80.0, 0.0, 1.8]]),
        ground_height=0.0,
        boxes=(pd.Box(center=np.array([45.0, -3.0, 1.2]), size=np.array([4.0, 2.0, 2.4])),),
        rings=48,
        azimuth_step_deg=0.5,
        seed=5,
    )
    store = pd.TraversalStore()
    for frames in pd.generate_traversals(scene, n_traversals=5, frame_spacing=5.0,
                                         jitter_t=0.4, jitter_yaw_deg=1.5):
        store.ingest_traversal(frames)

    ego = pd.RigidPose(np.array([1.0, 0.0, 0.0, 0.0]), np.array([30.0, 0.0, 1.8]))
    cam = pd.CameraModel.from_values(fx=260.0, fy=260.0, cx=208.0, cy=96.0,
                                     width=416, height=192,
                                     extrinsics=pd.RigidPose(FORWARD_Q))
    cfg = pd.QueryConfig()
    maps = pd.render_all(ego, [cam], cfg, store)

    feats = [pd.downavg_featurize(dm, SCALE) for dm in maps.values()]
    f = feats[0]
    print(f"{len(feats)} maps of {cam.height}x{cam.width} "
          f"-> features of {f.data.shape} at 1/{SCALE} resolution")

    pooled_mean = pd.pool_traversals(feats, "mean")
    pooled_max = pd.pool_traversals(feats, "max")
    valid = pooled_mean.data > 0
    print(f"mean-pooled: {valid.mean():5.1%} of cells valid, "
          f"range {pooled_mean.data[valid].min():.2f}..{pooled_mean.data[valid].max():.2f} m")
    print(f"max-pooled:  mean abs gap to mean-pool "
          f"{np.abs(pooled_max.data - pooled_mean.data)[valid].mean():.3f} m")

    # Stand-in for a backbone's output at the same stride: 64 channels
    # of whatever; only the shape matters for the concat contract.
    fake_img = pd.FeatureTensor(np.zeros((64, f.data.shape[1], f.data.shape[2]), dtype=np.float32))
    combined = pd.concat_features(fake_img, pooled_mean)
    print(f"concat(image {fake_img.data.shape}, depth {pooled_mean.data.shape}) "
          f"-> {combined.data.shape} (image channels first)")

    path = OUT / "pooled_depth.adtf"
    pd.write_tensor(path, pooled_mean)
    again = pd.read_tensor(path)
    print(f"wrote {path} ({path.stat().st_size} bytes), "
          f"round-trip bit-identical: {np.array_equal(again.data, pooled_mean.data)}")


if __name__ == "__main__":
    main()
