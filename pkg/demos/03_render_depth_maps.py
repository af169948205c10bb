#!/usr/bin/env python3
"""Render one asynchronous depth map per past traversal for two cameras.

The query pulls three frames out of each stored traversal, their clouds are
unioned into one densified cloud per traversal, and each cloud is splatted
into every camera.  Pixels keep the farthest depth so that opaque surfaces
win over stray foreground returns, and pixels nothing projects into carry
the sentinel -1.

Run:  python3 demos/03_render_depth_maps.py
Depth images land in demos/out/ as 16-bit PGMs (millimeters).
"""

import pathlib

import numpy as np

import pastdepth as pd

OUT = pathlib.Path(__file__).parent / "out"
FORWARD_Q = np.array([0.5, 0.5, -0.5, 0.5])  # ego +x ahead -> camera +z


def main():
    OUT.mkdir(exist_ok=True)

    route = np.array([[0.0, 0.0, 1.8], [80.0, 0.0, 1.8]])
    scene = pd.SceneSpec(
        route=route,
        ground_height=0.0,
        boxes=(
            pd.Box(center=np.array([40.0, -4.0, 1.0]), size=np.array([4.0, 2.0, 2.0])),
            pd.Box(center=np.array([55.0, 4.0, 1.5]), size=np.array([2.0, 2.0, 3.0])),
        ),
        rings=48,
        azimuth_step_deg=0.5,
        seed=21,
    )

    store = pd.TraversalStore()
    # A little pose jitter per drive so the traversals are not clones.
    traversals = pd.generate_traversals(scene, n_traversals=4, frame_spacing=5.0,
                                        jitter_t=0.3, jitter_yaw_deg=1.0)
    for frames in traversals:
        store.ingest_traversal(frames)

    ego = pd.RigidPose(np.array([1.0, 0.0, 0.0, 0.0]), np.array([30.0, 0.0, 1.8]))
    cams = [
        pd.CameraModel.from_values(fx=260.0, fy=260.0, cx=208.0, cy=96.0,
                                   width=416, height=192,
                                   extrinsics=pd.RigidPose(FORWARD_Q)),
        # Same optics, mounted 0.5 m to the left and nudged 25 degrees out.
        pd.CameraModel.from_values(fx=260.0, fy=260.0, cx=208.0, cy=96.0,
                                   width=416, height=192,
                                   extrinsics=pd.compose(
                                       pd.RigidPose(FORWARD_Q),
                                       pd.RigidPose(pd.quat_about_z(np.deg2rad(25.0)),
                                                    np.array([0.0, 0.5, 0.0])).inverse())),
    ]

    cfg = pd.QueryConfig(max_traversals=3, offsets=(0.0, -20.0, 20.0), search_radius=10.0)
    maps = pd.render_all(ego, cams, cfg, store, max_depth=60.0)

    print(f"rendered {len(maps)} depth maps "
          f"({len(set(t for t, _ in maps))} traversals x {len(cams)} cameras)")
    for (tid, ci), dm in sorted(maps.items()):
        valid = dm.data > 0
        frac = valid.mean()
        print(f"  traversal {tid} cam {ci}: {frac:5.1%} covered, "
              f"depth {dm.data[valid].min():5.2f}..{dm.data[valid].max():5.2f} m")
        pd.write_depth_pgm(OUT / f"trav{tid}_cam{ci}.pgm", dm)
        pd.write_depthmap(OUT / f"trav{tid}_cam{ci}.addm", dm)

    # The keep-the-farthest rule makes rendering order irrelevant: a
    # cloud rendered whole equals the pixelwise max of renders of any
    # split of it, bit for bit.
    match = store.query_frames(ego.translation, cfg)[0]
    frames = list({f.frame_index: f for f in match.frames}.values())
    whole = pd.render_depth(pd.densify(frames), ego, cams[0], max_depth=60.0)
    head = pd.render_depth(pd.densify(frames[:1]), ego, cams[0], max_depth=60.0)
    tail = pd.render_depth(pd.densify(frames[1:]), ego, cams[0], max_depth=60.0)
    stacked = np.maximum(head.data, tail.data)
    print(f"render(union) == max(renders): {np.array_equal(whole.data, stacked)}")
    print(f"depth images written to {OUT}/")


if __name__ == "__main__":
    main()
