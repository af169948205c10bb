#!/usr/bin/env python3
"""Build a small synthetic street and look at what the simulated LiDAR sees.

The world is a flat ground plane, two parked boxes, and one transient box
that exists only during traversal 1 (someone who parked there that day and
was gone the next).  A virtual sensor drives the route three times and
records a sweep every few meters; the script prints what each traversal
collected and writes a ground-truth depth image for a camera at the route
start, for eyeballing.

Run:  python3 demos/01_build_synthetic_world.py
Artifacts land in demos/out/.
"""

import pathlib

import numpy as np

import pastdepth as pd

OUT = pathlib.Path(__file__).parent / "out"

# Rotation taking ego coordinates (+x ahead, +z up) into camera
# coordinates (+z ahead, +y down): quaternion of
# [[0, -1, 0], [0, 0, -1], [1, 0, 0]].
FORWARD_Q = np.array([0.5, 0.5, -0.5, 0.5])


def main():
    OUT.mkdir(exist_ok=True)

    route = np.array([[0.0, 0.0, 1.8], [60.0, 0.0, 1.8]])
    scene = pd.SceneSpec(
        route=route,
        ground_height=0.0,
        boxes=(
            pd.Box(center=np.array([25.0, -6.0, 1.0]), size=np.array([4.0, 2.0, 2.0])),
            pd.Box(center=np.array([45.0, 5.0, 1.5]), size=np.array([3.0, 3.0, 3.0]), yaw=0.6),
        ),
        transients=(
            (1, pd.Box(center=np.array([35.0, -4.0, 1.0]), size=np.array([4.5, 2.0, 1.8]))),
        ),
        rings=32,
        azimuth_step_deg=1.0,
        max_range=80.0,
        seed=7,
    )

    traversals = pd.generate_traversals(scene, n_traversals=3, frame_spacing=5.0)
    print(f"route length {np.linalg.norm(route[1] - route[0]):.0f} m, "
          f"{len(traversals)} traversals")
    for frames in traversals:
        n_pts = sum(len(fr.points) for fr in frames)
        t0, t1 = frames[0].timestamp, frames[-1].timestamp
        print(f"  traversal {frames[0].traversal_id}: {len(frames)} sweeps, "
              f"{n_pts} points, timestamps {t0:.0f}..{t1:.0f}")

    # Traversal 1 saw the transient box, the others did not; the extra
    # returns show up directly in the point counts.
    counts = [sum(len(fr.points) for fr in frames) for frames in traversals]
    print(f"transient surplus in traversal 1: {counts[1] - counts[0]} points")

    cam = pd.CameraModel.from_values(
        fx=200.0, fy=200.0, cx=160.0, cy=60.0, width=320, height=120,
        extrinsics=pd.RigidPose(FORWARD_Q),
    )
    ego = pd.RigidPose(np.array([1.0, 0.0, 0.0, 0.0]), route[0])
    gt = pd.gt_depth(scene, ego, cam)
    covered = np.count_nonzero(gt.data > 0)
    print(f"ground-truth depth at route start: {covered}/{gt.data.size} pixels hit, "
          f"max {gt.data.max():.1f} m")

    pd.write_depth_pgm(OUT / "world_gt_depth.pgm", gt)
    pd.write_scene_file(OUT / "world.scene", scene)
    print(f"wrote {OUT / 'world_gt_depth.pgm'} and {OUT / 'world.scene'}")


if __name__ == "__main__":
    main()
