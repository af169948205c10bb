#!/usr/bin/env python3
"""Ingest traversals into a store, save it, reopen it, and query around a pose.

Shows the two store-side contracts that the rest of the pipeline leans on:
ingest thins frames to a minimum spacing, and a query returns up to
max_traversals past drives, each contributing one frame per requested
along-route offset.

Run:  python3 demos/02_store_roundtrip_query.py
"""

import pathlib

import numpy as np

import pastdepth as pd

OUT = pathlib.Path(__file__).parent / "out"


def build_world():
    route = np.array([[0.0, 0.0, 1.8], [120.0, 0.0, 1.8]])
    scene = pd.SceneSpec(
        route=route,
        ground_height=0.0,
        boxes=(pd.Box(center=np.array([60.0, -5.0, 1.0]), size=np.array([4.0, 2.0, 2.0])),),
        rings=16,
        azimuth_step_deg=2.0,
        seed=3,
    )
    return pd.generate_traversals(scene, n_traversals=7, frame_spacing=2.0)


def main():
    OUT.mkdir(exist_ok=True)
    traversals = build_world()

    store = pd.TraversalStore()
    for frames in traversals:
        # Sweeps were recorded every 2 m; the store keeps one frame per
        # ~5 m and drops the rest at ingest time.
        tid = store.ingest_traversal(frames, frame_spacing=5.0)
        print(f"traversal {tid}: kept {len(store.frames(tid))}/{len(frames)} frames")

    path = OUT / "street.adst"
    store.save(path)
    reopened = pd.TraversalStore.open(path)
    print(f"saved {path.stat().st_size} bytes "
          f"(store_size_bytes says {store.store_size_bytes()}), "
          f"reopened with {len(reopened)} traversals")

    # Query near the middle of the route.  Each match carries one frame
    # per offset: one roughly at the query point, one 20 m before it,
    # one 20 m past it.
    cfg = pd.QueryConfig(max_traversals=5, offsets=(0.0, -20.0, 20.0), search_radius=10.0)
    matches = reopened.query_frames(np.array([61.0, 0.5, 1.8]), cfg)
    print(f"\nquery at x=61: {len(matches)} of {len(reopened)} traversals matched "
          f"(capped at {cfg.max_traversals})")
    for m in matches:
        xs = ", ".join(f"{fr.pose.translation[0]:6.1f}" for fr in m.frames)
        print(f"  traversal {m.traversal_id}: closest approach {m.approach_distance:.2f} m, "
              f"frame x positions [{xs}]")

    # Near the route start the -20 m offset has nowhere to go and clamps
    # to the first kept frame.
    matches = reopened.query_frames(np.array([3.0, 0.0, 1.8]), cfg)
    m = matches[0]
    xs = ", ".join(f"{fr.pose.translation[0]:6.1f}" for fr in m.frames)
    print(f"query at x=3, traversal {m.traversal_id}: frame x positions [{xs}] "
          "(the behind offset clamps to the route start)")


if __name__ == "__main__":
    main()
