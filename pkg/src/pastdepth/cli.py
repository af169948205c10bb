"""Command-line surface: build-store, render, featurize, score, bench, synth.

Every command exits 0 on success and prints a single-line
``error: <Type>: <message>`` to stderr with a nonzero exit code on
failure.  A ``--config <file>`` key-value file (same key names as
flags, without dashes in front) supplies defaults; explicit flags win.
``--threads`` falls back to the ASYNCDEPTH_THREADS environment
variable, then 1.
"""

from __future__ import annotations

import argparse
import logging
import os
import re
import sys
from pathlib import Path

from . import bench as bench_mod
from . import kvfile
from .errors import ContractViolation
from .featurize import downavg_featurize, pool_traversals, write_tensor
from .geometry import Frame, PointCloud, read_camera_file, read_pose_file
from .metrics import TPMetrics, detection_score
from .perturb import NoiseSpec, make_rng, perturb_frames, perturb_pose
from .render import read_depthmap, render_all, write_depth_pgm, write_depth_png, write_depthmap
from .store import (
    DEFAULT_FRAME_SPACING,
    DEFAULT_SEARCH_RADIUS,
    FrameRecord,
    QueryConfig,
    TraversalStore,
    read_cloud_file,
    read_frame_pose_file,
)
from .synth import generate_traversals, gt_depth, read_scene_file

log = logging.getLogger(__name__)

CLOUD_SUFFIXES = (".ply", ".xyz", ".bin")
_TRAVERSAL_FILE_RE = re.compile(r"trav(\d+)")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # keep errors on one line, exit nonzero
        raise _UsageError(f"{self.prog}: {message}")


def _parse_offsets(text: str) -> tuple[float, ...]:
    parts = [p for p in text.replace(",", " ").split() if p]
    if not parts:
        raise ContractViolation(f"offsets list is empty: {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ContractViolation(f"offsets must be numbers, got {text!r}") from None


def _load_cameras(path: str):
    p = Path(path)
    if p.is_dir():
        files = sorted(q for q in p.iterdir() if q.suffix == ".cam")
        if not files:
            raise ContractViolation(f"no .cam files in {p}")
        return [read_camera_file(f) for f in files]
    return [read_camera_file(p)]


def _resolve_threads(args) -> int:
    if getattr(args, "threads", None) is not None:
        return max(1, args.threads)
    env = os.environ.get("ASYNCDEPTH_THREADS", "")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ContractViolation(f"ASYNCDEPTH_THREADS must be an integer, got {env!r}") from None
    return 1


def _require(args, *names: str) -> None:
    for name in names:
        if getattr(args, name.replace("-", "_")) is None:
            raise _UsageError(f"{args.command}: missing required flag --{name} (or config key '{name}')")


def _query_config(args) -> QueryConfig:
    return QueryConfig(
        max_traversals=args.max_traversals,
        offsets=_parse_offsets(args.offsets),
        search_radius=args.search_radius,
    )


# --- commands ---------------------------------------------------------------

def _load_traversal_dir(d: Path) -> list[FrameRecord]:
    clouds = sorted(f for f in d.iterdir() if f.suffix in CLOUD_SUFFIXES)
    if not clouds:
        raise ContractViolation(f"{d}: no cloud files ({'/'.join(CLOUD_SUFFIXES)})")
    frames = []
    for idx, cloud_file in enumerate(clouds):
        pose_file = cloud_file.with_suffix(".pose")
        if not pose_file.exists():
            raise ContractViolation(f"{cloud_file}: missing pose descriptor {pose_file.name}")
        pose, ts = read_frame_pose_file(pose_file)
        frames.append(
            FrameRecord(
                traversal_id=0,
                frame_index=idx,
                timestamp=ts if ts is not None else float(idx),
                pose=pose,
                points=PointCloud(read_cloud_file(cloud_file), Frame.SENSOR),
            )
        )
    return frames


def cmd_build_store(args) -> int:
    _require(args, "input", "out")
    root = Path(args.input)
    if not root.is_dir():
        raise ContractViolation(f"{root} is not a directory")
    traversal_dirs = sorted(d for d in root.iterdir() if d.is_dir()) or [root]
    store = TraversalStore()
    for d in traversal_dirs:
        store.ingest_traversal(_load_traversal_dir(d), frame_spacing=args.frame_spacing)
    store.save(args.out)
    n_frames = sum(len(store.frames(t)) for t in store.traversal_ids)
    print(f"wrote {args.out}: {len(store)} traversals, {n_frames} frames, "
          f"{store.store_size_bytes()} bytes")
    return 0


def cmd_render(args) -> int:
    _require(args, "store", "pose", "cameras", "out")
    threads = _resolve_threads(args)
    store = TraversalStore.open(args.store)
    ego = read_pose_file(args.pose)
    cams = _load_cameras(args.cameras)
    cfg = _query_config(args)

    if args.sigma_t > 0.0 or args.sigma_r > 0.0:
        spec = NoiseSpec(sigma_t=args.sigma_t, sigma_r=args.sigma_r, seed=args.seed)
        rng = make_rng(spec)
        ego = perturb_pose(ego, spec, rng)
        if args.perturb_stored:
            noisy = TraversalStore(grid_cell=store.grid_cell)
            for tid in store.traversal_ids:
                noisy.ingest_traversal(
                    perturb_frames(store.frames(tid), spec, rng), traversal_id=tid
                )
            store = noisy

    grid = render_all(ego, cams, cfg, store, max_depth=args.max_depth, threads=threads)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    for (tid, ci), dm in sorted(grid.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        camdir = outdir / f"cam{ci:02d}"
        camdir.mkdir(exist_ok=True)
        path = camdir / f"trav{tid:05d}.addm"
        write_depthmap(path, dm)
        if args.export == "pgm":
            write_depth_pgm(path.with_suffix(".pgm"), dm)
        elif args.export == "png":
            write_depth_png(path.with_suffix(".png"), dm)
    print(f"wrote {len(grid)} depth maps to {outdir}")
    return 0


def cmd_featurize(args) -> int:
    _require(args, "depth-dir", "out")
    d = Path(args.depth_dir)
    if not d.is_dir():
        raise ContractViolation(f"{d} is not a directory")
    files = sorted(d.glob("*.addm"))
    if not files:
        raise ContractViolation(f"no .addm files in {d}")
    feats = []
    for f in files:
        m = _TRAVERSAL_FILE_RE.search(f.stem)
        tid = int(m.group(1)) if m else None
        feats.append(downavg_featurize(read_depthmap(f, traversal_id=tid), args.scale))
    pooled = pool_traversals(feats, args.pool)
    write_tensor(args.out, pooled)
    print(f"wrote {args.out}: {pooled.channels}x{pooled.height}x{pooled.width} "
          f"({args.pool} over {len(feats)} maps)")
    return 0


def cmd_score(args) -> int:
    _require(args, "map", "ate", "ase", "aoe")
    ds = detection_score(args.map, TPMetrics(args.ate, args.ase, args.aoe))
    print(f"{ds:.4f}")
    return 0


def cmd_bench(args) -> int:
    _require(args, "store", "pose", "cameras")
    store = TraversalStore.open(args.store)
    ego = read_pose_file(args.pose)
    cams = _load_cameras(args.cameras)
    report = bench_mod.run_pipeline_bench(
        store, ego, cams, _query_config(args),
        repeat=args.repeat, scale=args.scale, max_depth=args.max_depth,
    )
    if args.scaling_points > 0:
        report.update(bench_mod.render_scaling_probe(args.scaling_points))
    for key in sorted(report):
        value = report[key]
        print(f"{key}={value:.6g}" if isinstance(value, float) else f"{key}={value}")
    return 0


def cmd_synth(args) -> int:
    _require(args, "scene", "out")
    scene = read_scene_file(args.scene)
    traversals = generate_traversals(
        scene, args.traversals, frame_spacing=args.frame_spacing,
        jitter_t=args.jitter_t, jitter_yaw_deg=args.jitter_yaw,
    )
    store = TraversalStore()
    for frames in traversals:
        store.ingest_traversal(frames)
    store.save(args.out)
    n_frames = sum(len(store.frames(t)) for t in store.traversal_ids)
    message = (f"wrote {args.out}: {len(store)} traversals, {n_frames} frames, "
               f"{store.store_size_bytes()} bytes")
    if args.gt_dir:
        if not (args.pose and args.cameras):
            raise ContractViolation("--gt-dir requires --pose and --cameras")
        ego = read_pose_file(args.pose)
        cams = _load_cameras(args.cameras)
        gdir = Path(args.gt_dir)
        gdir.mkdir(parents=True, exist_ok=True)
        for ci, cam in enumerate(cams):
            write_depthmap(gdir / f"cam{ci:02d}_gt.addm",
                           gt_depth(scene, ego, cam, max_depth=args.max_depth))
        message += f", {len(cams)} gt rasters in {gdir}"
    print(message)
    return 0


_HANDLERS = {
    "build-store": cmd_build_store,
    "render": cmd_render,
    "featurize": cmd_featurize,
    "score": cmd_score,
    "bench": cmd_bench,
    "synth": cmd_synth,
}


# --- parser -----------------------------------------------------------------

def _add_common(sub) -> None:
    sub.add_argument("--config", help="key-value file of flag defaults (same names, no dashes)")
    sub.add_argument("--threads", type=int, default=None,
                     help="worker threads (default: $ASYNCDEPTH_THREADS or 1); never changes output bytes")


def _add_query_flags(sub) -> None:
    sub.add_argument("--offsets", default="0,-20,20",
                     help="along-road offsets in meters, comma separated (default: 0,-20,20)")
    sub.add_argument("--max-traversals", type=int, default=5,
                     help="past traversals pooled per scene (default: 5)")
    sub.add_argument("--max-depth", type=float, default=60.0,
                     help="discard points beyond this camera depth in meters (default: 60)")
    sub.add_argument("--search-radius", type=float, default=DEFAULT_SEARCH_RADIUS,
                     help="traversal match radius in meters (default: 10)")


def build_parser() -> _Parser:
    parser = _Parser(prog="pastdepth",
                     description="Depth maps and pooled depth features from past LiDAR traversals.")
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = subs.add_parser("build-store", help="ingest cloud+pose files into a traversal store")
    p.add_argument("--input", help="directory of traversal subdirectories (or one flat traversal)")
    p.add_argument("--out", help="output .adst store file")
    p.add_argument("--frame-spacing", type=float, default=DEFAULT_FRAME_SPACING,
                   help="thin frames closer than half this many meters (default: 5)")
    _add_common(p)

    p = subs.add_parser("render", help="render per-(traversal, camera) depth maps near a pose")
    p.add_argument("--store", help="input .adst store file")
    p.add_argument("--pose", help="current ego pose descriptor")
    p.add_argument("--cameras", help="camera descriptor file or directory of .cam files")
    p.add_argument("--out", help="output directory (cam<i>/trav<id>.addm)")
    _add_query_flags(p)
    p.add_argument("--sigma-t", type=float, default=0.0, help="translation noise std in meters")
    p.add_argument("--sigma-r", type=float, default=0.0, help="yaw noise std in degrees")
    p.add_argument("--seed", type=int, default=0, help="noise PRNG seed (PCG64)")
    p.add_argument("--perturb-stored", action="store_true",
                   help="also perturb stored frame poses, not just the ego pose")
    p.add_argument("--export", choices=("none", "pgm", "png"), default="none",
                   help="additionally export 16-bit rasters for visualization")
    _add_common(p)

    p = subs.add_parser("featurize", help="pool one camera's depth maps into a feature tensor")
    p.add_argument("--depth-dir", help="directory of .addm maps for one camera")
    p.add_argument("--mode", choices=("downavg",), default="downavg",
                   help="featurizer (built-in: sentinel-aware downsample + average)")
    p.add_argument("--scale", type=int, default=8, help="integer downsample factor (default: 8)")
    p.add_argument("--pool", choices=("mean", "max"), default="mean",
                   help="cross-traversal pooling (default: mean)")
    p.add_argument("--out", help="output .adtf tensor file")
    _add_common(p)

    p = subs.add_parser("score", help="composite detection score from mAP and TP metrics")
    p.add_argument("--map", type=float, help="mean average precision in [0, 1]")
    p.add_argument("--ate", type=float, help="average translation error (m)")
    p.add_argument("--ase", type=float, help="average scale error (fraction)")
    p.add_argument("--aoe", type=float, help="average orientation error (rad)")
    _add_common(p)

    p = subs.add_parser("bench", help="time the query->feature pipeline and report key=value metrics")
    p.add_argument("--store", help="input .adst store file")
    p.add_argument("--pose", help="current ego pose descriptor")
    p.add_argument("--cameras", help="camera descriptor file or directory of .cam files")
    p.add_argument("--repeat", type=int, default=5, help="timed repetitions (default: 5)")
    p.add_argument("--scale", type=int, default=8, help="featurizer downsample factor (default: 8)")
    p.add_argument("--scaling-points", type=int, default=150_000,
                   help="base point count of the linear-scaling probe; 0 disables (default: 150000)")
    _add_query_flags(p)
    _add_common(p)

    p = subs.add_parser("synth", help="generate a synthetic multi-traversal store (plus optional gt)")
    p.add_argument("--scene", help="scene descriptor file")
    p.add_argument("--out", help="output .adst store file")
    p.add_argument("--traversals", type=int, default=2, help="traversal count (default: 2)")
    p.add_argument("--frame-spacing", type=float, default=5.0,
                   help="route sampling spacing in meters (default: 5)")
    p.add_argument("--jitter-t", type=float, default=0.0, help="per-frame pose jitter std (m)")
    p.add_argument("--jitter-yaw", type=float, default=0.0, help="per-frame yaw jitter std (deg)")
    p.add_argument("--gt-dir", help="also write analytic depth rasters here")
    p.add_argument("--pose", help="ego pose for gt rasters")
    p.add_argument("--cameras", help="cameras for gt rasters")
    p.add_argument("--max-depth", type=float, default=60.0, help="gt depth clip (default: 60)")
    _add_common(p)

    return parser


def _expand_config(argv: list[str], args, parser: _Parser) -> list[str]:
    """Splice config-file pairs in as flags, before the explicit ones."""
    sub_actions = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    sub = sub_actions.choices[args.command]
    options = sub._option_string_actions
    flags: list[str] = []
    for key, value in kvfile.read_kv_file(args.config):
        if key == "config":
            raise ContractViolation(f"{args.config}: config files cannot nest 'config'")
        opt = f"--{key}"
        if opt not in options:
            raise ContractViolation(f"{args.config}: unknown config key {key!r} for {args.command}")
        if options[opt].nargs == 0:
            flag_value = value.strip().lower()
            if flag_value in ("1", "true", "yes", "on"):
                flags.append(opt)
            elif flag_value not in ("0", "false", "no", "off"):
                raise ContractViolation(f"{args.config}: key {key!r} must be boolean, got {value!r}")
        else:
            flags.append(f"{opt}={value}")
    at = argv.index(args.command) + 1
    return argv[:at] + flags + argv[at:]


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "config", None):
            args = parser.parse_args(_expand_config(argv, args, parser))
        return _HANDLERS[args.command](args)
    except _UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # contract: single-line machine-parseable failure
        message = " ".join(str(exc).split()) or exc.__class__.__name__
        print(f"error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
