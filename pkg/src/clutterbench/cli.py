"""Command-line entry point: ``clutterbench {generate,render,stats,evaluate}``.

Exit codes: 0 ok, 2 invalid config, 3 I/O or format failure, 4 incomplete
dataset (no manifest), 5 input mismatch.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from collections import Counter
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import dataset_io
from .config import (
    ConfigError,
    default_output_root,
    load_cameras,
    load_gen_config,
    load_reward_config,
    load_roi_extents,
)
from .impact_metrics import REWARD_TERMS, episode_impact, straight_line_plans, sweep_extract, trajectory_rewards
from .scene_gen import LEVEL_EDGES, N_LEVELS, batch_generate
from .view_render import DepthMap, RoiSpec, crop_roi, normalize_depth, raycast_depth

log = logging.getLogger("clutterbench")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_INCOMPLETE, EXIT_MISMATCH = 0, 2, 3, 4, 5


class CliFailure(Exception):
    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _open_dataset(root: Path, strict: bool) -> dataset_io.DatasetManifest:
    try:
        manifest = dataset_io.read_manifest(root)
    except FileNotFoundError:
        raise CliFailure(EXIT_INCOMPLETE, f"{root}: no {dataset_io.MANIFEST_NAME}; dataset is incomplete") from None
    except dataset_io.FormatError as exc:
        raise CliFailure(EXIT_IO, f"{root}: unreadable manifest: {exc}") from exc
    if strict and not dataset_io.verify_manifest(root):
        raise CliFailure(EXIT_MISMATCH, f"{root}: payload files do not match the manifest digest")
    return manifest


def _ok_entries(manifest: dataset_io.DatasetManifest) -> List[Dict]:
    return [e for e in manifest.scenes if e.get("status") == "ok"]


def _parse_roi(text: Optional[str], cfg_path: Optional[str]):
    if text is None:
        return load_roi_extents(cfg_path)
    try:
        ext = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"--roi: expected three comma-separated metres, got {text!r}", "roi") from None
    if len(ext) != 3 or not all(math.isfinite(e) and e > 0 for e in ext):
        raise ConfigError(f"--roi: expected three positive metres, got {text!r}", "roi")
    return ext


def _dump_json(path: Path, doc) -> None:
    dataset_io.write_bytes_atomic(path, (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode("utf-8"))


def _histogram(rates: Sequence[float]) -> List[int]:
    edges = np.asarray(LEVEL_EDGES)
    idx = np.searchsorted(edges, np.asarray(rates, dtype=np.float64), side="right")
    return [int(n) for n in np.bincount(idx, minlength=N_LEVELS)]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


BOOLEAN_FLAGS = ("obstacle_shortfall", "direct_pull_blocked", "unsolvable")


def cmd_generate(args) -> int:
    cfg = load_gen_config(
        args.config,
        n_scenes=args.n,
        seed=args.seed,
        container=args.container,
        resolution=args.resolution,
    )
    out = Path(args.out) if args.out else default_output_root()
    handle = batch_generate(cfg, out, workers=args.workers)
    ok = _ok_entries(handle.manifest)
    flags = Counter({k: 0 for k in BOOLEAN_FLAGS})
    for e in ok:
        for k, v in e.get("flags", {}).items():
            if isinstance(v, bool) and v:
                flags[k] += 1
    print(f"seed {cfg.seed}  config {cfg.digest()[:16]}")
    print(f"generated {len(ok)}/{cfg.n_scenes} scenes into {out} ({handle.failures} failed)")
    print(f"throughput {handle.scenes_per_second:.2f} scenes/s with {args.workers} worker(s)")
    for k in sorted(flags):
        print(f"flag {k}: {flags[k]}")
    print(f"manifest digest {handle.manifest_digest}")
    return EXIT_OK


def cmd_render(args) -> int:
    root = Path(args.dataset)
    manifest = _open_dataset(root, args.strict)
    extents = _parse_roi(args.roi, args.config)
    n_files = 0
    crop_dims = set()
    for e in _ok_entries(manifest):
        sid = e["scene_id"]
        scene = dataset_io.read_scene(root / e["scene_path"], strict=args.strict)
        sem = dataset_io.read_occupancy(root / e["occupancy_path"])
        cams = load_cameras(args.config, sem.frame)
        for k, cam in enumerate(cams):
            depth = raycast_depth(sem, cam)
            if depth.valid.any():
                norm = normalize_depth(depth)
            else:
                norm = DepthMap(depth.values, depth.valid, normalized=True)
            dataset_io.write_depth(depth, root / "depth" / sid / f"cam{k}_metric.fbdp")
            dataset_io.write_depth(norm, root / "depth" / sid / f"cam{k}_norm.fbdp")
            n_files += 2
        tgt = sem.labels == 1
        if tgt.any():
            idx = np.argwhere(tgt)
            res = sem.frame.resolution
            center = np.asarray(sem.frame.origin) + (idx.min(0) + idx.max(0) + 1) * res / 2
        else:
            center = np.asarray(sem.frame.origin) + np.asarray(sem.frame.dims) * sem.frame.resolution / 2
        crop = crop_roi(sem, RoiSpec(tuple(center), extents))
        crop_dims.add(crop.frame.dims)
        dataset_io.write_occupancy(crop, root / "roi" / f"{sid}.fboc")
    summary = {
        "seed": manifest.seed,
        "config_digest": manifest.config_digest,
        "roi_extents": list(extents),
        "roi_dims": sorted(list(d) for d in crop_dims),
        "scenes": len(_ok_entries(manifest)),
        "depth_files": n_files,
    }
    _dump_json(root / "render_summary.json", summary)
    print(f"seed {manifest.seed}  rendered {summary['scenes']} scenes, {n_files} depth files")
    for d in sorted(crop_dims):
        print(f"roi crop dims {d[0]}x{d[1]}x{d[2]}")
    return EXIT_OK


def dataset_stats(manifest: dataset_io.DatasetManifest) -> Dict[str, object]:
    ok = _ok_entries(manifest)
    rates = [float(e["occlusion_rate"]) for e in ok]
    levels = Counter(int(e["difficulty_level"]) for e in ok)
    objects = Counter(int(e["n_objects"]) for e in ok)
    unsolvable = sum(bool(e.get("flags", {}).get("unsolvable")) for e in ok)
    return {
        "seed": manifest.seed,
        "scenes": len(ok),
        "failed": len(manifest.scenes) - len(ok),
        "histogram_edges": list(LEVEL_EDGES),
        "occlusion_histogram": _histogram(rates),
        "level_counts": {str(k): levels.get(k, 0) for k in range(1, N_LEVELS + 1)},
        "object_counts": {str(k): objects[k] for k in sorted(objects)},
        "unsolvable_rate": unsolvable / len(ok) if ok else 0.0,
    }


def cmd_stats(args) -> int:
    root = Path(args.dataset)
    manifest = _open_dataset(root, args.strict)
    s = dataset_stats(manifest)
    print(f"seed {s['seed']}  scenes {s['scenes']}  failed {s['failed']}")
    print("occlusion histogram (edges " + "/".join(f"{e:.1f}" for e in s["histogram_edges"]) + ")")
    bounds = (0.0,) + tuple(s["histogram_edges"]) + (1.0,)
    for i, n in enumerate(s["occlusion_histogram"]):
        print(f"  [{bounds[i]:.1f}, {bounds[i + 1]:.1f}{']' if i == N_LEVELS - 1 else ')'}: {n}")
    for lvl, n in s["level_counts"].items():
        print(f"level {lvl}: {n}")
    for k, n in s["object_counts"].items():
        print(f"objects {k}: {n}")
    print(f"unsolvable rate {s['unsolvable_rate']:.4f}")
    _dump_json(root / "stats.json", s)
    return EXIT_OK


def _trajectory_files(path: Path) -> List[Path]:
    if path.is_dir():
        return sorted(path.glob("*.jsonl"))
    if path.exists():
        return [path]
    raise FileNotFoundError(str(path))


def cmd_evaluate(args) -> int:
    root = Path(args.dataset)
    manifest = _open_dataset(root, args.strict)
    cfg = load_reward_config(args.reward_config)
    scenes = {e["scene_id"]: e for e in _ok_entries(manifest)}
    sigma_t = cfg.sigma_trans[cfg.stage] if args.curriculum_threshold else None
    reports = []
    term_sums = {k: 0.0 for k in REWARD_TERMS}
    for path in _trajectory_files(Path(args.trajectories)):
        traj = dataset_io.read_trajectory(path)
        entry = scenes.get(traj.scene_id)
        if entry is None:
            raise CliFailure(EXIT_MISMATCH, f"{path}: scene {traj.scene_id!r} is not in the dataset")
        if not traj.steps:
            raise CliFailure(EXIT_MISMATCH, f"{path}: trajectory has no steps")
        scene = dataset_io.read_scene(root / entry["scene_path"], strict=args.strict)
        n_obs = len(scene.obstacles)
        bad = next((s.index for s in traj.steps if len(s.obstacle_poses) != n_obs), None)
        if bad is not None:
            raise CliFailure(
                EXIT_MISMATCH, f"{path}: step {bad} lists a different obstacle count than scene {traj.scene_id} ({n_obs})"
            )
        rep = episode_impact(traj.steps, traj.fetched) if sigma_t is None else episode_impact(traj.steps, traj.fetched, sigma_t)
        rewards = trajectory_rewards(traj.steps, traj.fetched, cfg)
        for k in REWARD_TERMS:
            term_sums[k] += rewards[k]
        reports.append({
            "trajectory_id": traj.trajectory_id,
            "scene_id": traj.scene_id,
            "fetched": rep.fetched,
            "success": rep.success,
            "m_trans": rep.m_trans,
            "m_rot": rep.m_rot,
            "obstacle_translation": rep.obstacle_translation,
            "obstacle_rotation": rep.obstacle_rotation,
            "rewards": rewards,
        })
        print(f"{traj.trajectory_id} scene {traj.scene_id}: fetched={rep.fetched} success={rep.success} "
              f"trans={rep.m_trans * 100:.3f} cm rot={rep.m_rot:.4f} rad")
    n = len(reports)
    summary = {
        "seed": manifest.seed,
        "trajectories": n,
        "success_rate": sum(r["success"] for r in reports) / n if n else 0.0,
        "mean_translation_cm": math.fsum(r["m_trans"] for r in reports) * 100 / n if n else 0.0,
        "mean_rotation_rad": math.fsum(r["m_rot"] for r in reports) / n if n else 0.0,
        "reward_sums": term_sums,
        "reports": reports,
    }
    if args.baseline:
        summary["baseline"] = _baseline(root, scenes, args.strict)
    print(f"seed {manifest.seed}  trajectories {n}")
    print(f"success rate {summary['success_rate'] * 100:.2f}%")
    print(f"mean translation {summary['mean_translation_cm']:.4f} cm")
    print(f"mean rotation {summary['mean_rotation_rad']:.6f} rad")
    for k in REWARD_TERMS:
        print(f"reward {k}: {term_sums[k]:.9g}")
    if args.baseline:
        b = summary["baseline"]
        print(f"baseline contacts: direct_pull {b['direct_pull']}  lift_then_extract {b['lift_then_extract']}")
    out = Path(args.out) if args.out else root / "evaluation.json"
    _dump_json(out, summary)
    return EXIT_OK


def _baseline(root: Path, scenes: Dict[str, Dict], strict: bool) -> Dict[str, int]:
    totals = {"direct_pull": 0, "lift_then_extract": 0}
    for entry in scenes.values():
        scene = dataset_io.read_scene(root / entry["scene_path"], strict=strict)
        for name, waypoints in straight_line_plans(scene).items():
            totals[name] += sweep_extract(scene, waypoints).contacted
    return totals


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="clutterbench",
        description="Cluttered-scene dataset generation, rendering, statistics and evaluation.",
        epilog="Exit codes: 0 ok, 2 config error, 3 I/O error, 4 incomplete dataset, 5 input mismatch. "
        "CLUTTERBENCH_OUT sets the default output root for generate.",
    )
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a scene dataset")
    g.add_argument("--config", help="INI config with [generate], [container.*], [asset.*] sections")
    g.add_argument("--out", help="output directory (default: $CLUTTERBENCH_OUT or ./clutterbench_out)")
    g.add_argument("--n", type=int, help="number of scenes (overrides config)")
    g.add_argument("--seed", type=int, help="base seed (overrides config)")
    g.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    g.add_argument("--container", help="container kind: shelf, tabletop, drawer or rack")
    g.add_argument("--resolution", type=float, help="voxel edge length in metres (default 0.005)")

    r = sub.add_parser("render", help="render depth maps and ROI crops for a dataset")
    r.add_argument("dataset", help="dataset directory")
    r.add_argument("--config", help="INI config with [camera.*] and [roi] sections")
    r.add_argument("--roi", help="ROI extents in metres as x,y,z (default 0.20,0.20,0.30)")
    r.add_argument("--strict", action="store_true", help="strict scene parsing and manifest verification")

    s = sub.add_parser("stats", help="print difficulty and composition statistics")
    s.add_argument("dataset", help="dataset directory")
    s.add_argument("--strict", action="store_true", help="verify payloads against the manifest")

    e = sub.add_parser("evaluate", help="score trajectory logs against a dataset")
    e.add_argument("dataset", help="dataset directory")
    e.add_argument("trajectories", help="trajectory .jsonl file or directory of them")
    e.add_argument("--reward-config", help="INI config with a [reward] section")
    e.add_argument("--out", help="summary JSON path (default <dataset>/evaluation.json)")
    e.add_argument("--strict", action="store_true", help="strict parsing and manifest verification")
    e.add_argument("--baseline", action="store_true", help="also sweep the straight-line heuristic baselines")
    e.add_argument("--curriculum-threshold", action="store_true",
                   help="classify success with the current curriculum stage threshold instead of 3 cm")
    return p


_COMMANDS = {"generate": cmd_generate, "render": cmd_render, "stats": cmd_stats, "evaluate": cmd_evaluate}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except CliFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, dataset_io.FormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except KeyboardInterrupt:
        print("interrupted; output left without a manifest", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
