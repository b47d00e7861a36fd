"""Rejection-sampled cluttered scene generation in voxel space.

Per scene: place a target, draw the obstacle count k uniformly from
[1, K], then place obstacles largest-first. Each pose is resampled until
its voxels miss everything already in the scene or the retry budget runs
out. Objects stand upright on the support plane (z = 0) unless tilting is
enabled, in which case they are dropped onto it voxel-exactly.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from . import dataset_io
from .scene import (
    FREE,
    OBSTACLE,
    TARGET,
    Container,
    Placement,
    SceneSpec,
    SemanticGrid,
    paste,
)
from .view_render import occlusion_rate_of
from .voxel_core import DEFAULT_RESOLUTION, GridFrame, SE3Pose, VoxelGrid, collides, place, posed_bounds, rotation_z
from .voxelizer import ObjectAsset, voxelize_asset

log = logging.getLogger(__name__)

N_LEVELS = 5
LEVEL_EDGES = tuple(i / N_LEVELS for i in range(1, N_LEVELS))  # 0.2, 0.4, 0.6, 0.8

CONTAINER_PRESETS: Dict[str, Tuple[float, float, float]] = {
    "shelf": (0.80, 0.40, 0.35),
    "tabletop": (1.00, 0.60, 0.50),
    "drawer": (0.50, 0.40, 0.15),
    "rack": (0.60, 0.30, 0.30),
}
# half-width of the yaw window, radians
YAW_PRESETS = {
    "shelf": math.radians(20),
    "tabletop": math.pi,
    "drawer": math.radians(10),
    "rack": math.pi,
}

DEFAULT_ASSETS: Tuple[ObjectAsset, ...] = (
    ObjectAsset("box_snack", "box", (0.05, 0.10, 0.12)),
    ObjectAsset("box_cereal", "box", (0.06, 0.15, 0.20)),
    ObjectAsset("box_tea", "box", (0.07, 0.07, 0.10)),
    ObjectAsset("box_flat", "box", (0.12, 0.08, 0.05), roles=("obstacle",)),
    ObjectAsset("bottle", "cylinder", (0.03, 0.20)),
    ObjectAsset("can", "cylinder", (0.033, 0.12)),
    ObjectAsset("jar", "cylinder", (0.04, 0.09), roles=("obstacle",)),
)


class SceneGenerationError(RuntimeError):
    """The target could not be placed within the retry budget."""


@dataclass(frozen=True)
class GenConfig:
    """Generation parameters. ``max_objects`` is K, the obstacle-count ceiling."""

    n_scenes: int = 100
    max_objects: int = 9
    container: Container = Container("shelf", CONTAINER_PRESETS["shelf"])
    assets: Tuple[ObjectAsset, ...] = DEFAULT_ASSETS
    resolution: float = DEFAULT_RESOLUTION
    seed: int = 0
    max_retries_per_object: int = 200
    yaw_range: Optional[float] = None
    allow_tilt: bool = False

    def __post_init__(self) -> None:
        if self.n_scenes < 0:
            raise ValueError("n_scenes must be >= 0")
        if self.max_objects < 1:
            raise ValueError("max_objects must be >= 1")
        if self.max_retries_per_object < 1:
            raise ValueError("max_retries_per_object must be >= 1")
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        if not self.assets:
            raise ValueError("asset pool is empty")
        if not any("target" in a.roles for a in self.assets):
            raise ValueError("asset pool has no target-capable asset")
        if len({a.asset_id for a in self.assets}) != len(self.assets):
            raise ValueError("duplicate asset ids in pool")
        object.__setattr__(self, "assets", tuple(self.assets))
        object.__setattr__(self, "seed", int(self.seed) & 0xFFFFFFFFFFFFFFFF)

    @property
    def yaw_half_width(self) -> float:
        return YAW_PRESETS[self.container.kind] if self.yaw_range is None else float(self.yaw_range)

    def to_json(self) -> Dict[str, object]:
        return {
            "n_scenes": self.n_scenes,
            "max_objects": self.max_objects,
            "container": {"kind": self.container.kind, "interior": list(self.container.interior)},
            "assets": {a.asset_id: a.to_dict() for a in self.assets},
            "resolution": self.resolution,
            "seed": self.seed,
            "max_retries_per_object": self.max_retries_per_object,
            "yaw_range": self.yaw_half_width,
            "allow_tilt": self.allow_tilt,
        }

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode("utf-8")).hexdigest()


def scene_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream per (master seed, scene index)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(index)]))


def scene_id_for(index: int) -> str:
    return f"scene_{index:07d}"


def difficulty_level(rate: float) -> int:
    """Five equal-width occlusion bins: level = 1 + floor(5·rate), capped at 5."""
    return min(N_LEVELS, 1 + int(math.floor(rate * N_LEVELS)))


# ---------------------------------------------------------------------------
# pose sampling
# ---------------------------------------------------------------------------


def _sample_pose(grid: VoxelGrid, frame: GridFrame, cfg: GenConfig, rng: np.random.Generator) -> Optional[SE3Pose]:
    interior = frame.upper
    if cfg.allow_tilt:
        rot = Rotation.random(random_state=rng).as_matrix()
    else:
        rot = rotation_z(rng.uniform(-cfg.yaw_half_width, cfg.yaw_half_width))
    lo, hi = posed_bounds(grid.frame, SE3Pose(rot, np.zeros(3)))
    if np.any(hi - lo > interior + 1e-12):
        return None
    # shrink the footprint by the rotated half-extent so the box stays inside
    x = rng.uniform(-lo[0], interior[0] - hi[0])
    y = rng.uniform(-lo[1], interior[1] - hi[1])
    return SE3Pose(rot, np.array([x, y, -lo[2]]))


def _fits(asset: ObjectAsset, frame: GridFrame, cfg: GenConfig) -> bool:
    if cfg.allow_tilt:
        return True
    dims = voxelize_asset(asset, cfg.resolution).dims
    return dims[2] <= frame.dims[2] and min(dims[:2]) <= min(frame.dims[:2])


def _settle(grid: VoxelGrid, pose: SE3Pose, frame: GridFrame) -> Tuple[SE3Pose, Optional[VoxelGrid]]:
    """Lower a tilted pose until its lowest voxel layer sits on the support plane."""
    placed = place(grid, pose, frame)
    if placed is None or placed.is_empty():
        return pose, placed
    bottom = frame.lattice_offset(placed.frame)[2] + int(placed.occupied_bounds()[0][2])
    if bottom == 0:
        return pose, placed
    pose = SE3Pose(pose.rotation, pose.translation - np.array([0.0, 0.0, bottom * frame.resolution]))
    return pose, place(grid, pose, frame)


def _try_place(
    asset: ObjectAsset,
    labels: np.ndarray,
    frame: GridFrame,
    cfg: GenConfig,
    rng: np.random.Generator,
) -> Tuple[Optional[SE3Pose], Optional[VoxelGrid], int]:
    grid = voxelize_asset(asset, cfg.resolution)
    for attempt in range(1, cfg.max_retries_per_object + 1):
        pose = _sample_pose(grid, frame, cfg, rng)
        if pose is None:
            continue
        if cfg.allow_tilt:
            pose, placed = _settle(grid, pose, frame)
        else:
            placed = place(grid, pose, frame)
        if placed is None or placed.is_empty():
            continue
        off = frame.lattice_offset(placed.frame)
        region = labels[tuple(slice(o, o + d) for o, d in zip(off, placed.dims))]
        scene_window = VoxelGrid(placed.frame, region != FREE)
        if collides(placed, scene_window, boolean_only=True).collides:
            continue
        return pose, placed, attempt
    return None, None, cfg.max_retries_per_object


# ---------------------------------------------------------------------------
# extraction heuristics for the unsolvable flag
# ---------------------------------------------------------------------------


def _pull_blocked(target: np.ndarray, obstacles: np.ndarray, lift: int) -> bool:
    """Does lifting the target ``lift`` layers and pulling it out along -y hit an obstacle?"""
    nz = target.shape[2]
    if lift > 0:
        # union of the target raised by 0..lift layers
        lifted_path = target.copy()
        shifted = target
        for _ in range(min(lift, nz)):
            shifted = np.concatenate([np.zeros_like(shifted[:, :, :1]), shifted[:, :, :-1]], axis=2)
            lifted_path |= shifted
        if np.any(lifted_path & obstacles):
            return True
        raised = shifted
    else:
        raised = target
    # every cell at or in front of (smaller y) a raised target cell
    swept = np.flip(np.logical_or.accumulate(np.flip(raised, axis=1), axis=1), axis=1)
    return bool(np.any(swept & obstacles))


def extraction_flags(labels: np.ndarray) -> Dict[str, bool]:
    target = labels == TARGET
    obstacles = labels == OBSTACLE
    zs = np.flatnonzero(target.any(axis=(0, 1)))
    headroom = labels.shape[2] - 1 - int(zs[-1]) if zs.size else 0
    direct = _pull_blocked(target, obstacles, 0)
    lifted = _pull_blocked(target, obstacles, headroom) if direct else False
    return {"direct_pull_blocked": direct, "unsolvable": direct and lifted}


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------


def generate_with_labels(cfg: GenConfig, index: int) -> Tuple[SceneSpec, SemanticGrid]:
    """Generate scene ``index`` of ``cfg`` together with its semantic occupancy."""
    rng = scene_rng(cfg.seed, index)
    frame = cfg.container.frame(cfg.resolution)
    labels = np.zeros(frame.dims, dtype=np.uint8)
    sid = scene_id_for(index)

    targets = [a for a in cfg.assets if "target" in a.roles]
    # skip targets that cannot stand upright in this container at all
    fitting = [a for a in targets if _fits(a, frame, cfg)]
    targets = fitting or targets
    obstacle_pool = [a for a in cfg.assets if "obstacle" in a.roles]
    target = targets[rng.integers(len(targets))]
    pose, placed, _ = _try_place(target, labels, frame, cfg, rng)
    if pose is None:
        raise SceneGenerationError(
            f"{sid}: target {target.asset_id} unplaceable in {cfg.container.kind} "
            f"after {cfg.max_retries_per_object} attempts"
        )
    paste(labels, frame, placed, TARGET)
    placements = [Placement(target.asset_id, pose, "target")]

    k = int(rng.integers(1, cfg.max_objects + 1))
    chosen: List[ObjectAsset] = []
    if obstacle_pool:
        chosen = [obstacle_pool[i] for i in rng.integers(len(obstacle_pool), size=k)]
    # largest first; stable so equal volumes keep their draw order
    chosen.sort(key=lambda a: -voxelize_asset(a, cfg.resolution).popcount)
    dropped = 0
    for asset in chosen:
        pose, placed, _ = _try_place(asset, labels, frame, cfg, rng)
        if pose is None:
            dropped += 1
            continue
        paste(labels, frame, placed, OBSTACLE)
        placements.append(Placement(asset.asset_id, pose, "obstacle"))

    sem = SemanticGrid(frame, labels)
    rate = occlusion_rate_of(sem)
    flags: Dict[str, object] = {
        "obstacles_requested": k,
        "obstacles_placed": k - dropped,
        "obstacle_shortfall": dropped > 0,
    }
    flags.update(extraction_flags(labels))
    used = {p.asset_id for p in placements}
    scene = SceneSpec(
        scene_id=sid,
        container=cfg.container,
        resolution=cfg.resolution,
        placements=placements,
        assets={a.asset_id: a for a in cfg.assets if a.asset_id in used},
        seed=cfg.seed,
        occlusion_rate=rate,
        difficulty_level=difficulty_level(rate),
        flags=flags,
    )
    return scene, sem


def generate_scene(cfg: GenConfig, index: int = 0) -> SceneSpec:
    return generate_with_labels(cfg, index)[0]


def label_difficulty(scene: SceneSpec) -> Tuple[float, int]:
    from .view_render import occlusion_rate

    rate = occlusion_rate(scene)
    return rate, difficulty_level(rate)


# ---------------------------------------------------------------------------
# batch output
# ---------------------------------------------------------------------------


@dataclass
class DatasetHandle:
    root: Path
    manifest: dataset_io.DatasetManifest
    manifest_digest: str
    elapsed: float
    failures: int = 0

    @property
    def scenes_per_second(self) -> float:
        return self.manifest.scene_count / self.elapsed if self.elapsed > 0 else float("inf")


def _scene_job(args: Tuple[GenConfig, int, str]) -> Dict[str, object]:
    cfg, index, root = args
    sid = scene_id_for(index)
    try:
        scene, sem = generate_with_labels(cfg, index)
    except SceneGenerationError as exc:
        return {"scene_id": sid, "index": index, "status": "failed", "error": str(exc)}
    scene_rel = f"scenes/{sid}.json"
    occ_rel = f"occupancy/{sid}.fboc"
    dataset_io.write_scene(scene, Path(root) / scene_rel)
    dataset_io.write_occupancy(sem, Path(root) / occ_rel)
    return {
        "scene_id": sid,
        "index": index,
        "status": "ok",
        "scene_path": scene_rel,
        "occupancy_path": occ_rel,
        "occlusion_rate": scene.occlusion_rate,
        "difficulty_level": scene.difficulty_level,
        "n_objects": len(scene.placements),
        "flags": scene.flags,
    }


def batch_generate(cfg: GenConfig, out_dir, workers: int = 1) -> DatasetHandle:
    """Generate ``cfg.n_scenes`` scenes into ``out_dir``; the manifest is written last.

    Scene ``i`` depends only on (cfg, i), so the output is identical for
    any worker count.
    """
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    stale = root / dataset_io.MANIFEST_NAME
    if stale.exists():
        stale.unlink()
    jobs = [(cfg, i, str(root)) for i in range(cfg.n_scenes)]
    start = time.perf_counter()
    if workers <= 1 or len(jobs) <= 1:
        entries = [_scene_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(_scene_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    elapsed = time.perf_counter() - start
    entries.sort(key=lambda e: e["index"])
    failures = sum(e["status"] != "ok" for e in entries)
    for e in entries:
        if e["status"] != "ok":
            log.warning("%s", e["error"])
    manifest = dataset_io.DatasetManifest(
        config_digest=cfg.digest(),
        scenes=entries,
        content_digest="",
        seed=cfg.seed,
        config=cfg.to_json(),
    )
    manifest.content_digest = dataset_io.content_digest(root, manifest.payload_paths())
    digest = dataset_io.write_manifest(root, manifest)
    return DatasetHandle(root, manifest, digest, elapsed, failures)
