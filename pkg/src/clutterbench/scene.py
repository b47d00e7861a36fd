"""Scene description types and semantic occupancy composition."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .voxel_core import GridFrame, SE3Pose, VoxelGrid, place, posed_bounds, reframe
from .voxelizer import ObjectAsset, voxelize_asset

FREE, TARGET, OBSTACLE, ROBOT = 0, 1, 2, 3
LABELS = (FREE, TARGET, OBSTACLE, ROBOT)

CONTAINER_KINDS = ("shelf", "tabletop", "drawer", "rack")


class SceneIntegrityError(RuntimeError):
    """Objects overlap in a scene that claims to be collision free."""


class SceneValidationError(ValueError):
    """A scene description violates its structural invariants."""


@dataclass(frozen=True)
class Container:
    """Interior box of a container; the opening faces -y, the support plane is z = 0."""

    kind: str
    interior: Tuple[float, float, float]

    def __post_init__(self) -> None:
        if self.kind not in CONTAINER_KINDS:
            raise ValueError(f"unknown container kind {self.kind!r}")
        interior = tuple(float(v) for v in self.interior)
        if len(interior) != 3 or min(interior) <= 0:
            raise ValueError(f"container interior dims must be positive, got {self.interior}")
        object.__setattr__(self, "interior", interior)

    def frame(self, resolution: float) -> GridFrame:
        dims = tuple(max(1, int(math.ceil(w / resolution - 1e-6))) for w in self.interior)
        return GridFrame((0.0, 0.0, 0.0), resolution, dims)


@dataclass(frozen=True)
class Placement:
    asset_id: str
    pose: SE3Pose
    role: str
    extras: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.role not in ("target", "obstacle"):
            raise ValueError(f"unknown role {self.role!r}")


@dataclass
class SceneSpec:
    scene_id: str
    container: Container
    resolution: float
    placements: List[Placement]
    assets: Dict[str, ObjectAsset]
    seed: int = 0
    occlusion_rate: float = 0.0
    difficulty_level: int = 1
    flags: Dict[str, object] = field(default_factory=dict)
    extras: Dict[str, object] = field(default_factory=dict)

    @property
    def frame(self) -> GridFrame:
        return self.container.frame(self.resolution)

    @property
    def target(self) -> Placement:
        return next(p for p in self.placements if p.role == "target")

    @property
    def obstacles(self) -> List[Placement]:
        return [p for p in self.placements if p.role == "obstacle"]

    def validate(self, require_target: bool = True) -> None:
        n_target = sum(p.role == "target" for p in self.placements)
        if require_target and n_target != 1:
            raise SceneValidationError(f"{self.scene_id}: expected exactly one target, found {n_target}")
        if n_target > 1:
            raise SceneValidationError(f"{self.scene_id}: more than one target")
        for p in self.placements:
            if p.asset_id not in self.assets:
                raise SceneValidationError(f"{self.scene_id}: unknown asset {p.asset_id!r}")
        if not 0.0 <= self.occlusion_rate <= 1.0:
            raise SceneValidationError(f"{self.scene_id}: occlusion_rate outside [0, 1]")
        if self.difficulty_level not in range(1, 6):
            raise SceneValidationError(f"{self.scene_id}: difficulty_level outside 1..5")


@dataclass(frozen=True)
class SemanticGrid:
    """Per-voxel class labels on a lattice (free/target/obstacle/robot)."""

    frame: GridFrame
    labels: np.ndarray

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels, dtype=np.uint8)
        if labels.shape != self.frame.dims:
            raise ValueError(f"label shape {labels.shape} does not match dims {self.frame.dims}")
        if labels.size and labels.max() > ROBOT:
            raise ValueError(f"label value {int(labels.max())} outside 0..3")
        if labels.flags.writeable:
            labels = labels.copy()
            labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def free(cls, frame: GridFrame) -> "SemanticGrid":
        return cls(frame, np.zeros(frame.dims, dtype=np.uint8))

    def mask(self, label: int) -> VoxelGrid:
        return VoxelGrid(self.frame, self.labels == label)

    def occupied(self) -> VoxelGrid:
        return VoxelGrid(self.frame, self.labels != FREE)

    def count(self, label: int) -> int:
        return int(np.count_nonzero(self.labels == label))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SemanticGrid):
            return NotImplemented
        return self.frame.matches(other.frame) and bool(np.array_equal(self.labels, other.labels))

    __hash__ = None  # type: ignore[assignment]


def placed_grid(scene: SceneSpec, placement: Placement) -> Optional[VoxelGrid]:
    """An object's occupancy on the tightest window of the scene lattice."""
    asset = scene.assets[placement.asset_id]
    return place(voxelize_asset(asset, scene.resolution), placement.pose, scene.frame)


def paste(labels: np.ndarray, lattice: GridFrame, grid: VoxelGrid, label: int) -> int:
    """Write ``label`` into ``labels`` where ``grid`` is occupied; return the clash count."""
    off = lattice.lattice_offset(grid.frame)
    if off is None:
        raise ValueError("grid is not on the scene lattice")
    sl = tuple(slice(o, o + d) for o, d in zip(off, grid.dims))
    region = labels[sl]
    occ = grid.occupancy
    clash = int(np.count_nonzero(region[occ] != FREE))
    region[occ] = label
    return clash


def compose_semantic_grid(scene: SceneSpec, robot: Optional[VoxelGrid] = None) -> SemanticGrid:
    """Label every voxel of the scene lattice by the object covering it.

    Raises:
        SceneIntegrityError: if two objects (or the robot and an object)
            claim the same voxel.
    """
    frame = scene.frame
    labels = np.zeros(frame.dims, dtype=np.uint8)
    for p in scene.placements:
        grid = placed_grid(scene, p)
        if grid is None:
            continue
        clash = paste(labels, frame, grid, TARGET if p.role == "target" else OBSTACLE)
        if clash:
            raise SceneIntegrityError(f"{scene.scene_id}: {p.asset_id} overlaps {clash} occupied voxels")
    if robot is not None:
        rob = reframe(robot, frame).occupancy
        clash = int(np.count_nonzero(labels[rob] != FREE))
        if clash:
            raise SceneIntegrityError(f"{scene.scene_id}: robot overlaps {clash} object voxels")
        labels[rob] = ROBOT
    return SemanticGrid(frame, labels)


def object_bounds(scene: SceneSpec, placement: Placement) -> Tuple[np.ndarray, np.ndarray]:
    asset = scene.assets[placement.asset_id]
    return posed_bounds(voxelize_asset(asset, scene.resolution).frame, placement.pose)

