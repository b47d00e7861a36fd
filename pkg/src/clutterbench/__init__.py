"""Voxel scene generation, rendering and disturbance metrics for cluttered-object retrieval."""

from .scene import FREE, OBSTACLE, ROBOT, TARGET, SceneSpec, SemanticGrid, compose_semantic_grid
from .voxel_core import GridFrame, SE3Pose, VoxelGrid

__version__ = "0.1.0"

__all__ = [
    "FREE",
    "OBSTACLE",
    "ROBOT",
    "TARGET",
    "GridFrame",
    "SE3Pose",
    "SceneSpec",
    "SemanticGrid",
    "VoxelGrid",
    "compose_semantic_grid",
]
