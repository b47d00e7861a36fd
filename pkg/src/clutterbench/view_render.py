"""Pinhole projection, voxel raycasting, occlusion measurement and ROI crops."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from .scene import FREE, OBSTACLE, TARGET, SceneSpec, SemanticGrid, compose_semantic_grid
from .voxel_core import GridFrame, SE3Pose, VoxelGrid

DEFAULT_EPS = 1e-6
DEFAULT_ROI = (0.20, 0.20, 0.30)

_ONE_BELOW = np.nextafter(np.float32(1.0), np.float32(0.0))


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics plus a world-to-camera extrinsic.

    Pixel ``(i, j)`` covers ``u ∈ [i, i+1)``, ``v ∈ [j, j+1)``.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    extrinsic: SE3Pose

    def __post_init__(self) -> None:
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @classmethod
    def look_at(
        cls,
        eye: Sequence[float],
        target: Sequence[float],
        up: Sequence[float] = (0.0, 0.0, 1.0),
        width: int = 128,
        height: int = 96,
        fov_deg: float = 60.0,
    ) -> "CameraModel":
        """Camera at ``eye`` looking at ``target`` (x right, y down, z forward)."""
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(up, dtype=np.float64))
        if np.linalg.norm(right) < 1e-9:
            raise ValueError("up vector is parallel to the viewing direction")
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        rot = np.stack([right, down, forward])  # rows: camera axes in world
        f = (width / 2) / math.tan(math.radians(fov_deg) / 2)
        return cls(f, f, width / 2, height / 2, width, height, SE3Pose(rot, -rot @ eye))

    @property
    def center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.extrinsic.rotation.T @ self.extrinsic.translation

    def pixel_rays(self) -> Tuple[np.ndarray, np.ndarray]:
        """World-space origins and unit directions through every pixel center, row-major."""
        jj, ii = np.meshgrid(np.arange(self.height), np.arange(self.width), indexing="ij")
        x = (ii + 0.5 - self.cx) / self.fx
        y = (jj + 0.5 - self.cy) / self.fy
        d_cam = np.stack([x, y, np.ones_like(x)], axis=-1).reshape(-1, 3)
        d = d_cam @ self.extrinsic.rotation  # R^T applied to row vectors
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        o = np.broadcast_to(self.center, d.shape).copy()
        return o, d


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel depth (float32, row-major ``[v, u]``) with a validity mask."""

    values: np.ndarray
    valid: np.ndarray
    normalized: bool = False

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float32)
        valid = np.asarray(self.valid, dtype=bool)
        if values.ndim != 2 or values.shape != valid.shape:
            raise ValueError("values and valid must be matching 2-D arrays")
        v = values[valid]
        if not np.all(np.isfinite(v)):
            raise ValueError("valid pixels must be finite")
        if self.normalized:
            if v.size and (v.min() < 0 or v.max() > 1):
                raise ValueError("normalized depth must lie in [0, 1]")
        elif v.size and v.min() < 0:
            raise ValueError("metric depth must be non-negative")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class RoiSpec:
    center: Tuple[float, float, float]
    extents: Tuple[float, float, float] = DEFAULT_ROI

    def __post_init__(self) -> None:
        if len(self.extents) != 3 or min(self.extents) <= 0:
            raise ValueError(f"ROI extents must be positive, got {self.extents}")


# ---------------------------------------------------------------------------
# Projection
# ---------------------------------------------------------------------------


def project(p: Sequence[float], cam: CameraModel) -> Optional[Tuple[float, float]]:
    pc = cam.extrinsic.apply(np.asarray(p, dtype=np.float64))
    if pc[2] <= 0:
        return None
    u = cam.fx * pc[0] / pc[2] + cam.cx
    v = cam.fy * pc[1] / pc[2] + cam.cy
    if not (0 <= u < cam.width and 0 <= v < cam.height):
        return None
    return float(u), float(v)


def hit_views(p: Sequence[float], cams: Sequence[CameraModel]) -> Set[int]:
    if not cams:
        raise ValueError("need at least one camera")
    return {i for i, cam in enumerate(cams) if project(p, cam) is not None}


# ---------------------------------------------------------------------------
# Raycasting
# ---------------------------------------------------------------------------


def _grid_parts(grid: Union[SemanticGrid, VoxelGrid]) -> Tuple[GridFrame, np.ndarray]:
    if isinstance(grid, SemanticGrid):
        return grid.frame, grid.labels != FREE
    return grid.frame, grid.occupancy


def cast_rays(
    grid: Union[SemanticGrid, VoxelGrid],
    origins: np.ndarray,
    directions: np.ndarray,
) -> np.ndarray:
    """Distance along each unit ray to the entry face of the first occupied voxel.

    Lattice traversal visits every crossed cell once (Amanatides-Woo).
    Missed rays get ``inf``; rays starting inside an occupied voxel get 0.
    """
    frame, occ = _grid_parts(grid)
    o = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    d = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    n = len(o)
    res = frame.resolution
    lo = np.asarray(frame.origin)
    dims = np.asarray(frame.dims)
    hi = lo + dims * res
    out = np.full(n, np.inf)

    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (lo - o) * inv
        t2 = (hi - o) * inv
    tmin = np.where(np.isnan(t1), -np.inf, np.minimum(t1, t2))
    tmax = np.where(np.isnan(t1), np.inf, np.maximum(t1, t2))
    # axis-parallel rays outside the slab never enter
    parallel_out = (d == 0) & ((o < lo) | (o >= hi))
    t_enter = np.maximum(tmin.max(axis=1), 0.0)
    t_exit = tmax.min(axis=1)
    active = (t_enter <= t_exit) & ~parallel_out.any(axis=1)

    idx = np.flatnonzero(active)
    if idx.size == 0:
        return out
    t = t_enter[idx]
    oi, di = o[idx], d[idx]
    p = oi + di * t[:, None]
    cell = np.floor((p - lo) / res).astype(np.int64)
    cell = np.clip(cell, 0, dims - 1)
    step = np.where(di > 0, 1, -1).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        boundary = lo + (cell + (step > 0)) * res
        t_max = np.where(di != 0, (boundary - oi) / di, np.inf)
        t_delta = np.where(di != 0, res / np.abs(di), np.inf)

    while idx.size:
        hit = occ[cell[:, 0], cell[:, 1], cell[:, 2]]
        if hit.any():
            out[idx[hit]] = t[hit]
            keep = ~hit
            idx, t, cell, t_max, t_delta, step = idx[keep], t[keep], cell[keep], t_max[keep], t_delta[keep], step[keep]
            if not idx.size:
                break
        axis = np.argmin(t_max, axis=1)
        rows = np.arange(len(idx))
        t = t_max[rows, axis]
        cell[rows, axis] += step[rows, axis]
        t_max[rows, axis] += t_delta[rows, axis]
        inside = np.all((cell >= 0) & (cell < dims), axis=1)
        if not inside.all():
            idx, t, cell, t_max, t_delta, step = (
                idx[inside], t[inside], cell[inside], t_max[inside], t_delta[inside], step[inside],
            )
    return out


def raycast_depth(grid: Union[SemanticGrid, VoxelGrid], cam: CameraModel) -> DepthMap:
    """Render metric range (distance along the pixel ray) to the first non-free voxel."""
    o, d = cam.pixel_rays()
    dist = cast_rays(grid, o, d).reshape(cam.height, cam.width)
    valid = np.isfinite(dist)
    values = np.where(valid, dist, -1.0)
    return DepthMap(values, valid, normalized=False)


def normalize_depth(d: DepthMap, eps: float = DEFAULT_EPS) -> DepthMap:
    """Per-image min-max scaling over valid pixels: ``(D - min) / (max - min + eps)``."""
    if d.normalized:
        raise ValueError("depth map is already normalized")
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not d.valid.any():
        raise ValueError("depth map has no valid pixels")
    v = d.values.astype(np.float64)
    lo = v[d.valid].min()
    hi = v[d.valid].max()
    scaled = (v - lo) / (hi - lo + eps)
    # float32 storage can round values just below 1 up to exactly 1
    scaled = np.minimum(scaled.astype(np.float32), _ONE_BELOW)
    out = np.where(d.valid, scaled, np.float32(-1.0))
    return DepthMap(out, d.valid.copy(), normalized=True)


# ---------------------------------------------------------------------------
# Occlusion and ROI
# ---------------------------------------------------------------------------


def frontal_first_hits(labels: np.ndarray) -> np.ndarray:
    """Label of the first non-free voxel in every (x, z) column marching along +y."""
    nonfree = labels != FREE
    first = np.argmax(nonfree, axis=1)  # (nx, nz)
    ix, iz = np.meshgrid(np.arange(labels.shape[0]), np.arange(labels.shape[2]), indexing="ij")
    hits = labels[ix, first, iz]
    return np.where(nonfree.any(axis=1), hits, FREE)


def occlusion_rate_of(grid: SemanticGrid) -> float:
    """Fraction of target silhouette columns whose first frontal hit is an obstacle."""
    target_cols = (grid.labels == TARGET).any(axis=1)
    total = int(np.count_nonzero(target_cols))
    if total == 0:
        return 0.0
    occluded = target_cols & (frontal_first_hits(grid.labels) == OBSTACLE)
    return int(np.count_nonzero(occluded)) / total


def occlusion_rate(scene: SceneSpec) -> float:
    """Orthographic view from the container opening (-y), one column per lattice (x, z)."""
    return occlusion_rate_of(compose_semantic_grid(scene))


def roi_frame(lattice: GridFrame, roi: RoiSpec) -> GridFrame:
    """Lattice-aligned frame of exactly ``extent / resolution`` cells per axis around the ROI center."""
    res = lattice.resolution
    dims = tuple(max(1, int(round(e / res))) for e in roi.extents)
    lo = np.asarray(roi.center, dtype=np.float64) - np.asarray(dims) * res / 2
    offset = np.rint((lo - np.asarray(lattice.origin)) / res).astype(np.int64)
    return lattice.shifted(tuple(offset), dims)


def crop_roi(grid: SemanticGrid, roi: RoiSpec) -> SemanticGrid:
    """Crop labels to the ROI box; cells beyond the source grid are free."""
    frame = roi_frame(grid.frame, roi)
    off = grid.frame.lattice_offset(frame)
    out = np.zeros(frame.dims, dtype=np.uint8)
    src, dst = [], []
    for k in range(3):
        s0 = max(off[k], 0)
        s1 = min(grid.frame.dims[k], off[k] + frame.dims[k])
        if s1 <= s0:
            return SemanticGrid(frame, out)
        src.append(slice(s0, s1))
        dst.append(slice(s0 - off[k], s1 - off[k]))
    out[tuple(dst)] = grid.labels[tuple(src)]
    return SemanticGrid(frame, out)


def default_cameras(scene_frame: GridFrame, width: int = 128, height: int = 96) -> List[CameraModel]:
    """Two front cameras looking into the container opening from -y."""
    ext = scene_frame.upper - np.asarray(scene_frame.origin)
    mid = np.asarray(scene_frame.origin) + ext / 2
    left = (mid[0] - 0.25 * ext[0], -0.6, mid[2] + 0.3 * ext[2])
    right = (mid[0] + 0.25 * ext[0], -0.6, mid[2] + 0.3 * ext[2])
    return [CameraModel.look_at(eye, mid, width=width, height=height) for eye in (left, right)]
