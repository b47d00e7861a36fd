"""Primitive and mesh voxelization into canonical asset grids.

Assets live in their own frame: boxes and cylinders are centered in x/y
with their base on z = 0, meshes keep their vertex coordinates. The grid
origin is always the min corner of the asset's bounding box.
"""
from __future__ import annotations

import math
import threading
import warnings
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .voxel_core import DEFAULT_RESOLUTION, GridFrame, VoxelGrid

_EPS = 1e-9


class MeshError(ValueError):
    """Raised for meshes that cannot be voxelized as requested."""


def _cells(extent: float, resolution: float) -> int:
    return max(1, int(math.ceil(extent / resolution - 1e-6)))


def _check_positive(name: str, values: Sequence[float]) -> None:
    for v in values:
        if not (v > 0 and math.isfinite(v)):
            raise ValueError(f"{name} must be strictly positive, got {tuple(values)}")


def voxelize_box(dims: Sequence[float], resolution: float = DEFAULT_RESOLUTION) -> VoxelGrid:
    """Center-inclusion voxelization of an axis-aligned box."""
    wx, wy, wz = (float(d) for d in dims)
    _check_positive("box dims", (wx, wy, wz))
    _check_positive("resolution", (resolution,))
    n = tuple(_cells(w, resolution) for w in (wx, wy, wz))
    frame = GridFrame((-wx / 2, -wy / 2, 0.0), resolution, n)
    # centers sit at (i + 0.5) * res from the min corner
    masks = [(np.arange(k) + 0.5) * resolution <= w + _EPS for k, w in zip(n, (wx, wy, wz))]
    occ = masks[0][:, None, None] & masks[1][None, :, None] & masks[2][None, None, :]
    return VoxelGrid(frame, occ)


def voxelize_cylinder(radius: float, height: float, resolution: float = DEFAULT_RESOLUTION) -> VoxelGrid:
    """Center-inclusion voxelization of a z-axis cylinder (base on z = 0)."""
    _check_positive("cylinder parameters", (radius, height))
    _check_positive("resolution", (resolution,))
    nxy = _cells(2 * radius, resolution)
    nz = _cells(height, resolution)
    frame = GridFrame((-radius, -radius, 0.0), resolution, (nxy, nxy, nz))
    c = -radius + (np.arange(nxy) + 0.5) * resolution
    disk = c[:, None] ** 2 + c[None, :] ** 2 <= radius * radius + _EPS * resolution
    layers = (np.arange(nz) + 0.5) * resolution <= height + _EPS
    occ = disk[:, :, None] & layers[None, None, :]
    grid = VoxelGrid(frame, occ)
    if grid.is_empty():
        warnings.warn(
            f"cylinder r={radius} h={height} is below lattice resolution {resolution}; grid is empty",
            RuntimeWarning,
            stacklevel=2,
        )
    return grid


# ---------------------------------------------------------------------------
# Meshes
# ---------------------------------------------------------------------------


def check_watertight(faces: np.ndarray) -> Optional[str]:
    """Return a diagnostic if the mesh is not closed and consistently oriented."""
    faces = np.asarray(faces, dtype=np.int64)
    if faces.ndim != 2 or faces.shape[1] != 3 or len(faces) == 0:
        return "mesh has no triangles"
    directed: Dict[Tuple[int, int], int] = {}
    for tri in faces:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (int(a), int(b))
            directed[key] = directed.get(key, 0) + 1
    for (a, b), count in directed.items():
        if count > 1:
            return f"edge ({a}, {b}) appears {count} times with the same orientation"
        if (b, a) not in directed:
            return f"boundary edge ({a}, {b}) has no opposite half-edge"
    return None


def _tri_box_overlap(tri: np.ndarray, centers: np.ndarray, half: float) -> np.ndarray:
    """Separating-axis triangle/AABB test against many equal boxes.

    ``tri`` is (3, 3); ``centers`` is (M, 3). Touching counts as overlap.
    """
    v = tri[None, :, :] - centers[:, None, :]  # (M, 3, 3)
    h = half * (1 + 1e-9)
    e = [tri[1] - tri[0], tri[2] - tri[1], tri[0] - tri[2]]
    ok = np.ones(len(centers), dtype=bool)
    # box face normals
    for k in range(3):
        ok &= (v[:, :, k].min(axis=1) <= h) & (v[:, :, k].max(axis=1) >= -h)
    # triangle normal
    n = np.cross(e[0], e[1])
    d = v[:, 0, :] @ n
    r = h * np.abs(n).sum()
    ok &= np.abs(d) <= r + 1e-15
    # nine edge cross products
    for edge in e:
        for k in range(3):
            axis = np.zeros(3)
            axis[k] = 1.0
            a = np.cross(axis, edge)
            if not np.any(a):
                continue
            p = v @ a  # (M, 3)
            r = h * np.abs(a).sum()
            ok &= (p.min(axis=1) <= r) & (p.max(axis=1) >= -r)
    return ok


def voxelize_mesh(
    vertices: np.ndarray,
    faces: np.ndarray,
    resolution: float = DEFAULT_RESOLUTION,
    fill: str = "solid",
) -> VoxelGrid:
    """Voxelize a triangle mesh.

    ``surface`` marks every voxel a triangle touches. ``solid`` additionally
    flood-fills free space from outside the bounding box and marks what the
    fill cannot reach.
    """
    if fill not in ("surface", "solid"):
        raise ValueError(f"fill must be 'surface' or 'solid', got {fill!r}")
    _check_positive("resolution", (resolution,))
    verts = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if len(faces) == 0:
        raise MeshError("mesh has no triangles")
    if faces.min() < 0 or faces.max() >= len(verts):
        raise MeshError("face index out of range")
    if fill == "solid":
        problem = check_watertight(faces)
        if problem is not None:
            raise MeshError(f"solid fill requires a watertight mesh: {problem}")

    lo = verts.min(axis=0)
    hi = verts.max(axis=0)
    dims = tuple(_cells(max(w, resolution), resolution) for w in hi - lo)
    frame = GridFrame(tuple(lo), resolution, dims)
    occ = np.zeros(dims, dtype=bool)
    half = resolution / 2
    dims_arr = np.asarray(dims)
    for tri in verts[faces]:
        t_lo = np.floor((tri.min(axis=0) - lo) / resolution - 1e-9).astype(np.int64)
        t_hi = np.floor((tri.max(axis=0) - lo) / resolution + 1e-9).astype(np.int64) + 1
        t_lo = np.clip(t_lo, 0, dims_arr)
        t_hi = np.clip(t_hi, 0, dims_arr)
        if np.any(t_hi <= t_lo):
            continue
        centers = frame.centers(t_lo, t_hi).reshape(-1, 3)
        hit = _tri_box_overlap(tri, centers, half).reshape(tuple(t_hi - t_lo))
        occ[t_lo[0] : t_hi[0], t_lo[1] : t_hi[1], t_lo[2] : t_hi[2]] |= hit

    if fill == "solid":
        # holes = free space not 6-connected to the padded exterior
        occ = ndimage.binary_fill_holes(occ)
    return VoxelGrid(frame, occ)


def box_mesh(dims: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Closed, outward-oriented triangle mesh of a box in the asset frame."""
    wx, wy, wz = dims
    x0, x1, y0, y1 = -wx / 2, wx / 2, -wy / 2, wy / 2
    verts = np.array(
        [
            [x0, y0, 0], [x1, y0, 0], [x1, y1, 0], [x0, y1, 0],
            [x0, y0, wz], [x1, y0, wz], [x1, y1, wz], [x0, y1, wz],
        ],
        dtype=np.float64,
    )
    faces = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # bottom
            [4, 5, 6], [4, 6, 7],  # top
            [0, 1, 5], [0, 5, 4],  # front (-y)
            [2, 3, 7], [2, 7, 6],  # back
            [1, 2, 6], [1, 6, 5],  # +x
            [3, 0, 4], [3, 4, 7],  # -x
        ]
    )
    return verts, faces


# ---------------------------------------------------------------------------
# Assets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ObjectAsset:
    """A placeable object: ``shape`` is ``"box"``, ``"cylinder"`` or ``"mesh"``.

    ``params`` holds (wx, wy, wz) for boxes and (radius, height) for
    cylinders. Meshes carry ``mesh_path`` and are read through
    :func:`clutterbench.dataset_io.read_mesh`.
    """

    asset_id: str
    shape: str
    params: Tuple[float, ...] = ()
    mesh_path: Optional[str] = None
    roles: Tuple[str, ...] = ("target", "obstacle")

    def __post_init__(self) -> None:
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        object.__setattr__(self, "roles", tuple(self.roles))
        if self.shape == "box":
            if len(self.params) != 3:
                raise ValueError(f"{self.asset_id}: box needs three dims")
            _check_positive(f"{self.asset_id} box dims", self.params)
        elif self.shape == "cylinder":
            if len(self.params) != 2:
                raise ValueError(f"{self.asset_id}: cylinder needs radius and height")
            _check_positive(f"{self.asset_id} cylinder parameters", self.params)
        elif self.shape == "mesh":
            if not self.mesh_path:
                raise ValueError(f"{self.asset_id}: mesh asset needs mesh_path")
        else:
            raise ValueError(f"{self.asset_id}: unknown shape {self.shape!r}")
        for role in self.roles:
            if role not in ("target", "obstacle"):
                raise ValueError(f"{self.asset_id}: unknown role {role!r}")

    def to_dict(self) -> dict:
        d = {"shape": self.shape, "params": list(self.params), "roles": list(self.roles)}
        if self.mesh_path is not None:
            d["mesh_path"] = self.mesh_path
        return d

    @classmethod
    def from_dict(cls, asset_id: str, d: dict) -> "ObjectAsset":
        return cls(
            asset_id,
            d["shape"],
            tuple(d.get("params", ())),
            d.get("mesh_path"),
            tuple(d.get("roles", ("target", "obstacle"))),
        )


_cache: Dict[Tuple[ObjectAsset, float], VoxelGrid] = {}
_cache_lock = threading.Lock()


def voxelize_asset(asset: ObjectAsset, resolution: float = DEFAULT_RESOLUTION) -> VoxelGrid:
    """Canonical grid of an asset, memoized per (asset, resolution)."""
    key = (asset, float(resolution))
    grid = _cache.get(key)
    if grid is not None:
        return grid
    if asset.shape == "box":
        grid = voxelize_box(asset.params, resolution)
    elif asset.shape == "cylinder":
        grid = voxelize_cylinder(asset.params[0], asset.params[1], resolution)
    else:
        from .dataset_io import read_mesh

        verts, faces = read_mesh(asset.mesh_path)
        grid = voxelize_mesh(verts, faces, resolution, fill="solid")
    with _cache_lock:
        _cache.setdefault(key, grid)
    return _cache[key]
