"""Metric voxel lattice, rigid poses, and the boolean/transform primitives.

Every set operation works on grids that share one frame (origin, resolution,
dims). Use :func:`reframe` to move a grid onto another lattice first.
Occupancy arrays are indexed ``[ix, iy, iz]``; the flat bitset view is
x-fastest.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

DEFAULT_RESOLUTION = 0.005

_ORTHO_TOL = 1e-9
_FRAME_TOL = 1e-9


class FrameMismatchError(ValueError):
    """Raised when two grids do not share origin, resolution and dims."""


class ClipError(ValueError):
    """Raised when a transform would drop occupied voxels outside the target frame."""


# ---------------------------------------------------------------------------
# Poses
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SE3Pose:
    """Rigid transform ``x -> R @ x + t`` (meters)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        rot = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        trans = np.array(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(rot)) or not np.all(np.isfinite(trans)):
            raise ValueError("pose entries must be finite")
        if np.max(np.abs(rot.T @ rot - np.eye(3))) >= _ORTHO_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) >= _ORTHO_TOL:
            raise ValueError("rotation determinant must be +1")
        rot.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls) -> "SE3Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, t: Sequence[float]) -> "SE3Pose":
        return cls(np.eye(3), np.asarray(t, dtype=np.float64))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "SE3Pose":
        m = np.asarray(m, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_yaw(cls, yaw: float, t: Sequence[float] = (0.0, 0.0, 0.0)) -> "SE3Pose":
        return cls(rotation_z(yaw), np.asarray(t, dtype=np.float64))

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "SE3Pose":
        rt = self.rotation.T
        return SE3Pose(rt, -rt @ self.translation)

    def compose(self, other: "SE3Pose") -> "SE3Pose":
        """Return ``self ∘ other`` (apply ``other`` first)."""
        return SE3Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def is_identity_rotation(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.rotation - np.eye(3))) <= tol)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SE3Pose):
            return NotImplemented
        return bool(
            np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )

    def __hash__(self) -> int:
        return hash((self.rotation.tobytes(), self.translation.tobytes()))

    def __repr__(self) -> str:
        return f"SE3Pose(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


def rotation_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


# ---------------------------------------------------------------------------
# Frames and grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridFrame:
    """Placement of a lattice in world space.

    ``origin`` is the min corner of voxel (0, 0, 0).
    """

    origin: Tuple[float, float, float]
    resolution: float
    dims: Tuple[int, int, int]

    def __post_init__(self) -> None:
        origin = tuple(float(v) for v in self.origin)
        dims = tuple(int(v) for v in self.dims)
        if len(origin) != 3 or len(dims) != 3:
            raise ValueError("origin and dims must have three components")
        if not self.resolution > 0 or not math.isfinite(self.resolution):
            raise ValueError(f"resolution must be positive, got {self.resolution}")
        if min(dims) < 1:
            raise ValueError(f"dims must be >= 1, got {dims}")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "resolution", float(self.resolution))
        object.__setattr__(self, "dims", dims)

    @property
    def size(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.origin) + np.asarray(self.dims) * self.resolution

    def matches(self, other: "GridFrame") -> bool:
        return (
            self.dims == other.dims
            and abs(self.resolution - other.resolution) <= 1e-12
            and max(abs(a - b) for a, b in zip(self.origin, other.origin)) <= _FRAME_TOL
        )

    def centers(self, lo=(0, 0, 0), hi=None) -> np.ndarray:
        """World-space voxel centers for the index box ``[lo, hi)``, x-fastest."""
        hi = self.dims if hi is None else hi
        axes = [
            self.origin[k] + (np.arange(lo[k], hi[k]) + 0.5) * self.resolution
            for k in range(3)
        ]
        gx, gy, gz = np.meshgrid(*axes, indexing="ij")
        return np.stack([gx, gy, gz], axis=-1)

    def lattice_offset(self, other: "GridFrame") -> Optional[Tuple[int, int, int]]:
        """Integer voxel offset of ``other.origin`` on this lattice, or None if off-lattice."""
        if abs(self.resolution - other.resolution) > 1e-12:
            return None
        rel = (np.asarray(other.origin) - np.asarray(self.origin)) / self.resolution
        rounded = np.rint(rel)
        if np.max(np.abs(rel - rounded)) * self.resolution > _FRAME_TOL:
            return None
        return tuple(int(v) for v in rounded)

    def shifted(self, offset: Sequence[int], dims: Optional[Sequence[int]] = None) -> "GridFrame":
        """Sub/superframe on the same lattice starting ``offset`` voxels from this origin."""
        origin = tuple(o + k * self.resolution for o, k in zip(self.origin, offset))
        return GridFrame(origin, self.resolution, tuple(dims) if dims is not None else self.dims)


class VoxelGrid:
    """Immutable dense binary occupancy over a :class:`GridFrame`."""

    __slots__ = ("frame", "_occ", "_count")

    def __init__(self, frame: GridFrame, occupancy: np.ndarray) -> None:
        occ = np.asarray(occupancy)
        if occ.shape != frame.dims:
            raise ValueError(f"occupancy shape {occ.shape} does not match dims {frame.dims}")
        if occ.dtype != np.bool_:
            occ = occ.astype(bool)
        elif occ.flags.writeable:
            occ = occ.copy()
        occ.setflags(write=False)
        self.frame = frame
        self._occ = occ
        self._count: Optional[int] = None

    @classmethod
    def empty(cls, frame: GridFrame) -> "VoxelGrid":
        return cls._wrap(frame, np.zeros(frame.dims, dtype=bool))

    @classmethod
    def full(cls, frame: GridFrame) -> "VoxelGrid":
        return cls._wrap(frame, np.ones(frame.dims, dtype=bool))

    @classmethod
    def from_indices(cls, frame: GridFrame, indices: Iterable[Sequence[int]]) -> "VoxelGrid":
        occ = np.zeros(frame.dims, dtype=bool)
        idx = np.asarray(list(indices), dtype=np.int64).reshape(-1, 3)
        if idx.size:
            occ[idx[:, 0], idx[:, 1], idx[:, 2]] = True
        return cls._wrap(frame, occ)

    @classmethod
    def from_bits(cls, frame: GridFrame, bits: bytes) -> "VoxelGrid":
        flat = np.unpackbits(np.frombuffer(bits, dtype=np.uint8), count=frame.size, bitorder="little")
        return cls._wrap(frame, flat.astype(bool).reshape(frame.dims, order="F"))

    @classmethod
    def _wrap(cls, frame: GridFrame, occ: np.ndarray) -> "VoxelGrid":
        # takes ownership of a freshly built array, skipping the defensive copy
        occ.setflags(write=False)
        grid = cls.__new__(cls)
        grid.frame = frame
        grid._occ = occ
        grid._count = None
        return grid

    @property
    def occupancy(self) -> np.ndarray:
        return self._occ

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.frame.dims

    @property
    def resolution(self) -> float:
        return self.frame.resolution

    @property
    def origin(self) -> Tuple[float, float, float]:
        return self.frame.origin

    @property
    def popcount(self) -> int:
        if self._count is None:
            self._count = int(np.count_nonzero(self._occ))
        return self._count

    @property
    def bits(self) -> bytes:
        """Packed occupancy bitset, x-fastest, least-significant bit first."""
        return np.packbits(self._occ.ravel(order="F"), bitorder="little").tobytes()

    def is_empty(self) -> bool:
        return not self._occ.any()

    def occupied_indices(self) -> np.ndarray:
        return np.argwhere(self._occ)

    def occupied_bounds(self) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        """Inclusive-exclusive index box of occupied voxels, or None when empty."""
        if self.is_empty():
            return None
        lo, hi = [], []
        for axis in range(3):
            other = tuple(a for a in range(3) if a != axis)
            nz = np.flatnonzero(self._occ.any(axis=other))
            lo.append(nz[0])
            hi.append(nz[-1] + 1)
        return np.array(lo), np.array(hi)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        return self.frame.matches(other.frame) and bool(np.array_equal(self._occ, other._occ))

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"VoxelGrid(dims={self.dims}, resolution={self.resolution}, origin={self.origin}, popcount={self.popcount})"


@dataclass(frozen=True)
class OverlapReport:
    collides: bool
    overlap_voxels: int
    first_hit: Optional[Tuple[int, int, int]] = field(default=None)


# ---------------------------------------------------------------------------
# Boolean algebra
# ---------------------------------------------------------------------------


def _check_frames(a: VoxelGrid, b: VoxelGrid) -> None:
    if not a.frame.matches(b.frame):
        raise FrameMismatchError(f"frame mismatch: {a.frame} vs {b.frame}")


def union(a: VoxelGrid, b: VoxelGrid) -> VoxelGrid:
    _check_frames(a, b)
    return VoxelGrid._wrap(a.frame, np.logical_or(a.occupancy, b.occupancy))


def intersect(a: VoxelGrid, b: VoxelGrid) -> VoxelGrid:
    _check_frames(a, b)
    return VoxelGrid._wrap(a.frame, np.logical_and(a.occupancy, b.occupancy))


def difference(a: VoxelGrid, b: VoxelGrid) -> VoxelGrid:
    _check_frames(a, b)
    return VoxelGrid._wrap(a.frame, a.occupancy & ~b.occupancy)


def complement(a: VoxelGrid) -> VoxelGrid:
    """Complement within the grid's bounded lattice."""
    return VoxelGrid._wrap(a.frame, ~a.occupancy)


def collides(a: VoxelGrid, b: VoxelGrid, boolean_only: bool = False) -> OverlapReport:
    """Overlap query between two grids in a common frame.

    With ``boolean_only`` the scan stops at the first shared voxel; the
    returned ``overlap_voxels`` is then a lower bound (1 when colliding) and
    ``first_hit`` is not reported.
    """
    _check_frames(a, b)
    if boolean_only:
        hit = bool(np.logical_and(a.occupancy, b.occupancy).any())
        return OverlapReport(hit, 1 if hit else 0, None)
    both = np.logical_and(a.occupancy, b.occupancy)
    flat = both.ravel(order="F")
    count = int(np.count_nonzero(flat))
    if count == 0:
        return OverlapReport(False, 0, None)
    first = int(np.argmax(flat))
    ix, iy, iz = np.unravel_index(first, a.dims, order="F")
    return OverlapReport(True, count, (int(ix), int(iy), int(iz)))


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------


def posed_bounds(frame: GridFrame, pose: SE3Pose) -> Tuple[np.ndarray, np.ndarray]:
    """World-space AABB of a frame's box after applying ``pose``."""
    lo = np.asarray(frame.origin)
    hi = frame.upper
    corners = np.array(
        [[(lo, hi)[i][0], (lo, hi)[j][1], (lo, hi)[k][2]] for i in (0, 1) for j in (0, 1) for k in (0, 1)]
    )
    posed = pose.apply(corners)
    return posed.min(axis=0), posed.max(axis=0)


def enclosing_frame(lattice: GridFrame, lo: np.ndarray, hi: np.ndarray, clip: bool = True) -> Optional[GridFrame]:
    """Smallest subframe of ``lattice`` covering the world box ``[lo, hi]``.

    Returns None when ``clip`` is set and the box misses the lattice entirely.
    """
    res = lattice.resolution
    org = np.asarray(lattice.origin)
    i_lo = np.floor((np.asarray(lo) - org) / res + 1e-9).astype(np.int64)
    i_hi = np.ceil((np.asarray(hi) - org) / res - 1e-9).astype(np.int64)
    if clip:
        i_lo = np.maximum(i_lo, 0)
        i_hi = np.minimum(i_hi, np.asarray(lattice.dims))
        if np.any(i_hi <= i_lo):
            return None
    i_hi = np.maximum(i_hi, i_lo + 1)
    return lattice.shifted(tuple(i_lo), tuple(i_hi - i_lo))


def _shift_copy(v: VoxelGrid, target: GridFrame, offset: Tuple[int, int, int]) -> np.ndarray:
    """Copy ``v`` into ``target`` where ``target.origin`` sits ``offset`` voxels from v's origin."""
    out = np.zeros(target.dims, dtype=bool)
    src_sl, dst_sl = [], []
    for k in range(3):
        s0 = max(offset[k], 0)
        s1 = min(v.dims[k], offset[k] + target.dims[k])
        if s1 <= s0:
            return out
        src_sl.append(slice(s0, s1))
        dst_sl.append(slice(s0 - offset[k], s1 - offset[k]))
    out[tuple(dst_sl)] = v.occupancy[tuple(src_sl)]
    return out


def _pull_back(v: VoxelGrid, pose: SE3Pose, target: GridFrame) -> np.ndarray:
    """Nearest-neighbour pull-back of voxel centers through ``pose⁻¹``."""
    out = np.zeros(target.dims, dtype=bool)
    if v.is_empty():
        return out
    # only visit target voxels that can see the posed source box
    lo, hi = posed_bounds(v.frame, pose)
    window = enclosing_frame(target, lo, hi, clip=True)
    if window is None:
        return out
    off = target.lattice_offset(window)
    assert off is not None
    centers = window.centers()
    inv = pose.inverse()
    local = inv.apply(centers.reshape(-1, 3))
    idx = np.floor((local - np.asarray(v.frame.origin)) / v.resolution).astype(np.int64)
    dims = np.asarray(v.dims)
    inside = np.all((idx >= 0) & (idx < dims), axis=1)
    hit = np.zeros(len(idx), dtype=bool)
    sel = idx[inside]
    hit[inside] = v.occupancy[sel[:, 0], sel[:, 1], sel[:, 2]]
    out[
        off[0] : off[0] + window.dims[0],
        off[1] : off[1] + window.dims[1],
        off[2] : off[2] + window.dims[2],
    ] = hit.reshape(window.dims)
    return out


def _clipped(v: VoxelGrid, pose: SE3Pose, target: GridFrame) -> bool:
    pts = pose.apply(v.frame.centers().reshape(-1, 3)[v.occupancy.ravel()])
    idx = np.floor((pts - np.asarray(target.origin)) / target.resolution).astype(np.int64)
    return bool(np.any((idx < 0) | (idx >= np.asarray(target.dims))))


def transform(
    v: VoxelGrid,
    pose: SE3Pose,
    target_frame: Optional[GridFrame] = None,
    allow_clip: bool = False,
) -> VoxelGrid:
    """Resample ``v`` after applying ``pose`` onto ``target_frame``.

    A target voxel is occupied iff its center, mapped through ``pose⁻¹``,
    falls inside an occupied source voxel. Lattice-aligned pure translations
    reduce to exact shifts. Without ``target_frame`` the result lives on the
    smallest frame of the source lattice enclosing the posed grid.

    Raises:
        ClipError: if occupied voxels land outside ``target_frame`` and
            ``allow_clip`` is false.
    """
    if target_frame is None:
        lo, hi = posed_bounds(v.frame, pose)
        base = v.frame
        target_frame = enclosing_frame(base, lo, hi, clip=False)
    if pose.is_identity_rotation() and abs(v.resolution - target_frame.resolution) <= 1e-12:
        moved = GridFrame(tuple(np.asarray(v.origin) + pose.translation), v.resolution, v.dims)
        off = moved.lattice_offset(target_frame)
        if off is not None:
            out = _shift_copy(v, target_frame, off)
            if not allow_clip and int(np.count_nonzero(out)) != v.popcount:
                raise ClipError("transform clips occupied voxels; pass allow_clip=True to permit")
            return VoxelGrid._wrap(target_frame, out)
    if not allow_clip and not v.is_empty() and _clipped(v, pose, target_frame):
        raise ClipError("transform clips occupied voxels; pass allow_clip=True to permit")
    return VoxelGrid._wrap(target_frame, _pull_back(v, pose, target_frame))


def reframe(v: VoxelGrid, frame: GridFrame, allow_clip: bool = True) -> VoxelGrid:
    """Move ``v`` onto another frame (exact slicing when lattices align)."""
    return transform(v, SE3Pose.identity(), frame, allow_clip=allow_clip)


def place(v: VoxelGrid, pose: SE3Pose, lattice: GridFrame) -> Optional[VoxelGrid]:
    """Transform ``v`` onto the tightest subframe of ``lattice`` covering its posed box.

    Voxels beyond ``lattice`` are dropped. Returns None when the posed box
    misses the lattice.
    """
    lo, hi = posed_bounds(v.frame, pose)
    window = enclosing_frame(lattice, lo, hi, clip=True)
    if window is None:
        return None
    return transform(v, pose, window, allow_clip=True)


def window_of(v: VoxelGrid, window: GridFrame) -> VoxelGrid:
    """Crop ``v`` to a subframe on its own lattice (zero padded outside)."""
    off = v.frame.lattice_offset(window)
    if off is None:
        raise FrameMismatchError("window is not on the grid's lattice")
    return VoxelGrid._wrap(window, _shift_copy(v, window, off))


def iou(a: VoxelGrid, b: VoxelGrid) -> float:
    _check_frames(a, b)
    inter = np.count_nonzero(a.occupancy & b.occupancy)
    uni = np.count_nonzero(a.occupancy | b.occupancy)
    return 1.0 if uni == 0 else inter / uni
