"""On-disk formats: occupancy (FBOC), depth (FBDP), scenes, trajectories, manifests.

Binary layouts are little-endian.

FBOC occupancy::

    offset  size  field
    0       4     magic b"FBOC"
    4       2     version (u16) = 1
    6       12    dims nx, ny, nz (3 x u32)
    18      8     resolution (f64)
    26      24    origin x, y, z (3 x f64)
    50      5*k   runs: label (u8) + run length (u32), x-fastest voxel order

FBDP depth::

    0       4     magic b"FBDP"
    4       4     width (u32)
    8       4     height (u32)
    12      2     mode (u16): 0 metric, 1 normalized
    14      4*w*h row-major f32 values; invalid pixels hold -1.0

Scenes are UTF-8 JSON documents; trajectories are JSON Lines with a header
record followed by one record per step in a fixed field order. Meshes use
the ASCII OFF format (triangles only).
"""
from __future__ import annotations

import contextlib
import hashlib
import io
import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any, BinaryIO, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .scene import ROBOT, Container, Placement, SceneSpec, SceneValidationError, SemanticGrid
from .voxel_core import GridFrame, SE3Pose
from .voxelizer import ObjectAsset

PathLike = Union[str, os.PathLike]

OCC_MAGIC = b"FBOC"
OCC_VERSION = 1
OCC_HEADER = struct.Struct("<4sH3Id3d")
RUN = np.dtype([("label", "u1"), ("length", "<u4")])

DEPTH_MAGIC = b"FBDP"
DEPTH_HEADER = struct.Struct("<4sIIH")
DEPTH_INVALID = np.float32(-1.0)

SCENE_FORMAT = "clutterbench.scene"
SCENE_VERSION = 1
MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1

MAX_VOXELS = 1 << 31
MAX_PIXELS = 1 << 28


class FormatError(ValueError):
    """Malformed payload; ``offset`` is the byte (or line) position of the fault."""

    def __init__(self, message: str, offset: int = 0) -> None:
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset
        self.reason = message


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


@contextlib.contextmanager
def _atomic_sink(sink: Union[PathLike, BinaryIO]) -> Iterator[BinaryIO]:
    """Yield a writable binary stream; paths are written via temp file + rename."""
    if hasattr(sink, "write"):
        yield sink  # type: ignore[misc]
        return
    path = Path(sink)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def _read_all(source: Union[PathLike, BinaryIO, bytes]) -> bytes:
    if isinstance(source, (bytes, bytearray, memoryview)):
        return bytes(source)
    if hasattr(source, "read"):
        return source.read()  # type: ignore[union-attr]
    return Path(source).read_bytes()


def write_bytes_atomic(path: PathLike, data: bytes) -> int:
    with _atomic_sink(path) as fh:
        fh.write(data)
    return len(data)


def sha256_file(path: PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# occupancy
# ---------------------------------------------------------------------------


def encode_runs(labels: np.ndarray) -> np.ndarray:
    """Run-length encode a label volume in x-fastest order."""
    flat = np.asarray(labels, dtype=np.uint8).ravel(order="F")
    if flat.size == 0:
        return np.zeros(0, dtype=RUN)
    starts = np.concatenate(([0], np.flatnonzero(flat[1:] != flat[:-1]) + 1))
    lengths = np.diff(np.concatenate((starts, [flat.size])))
    values = flat[starts]
    limit = 0xFFFFFFFF
    if lengths.max() > limit:
        reps = (lengths + limit - 1) // limit
        values = np.repeat(values, reps)
        split = []
        for n in lengths:
            while n > limit:
                split.append(limit)
                n -= limit
            split.append(n)
        lengths = np.asarray(split)
    runs = np.empty(len(values), dtype=RUN)
    runs["label"] = values
    runs["length"] = lengths
    return runs


def occupancy_bytes(grid: SemanticGrid) -> bytes:
    f = grid.frame
    header = OCC_HEADER.pack(OCC_MAGIC, OCC_VERSION, *f.dims, f.resolution, *f.origin)
    return header + encode_runs(grid.labels).tobytes()


def write_occupancy(grid: SemanticGrid, sink: Union[PathLike, BinaryIO]) -> int:
    """Write a semantic grid as FBOC; returns the byte count."""
    data = occupancy_bytes(grid)
    with _atomic_sink(sink) as fh:
        fh.write(data)
    return len(data)


def read_occupancy(source: Union[PathLike, BinaryIO, bytes]) -> SemanticGrid:
    data = _read_all(source)
    if len(data) < 4 or data[:4] != OCC_MAGIC:
        raise FormatError("bad magic, expected b'FBOC'", 0)
    if len(data) < OCC_HEADER.size:
        raise FormatError(f"truncated header: {len(data)} of {OCC_HEADER.size} bytes", len(data))
    _, version, nx, ny, nz, res, ox, oy, oz = OCC_HEADER.unpack_from(data, 0)
    if version != OCC_VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if min(nx, ny, nz) < 1:
        raise FormatError(f"dims must be >= 1, got {(nx, ny, nz)}", 6)
    total = nx * ny * nz
    if total > MAX_VOXELS:
        raise FormatError(f"dims product {total} exceeds limit {MAX_VOXELS}", 6)
    if not (res > 0 and np.isfinite(res)):
        raise FormatError(f"resolution must be positive, got {res}", 18)
    if not all(np.isfinite((ox, oy, oz))):
        raise FormatError("origin must be finite", 26)
    body = len(data) - OCC_HEADER.size
    n_runs, tail = divmod(body, RUN.itemsize)
    if tail:
        raise FormatError("truncated run record", OCC_HEADER.size + n_runs * RUN.itemsize)
    runs = np.frombuffer(data, dtype=RUN, count=n_runs, offset=OCC_HEADER.size)
    lengths = runs["length"].astype(np.int64)
    labels = runs["label"]

    def run_offset(i: int) -> int:
        return OCC_HEADER.size + int(i) * RUN.itemsize

    bad = np.flatnonzero(lengths == 0)
    if bad.size:
        raise FormatError("zero-length run", run_offset(bad[0]) + 1)
    bad = np.flatnonzero(labels > ROBOT)
    if bad.size:
        raise FormatError(f"label {int(labels[bad[0]])} outside 0..3", run_offset(bad[0]))
    cum = np.cumsum(lengths)
    over = np.flatnonzero(cum > total)
    if over.size:
        raise FormatError(f"runs overflow the grid: {int(cum[over[0]])} > {total} voxels", run_offset(over[0]) + 1)
    covered = int(cum[-1]) if cum.size else 0
    if covered != total:
        raise FormatError(f"runs cover {covered} voxels, dims require {total}", len(data))
    flat = np.repeat(labels, lengths)
    frame = GridFrame((ox, oy, oz), res, (nx, ny, nz))
    return SemanticGrid(frame, flat.reshape((nx, ny, nz), order="F"))


# ---------------------------------------------------------------------------
# depth
# ---------------------------------------------------------------------------


def depth_bytes(d) -> bytes:
    values = np.where(d.valid, d.values, DEPTH_INVALID).astype("<f4")
    header = DEPTH_HEADER.pack(DEPTH_MAGIC, d.width, d.height, 1 if d.normalized else 0)
    return header + values.tobytes(order="C")


def write_depth(d, sink: Union[PathLike, BinaryIO]) -> int:
    """Write a :class:`~clutterbench.view_render.DepthMap` as FBDP."""
    data = depth_bytes(d)
    with _atomic_sink(sink) as fh:
        fh.write(data)
    return len(data)


def read_depth(source: Union[PathLike, BinaryIO, bytes]):
    from .view_render import DepthMap

    data = _read_all(source)
    if len(data) < 4 or data[:4] != DEPTH_MAGIC:
        raise FormatError("bad magic, expected b'FBDP'", 0)
    if len(data) < DEPTH_HEADER.size:
        raise FormatError(f"truncated header: {len(data)} of {DEPTH_HEADER.size} bytes", len(data))
    _, width, height, mode = DEPTH_HEADER.unpack_from(data, 0)
    if width < 1 or height < 1:
        raise FormatError(f"image size must be positive, got {width}x{height}", 4)
    if width * height > MAX_PIXELS:
        raise FormatError(f"image size {width}x{height} exceeds limit", 4)
    if mode not in (0, 1):
        raise FormatError(f"unknown mode flag {mode}", 12)
    need = width * height * 4
    have = len(data) - DEPTH_HEADER.size
    if have < need:
        raise FormatError(f"truncated payload: {have} of {need} bytes", len(data))
    if have > need:
        raise FormatError(f"{have - need} trailing bytes after payload", DEPTH_HEADER.size + need)
    values = np.frombuffer(data, dtype="<f4", count=width * height, offset=DEPTH_HEADER.size)
    values = values.reshape(height, width).astype(np.float32)
    valid = values >= 0
    return DepthMap(values, valid, normalized=bool(mode))


# ---------------------------------------------------------------------------
# poses & scenes
# ---------------------------------------------------------------------------


def pose_to_json(p: SE3Pose) -> Dict[str, Any]:
    return {"rotation": p.rotation.tolist(), "translation": p.translation.tolist()}


def pose_from_json(d: Dict[str, Any]) -> SE3Pose:
    return SE3Pose(np.array(d["rotation"], dtype=np.float64), np.array(d["translation"], dtype=np.float64))


_SCENE_KEYS = (
    "format", "version", "scene_id", "seed", "container", "resolution", "assets",
    "placements", "occlusion_rate", "difficulty_level", "flags",
)
_PLACEMENT_KEYS = ("asset_id", "role", "rotation", "translation")


def scene_to_json(scene: SceneSpec) -> Dict[str, Any]:
    doc: Dict[str, Any] = {
        "format": SCENE_FORMAT,
        "version": SCENE_VERSION,
        "scene_id": scene.scene_id,
        "seed": int(scene.seed),
        "container": {"kind": scene.container.kind, "interior": list(scene.container.interior)},
        "resolution": float(scene.resolution),
        "assets": {k: scene.assets[k].to_dict() for k in sorted(scene.assets)},
        "placements": [
            {"asset_id": p.asset_id, "role": p.role, **pose_to_json(p.pose), **p.extras}
            for p in scene.placements
        ],
        "occlusion_rate": float(scene.occlusion_rate),
        "difficulty_level": int(scene.difficulty_level),
        "flags": dict(scene.flags),
    }
    for k, v in scene.extras.items():
        doc.setdefault(k, v)
    return doc


def scene_bytes(scene: SceneSpec) -> bytes:
    return (json.dumps(scene_to_json(scene), sort_keys=True, indent=1, ensure_ascii=False) + "\n").encode("utf-8")


def write_scene(scene: SceneSpec, sink: Union[PathLike, BinaryIO]) -> int:
    scene.validate()
    data = scene_bytes(scene)
    with _atomic_sink(sink) as fh:
        fh.write(data)
    return len(data)


def scene_from_json(doc: Dict[str, Any], strict: bool = True) -> SceneSpec:
    if not isinstance(doc, dict):
        raise SceneValidationError("scene document must be a JSON object")
    if doc.get("format") != SCENE_FORMAT:
        raise SceneValidationError(f"not a scene document (format={doc.get('format')!r})")
    if doc.get("version") != SCENE_VERSION:
        raise SceneValidationError(f"unsupported scene version {doc.get('version')!r}")
    unknown = sorted(set(doc) - set(_SCENE_KEYS))
    if unknown and strict:
        raise SceneValidationError(f"unknown scene fields: {unknown}")
    missing = [k for k in _SCENE_KEYS if k not in doc]
    if missing:
        raise SceneValidationError(f"missing scene fields: {missing}")
    assets = {k: ObjectAsset.from_dict(k, v) for k, v in doc["assets"].items()}
    placements = []
    for i, pd in enumerate(doc["placements"]):
        extra = {k: v for k, v in pd.items() if k not in _PLACEMENT_KEYS}
        if extra and strict:
            raise SceneValidationError(f"placement {i}: unknown fields {sorted(extra)}")
        placements.append(Placement(pd["asset_id"], pose_from_json(pd), pd["role"], extra))
    scene = SceneSpec(
        scene_id=doc["scene_id"],
        container=Container(doc["container"]["kind"], tuple(doc["container"]["interior"])),
        resolution=float(doc["resolution"]),
        placements=placements,
        assets=assets,
        seed=int(doc["seed"]),
        occlusion_rate=float(doc["occlusion_rate"]),
        difficulty_level=int(doc["difficulty_level"]),
        flags=dict(doc["flags"]),
        extras={k: doc[k] for k in unknown},
    )
    scene.validate()
    return scene


def read_scene(source: Union[PathLike, BinaryIO, bytes], strict: bool = True) -> SceneSpec:
    raw = _read_all(source)
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"scene is not valid UTF-8: {exc.reason}", exc.start) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        # the decoder reports a character index; convert it to a byte offset
        offset = len(text[: exc.pos].encode("utf-8"))
        raise FormatError(f"scene is not valid JSON: {exc.msg}", offset) from exc
    return scene_from_json(doc, strict=strict)


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

STEP_FIELDS = (
    "index", "dt", "ee_pose", "action", "target_pose", "target_speed",
    "target_accel", "obstacle_poses", "goal_distance",
)
HEADER_FIELDS = ("kind", "trajectory_id", "scene_id", "fetched")


def _step_record(step) -> Dict[str, Any]:
    return {
        "index": int(step.index),
        "dt": float(step.dt),
        "ee_pose": pose_to_json(step.ee_pose),
        "action": [float(a) for a in step.action],
        "target_pose": pose_to_json(step.target_pose),
        "target_speed": float(step.target_speed),
        "target_accel": float(step.target_accel),
        "obstacle_poses": [pose_to_json(p) for p in step.obstacle_poses],
        "goal_distance": float(step.goal_distance),
    }


@dataclass
class TrajectoryLog:
    trajectory_id: str
    scene_id: str
    fetched: bool
    steps: list = field(default_factory=list)


def trajectory_bytes(log: TrajectoryLog) -> bytes:
    lines = [json.dumps({"kind": "header", "trajectory_id": log.trajectory_id,
                         "scene_id": log.scene_id, "fetched": bool(log.fetched)})]
    lines += [json.dumps(_step_record(s)) for s in log.steps]
    return ("\n".join(lines) + "\n").encode("utf-8")


def write_trajectory(log: TrajectoryLog, sink: Union[PathLike, BinaryIO]) -> int:
    data = trajectory_bytes(log)
    with _atomic_sink(sink) as fh:
        fh.write(data)
    return len(data)


def read_trajectory(source: Union[PathLike, BinaryIO, bytes]) -> TrajectoryLog:
    from .impact_metrics import TrajectoryStep

    try:
        text = _read_all(source).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"trajectory log is not valid UTF-8: {exc.reason}", exc.start) from exc
    lines = [ln for ln in text.splitlines() if ln.strip()]
    offsets = []
    pos = 0
    for ln in text.splitlines(keepends=True):
        if ln.strip():
            offsets.append(pos)
        pos += len(ln.encode("utf-8"))
    if not lines:
        raise FormatError("empty trajectory log", 0)
    try:
        records = [json.loads(ln) for ln in lines]
    except json.JSONDecodeError as exc:
        bad = next(i for i, ln in enumerate(lines) if not _parses(ln))
        raise FormatError(f"line {bad + 1} is not valid JSON: {exc.msg}", offsets[bad]) from exc
    header = records[0]
    if not isinstance(header, dict) or tuple(header) != HEADER_FIELDS or header["kind"] != "header":
        raise FormatError(f"first record must be a header with fields {HEADER_FIELDS}", 0)
    steps = []
    for i, rec in enumerate(records[1:], start=1):
        if not isinstance(rec, dict) or tuple(rec) != STEP_FIELDS:
            raise FormatError(f"line {i + 1}: step fields must be {STEP_FIELDS}", offsets[i])
        try:
            steps.append(
                TrajectoryStep(
                    index=int(rec["index"]),
                    dt=float(rec["dt"]),
                    ee_pose=pose_from_json(rec["ee_pose"]),
                    action=tuple(float(a) for a in rec["action"]),
                    target_pose=pose_from_json(rec["target_pose"]),
                    target_speed=float(rec["target_speed"]),
                    target_accel=float(rec["target_accel"]),
                    obstacle_poses=tuple(pose_from_json(p) for p in rec["obstacle_poses"]),
                    goal_distance=float(rec["goal_distance"]),
                )
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"line {i + 1}: {exc}", offsets[i]) from exc
    return TrajectoryLog(str(header["trajectory_id"]), str(header["scene_id"]), bool(header["fetched"]), steps)


def _parses(line: str) -> bool:
    try:
        json.loads(line)
        return True
    except json.JSONDecodeError:
        return False


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------


def content_digest(root: PathLike, rel_paths: Iterable[str]) -> str:
    """Digest over (path, file hash) pairs in sorted path order."""
    root = Path(root)
    h = hashlib.sha256()
    for rel in sorted(rel_paths):
        h.update(rel.encode("utf-8") + b"\0")
        h.update(sha256_file(root / rel).encode("ascii") + b"\n")
    return h.hexdigest()


@dataclass
class DatasetManifest:
    config_digest: str
    scenes: List[Dict[str, Any]]
    content_digest: str
    seed: int = 0
    format_version: int = MANIFEST_VERSION
    config: Dict[str, Any] = field(default_factory=dict)

    @property
    def scene_count(self) -> int:
        return len(self.scenes)

    def payload_paths(self) -> List[str]:
        out = []
        for entry in self.scenes:
            out += [entry[k] for k in ("scene_path", "occupancy_path") if entry.get(k)]
        return out

    def to_json(self) -> Dict[str, Any]:
        return {
            "format_version": self.format_version,
            "seed": self.seed,
            "config_digest": self.config_digest,
            "config": self.config,
            "scene_count": self.scene_count,
            "scenes": self.scenes,
            "content_digest": self.content_digest,
        }


def manifest_bytes(m: DatasetManifest) -> bytes:
    return (json.dumps(m.to_json(), sort_keys=True, indent=1) + "\n").encode("utf-8")


def write_manifest(root: PathLike, m: DatasetManifest) -> str:
    """Write the manifest last; returns the sha256 of its bytes."""
    data = manifest_bytes(m)
    write_bytes_atomic(Path(root) / MANIFEST_NAME, data)
    return hashlib.sha256(data).hexdigest()


def read_manifest(root: PathLike) -> DatasetManifest:
    path = Path(root) / MANIFEST_NAME
    if not path.exists():
        raise FileNotFoundError(f"{root}: no {MANIFEST_NAME}; dataset is incomplete")
    doc = json.loads(path.read_text("utf-8"))
    if doc.get("format_version") != MANIFEST_VERSION:
        raise FormatError(f"unsupported manifest version {doc.get('format_version')!r}", 0)
    if doc.get("scene_count") != len(doc.get("scenes", [])):
        raise FormatError("scene_count does not match the number of entries", 0)
    return DatasetManifest(
        config_digest=doc["config_digest"],
        scenes=doc["scenes"],
        content_digest=doc["content_digest"],
        seed=doc.get("seed", 0),
        format_version=doc["format_version"],
        config=doc.get("config", {}),
    )


def verify_manifest(root: PathLike) -> bool:
    m = read_manifest(root)
    return content_digest(root, m.payload_paths()) == m.content_digest


def manifest_digest(root: PathLike) -> str:
    return hashlib.sha256((Path(root) / MANIFEST_NAME).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# meshes (ASCII OFF)
# ---------------------------------------------------------------------------


def write_mesh(vertices: np.ndarray, faces: np.ndarray, sink: Union[PathLike, BinaryIO]) -> int:
    verts = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    tris = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    buf = io.StringIO()
    buf.write("OFF\n")
    buf.write(f"{len(verts)} {len(tris)} 0\n")
    for v in verts:
        buf.write(" ".join(repr(float(c)) for c in v) + "\n")
    for f in tris:
        buf.write(f"3 {f[0]} {f[1]} {f[2]}\n")
    data = buf.getvalue().encode("ascii")
    with _atomic_sink(sink) as fh:
        fh.write(data)
    return len(data)


def read_mesh(source: Union[PathLike, BinaryIO, bytes]) -> Tuple[np.ndarray, np.ndarray]:
    text = _read_all(source).decode("ascii", errors="strict")
    tokens: List[str] = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            tokens.extend(line.split())
    if not tokens or tokens[0] != "OFF":
        raise FormatError("mesh must start with 'OFF'", 0)
    try:
        nv, nf = int(tokens[1]), int(tokens[2])
        pos = 4
        verts = np.array(tokens[pos : pos + 3 * nv], dtype=np.float64).reshape(nv, 3)
        pos += 3 * nv
        faces = []
        for _ in range(nf):
            k = int(tokens[pos])
            if k != 3:
                raise FormatError(f"only triangles are supported, found a {k}-gon", 0)
            faces.append([int(t) for t in tokens[pos + 1 : pos + 4]])
            pos += 4
    except (IndexError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"malformed OFF body: {exc}", 0) from exc
    return verts, np.asarray(faces, dtype=np.int64).reshape(-1, 3)
