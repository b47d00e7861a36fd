import hashlib
import io
import json
import struct

import numpy as np
import pytest

from clutterbench import dataset_io
from clutterbench.dataset_io import FormatError, TrajectoryLog
from clutterbench.impact_metrics import TrajectoryStep
from clutterbench.scene import SceneValidationError, SemanticGrid
from clutterbench.scene_gen import GenConfig, generate_scene
from clutterbench.view_render import DepthMap
from clutterbench.voxel_core import GridFrame, SE3Pose
from clutterbench.voxelizer import box_mesh


def _golden_grid():
    labels = np.zeros((2, 2, 1), dtype=np.uint8)
    labels[1, 0, 0] = 1
    labels[0, 1, 0] = 2
    labels[1, 1, 0] = 2
    return SemanticGrid(GridFrame((0.5, -0.25, 0.0), 0.005, (2, 2, 1)), labels)


def _golden_occ_bytes():
    # x-fastest order: [0, 1, 2, 2] -> runs (0,1) (1,1) (2,2)
    head = b"FBOC" + struct.pack("<H", 1) + struct.pack("<3I", 2, 2, 1)
    head += struct.pack("<d", 0.005) + struct.pack("<3d", 0.5, -0.25, 0.0)
    runs = b"".join(struct.pack("<BI", lab, n) for lab, n in ((0, 1), (1, 1), (2, 2)))
    return head + runs


def test_occupancy_golden_bytes():
    data = dataset_io.occupancy_bytes(_golden_grid())
    assert data == _golden_occ_bytes()
    assert len(data) == 50 + 15
    assert dataset_io.read_occupancy(data) == _golden_grid()


def test_depth_golden_bytes():
    d = DepthMap(np.array([[0.5, -1.0], [1.25, 2.0]], np.float32), np.array([[True, False], [True, True]]))
    want = b"FBDP" + struct.pack("<IIH", 2, 2, 0) + struct.pack("<4f", 0.5, -1.0, 1.25, 2.0)
    assert dataset_io.depth_bytes(d) == want
    back = dataset_io.read_depth(want)
    assert np.array_equal(back.values, d.values) and np.array_equal(back.valid, d.valid)


def test_occupancy_round_trip_random():
    rng = np.random.default_rng(0)
    for _ in range(50):
        dims = tuple(int(v) for v in rng.integers(1, 12, 3))
        labels = rng.integers(0, 4, dims).astype(np.uint8)
        if rng.random() < 0.5:
            labels[labels == 3] = 0
        g = SemanticGrid(GridFrame(tuple(rng.normal(size=3)), 0.005, dims), labels)
        data = dataset_io.occupancy_bytes(g)
        back = dataset_io.read_occupancy(data)
        assert back == g
        assert dataset_io.occupancy_bytes(back) == data


def test_file_and_stream_sinks(tmp_path):
    g = _golden_grid()
    p = tmp_path / "sub" / "g.fboc"
    n = dataset_io.write_occupancy(g, p)
    assert p.read_bytes() == _golden_occ_bytes() and n == len(_golden_occ_bytes())
    buf = io.BytesIO()
    dataset_io.write_occupancy(g, buf)
    assert buf.getvalue() == p.read_bytes()
    assert not list(p.parent.glob("*.tmp*"))


@pytest.mark.parametrize(
    "mutate,offset,needle",
    [
        (lambda b: b"XBOC" + b[4:], 0, "magic"),
        (lambda b: b[:4] + struct.pack("<H", 9) + b[6:], 4, "version"),
        (lambda b: b[:6] + struct.pack("<I", 0) + b[10:], 6, "dims"),
        (lambda b: b[:18] + struct.pack("<d", -1.0) + b[26:], 18, "resolution"),
        (lambda b: b[:30], 30, "truncated header"),
        (lambda b: b[:-2], 60, "truncated run"),
        (lambda b: b[:55] + struct.pack("<BI", 7, 1) + b[60:], 55, "label 7"),
        (lambda b: b[:55] + struct.pack("<BI", 1, 0) + b[60:], 56, "zero-length"),
        (lambda b: b[:60] + struct.pack("<BI", 2, 5), 61, "overflow"),
        (lambda b: b[:60] + struct.pack("<BI", 2, 1), 65, "cover"),
    ],
)
def test_occupancy_corruption_offsets(mutate, offset, needle):
    bad = mutate(_golden_occ_bytes())
    with pytest.raises(FormatError) as exc:
        dataset_io.read_occupancy(bad)
    assert exc.value.offset == offset
    assert needle in str(exc.value)


@pytest.mark.parametrize(
    "mutate,offset",
    [
        (lambda b: b"FBDX" + b[4:], 0),
        (lambda b: b[:12] + struct.pack("<H", 3) + b[14:], 12),
        (lambda b: b[:4] + struct.pack("<I", 0) + b[8:], 4),
        (lambda b: b[:20], 20),
        (lambda b: b + b"\0\0\0\0", 30),
        (lambda b: b[:10], 10),
    ],
)
def test_depth_corruption_offsets(mutate, offset):
    good = b"FBDP" + struct.pack("<IIH", 2, 2, 1) + struct.pack("<4f", 0.0, 0.5, -1.0, 0.9)
    with pytest.raises(FormatError) as exc:
        dataset_io.read_depth(mutate(good))
    assert exc.value.offset == offset


def test_scene_round_trip_is_byte_identical():
    cfg = GenConfig(n_scenes=5, seed=1)
    for i in range(5):
        s = generate_scene(cfg, i)
        data = dataset_io.scene_bytes(s)
        back = dataset_io.read_scene(data)
        assert dataset_io.scene_bytes(back) == data
        assert back.target.pose == s.target.pose


def test_scene_strict_and_lax():
    s = generate_scene(GenConfig(n_scenes=1, seed=1), 0)
    doc = dataset_io.scene_to_json(s)
    doc["note"] = "extra"
    doc["placements"][0]["color"] = "red"
    raw = json.dumps(doc).encode()
    with pytest.raises(SceneValidationError):
        dataset_io.read_scene(raw)
    lax = dataset_io.read_scene(raw, strict=False)
    assert lax.extras == {"note": "extra"}
    assert lax.placements[0].extras == {"color": "red"}
    again = json.loads(dataset_io.scene_bytes(lax))
    assert again["note"] == "extra" and again["placements"][0]["color"] == "red"


def test_scene_errors():
    with pytest.raises(FormatError) as exc:
        dataset_io.read_scene(b'{"format": "clutterbench.scene",, }')
    assert exc.value.offset == 32
    with pytest.raises(FormatError) as exc:
        dataset_io.read_scene('{"scene_id": "é",, }'.encode())
    assert exc.value.offset == 18
    with pytest.raises(FormatError) as exc:
        dataset_io.read_scene(b'{"a": "\xff"}')
    assert exc.value.offset == 7
    s = generate_scene(GenConfig(n_scenes=1, seed=1), 0)
    doc = dataset_io.scene_to_json(s)
    for p in doc["placements"]:
        p["role"] = "obstacle"
    with pytest.raises(SceneValidationError):
        dataset_io.scene_from_json(doc)


def _traj(rng, n_steps=4, n_obs=2):
    def pose():
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        from scipy.spatial.transform import Rotation

        return SE3Pose(Rotation.from_quat(q).as_matrix(), rng.normal(size=3))

    steps = [
        TrajectoryStep(i, 0.02, pose(), tuple(rng.normal(size=6)), pose(), float(rng.random()),
                       float(rng.random()), tuple(pose() for _ in range(n_obs)), float(rng.random()))
        for i in range(n_steps)
    ]
    return TrajectoryLog("t0", "scene_0000000", True, steps)


def test_trajectory_round_trip():
    rng = np.random.default_rng(2)
    log = _traj(rng)
    data = dataset_io.trajectory_bytes(log)
    back = dataset_io.read_trajectory(data)
    assert dataset_io.trajectory_bytes(back) == data
    first = json.loads(data.splitlines()[1])
    assert tuple(first) == dataset_io.STEP_FIELDS


def test_trajectory_errors_carry_line_offsets():
    rng = np.random.default_rng(3)
    data = dataset_io.trajectory_bytes(_traj(rng, n_steps=3))
    lines = data.split(b"\n")
    offset2 = len(lines[0]) + 1 + len(lines[1]) + 1
    broken = b"\n".join(lines[:2] + [b"{not json"] + lines[3:])
    with pytest.raises(FormatError) as exc:
        dataset_io.read_trajectory(broken)
    assert exc.value.offset == offset2
    rec = json.loads(lines[2])
    reordered = {k: rec[k] for k in reversed(list(rec))}
    swapped = b"\n".join(lines[:2] + [json.dumps(reordered).encode()] + lines[3:])
    with pytest.raises(FormatError) as exc:
        dataset_io.read_trajectory(swapped)
    assert exc.value.offset == offset2
    with pytest.raises(FormatError) as exc:
        dataset_io.read_trajectory(b'{"kind": "step"}\n')
    assert exc.value.offset == 0
    with pytest.raises(FormatError) as exc:
        dataset_io.read_trajectory(data[:5] + b"\xfe" + data[6:])
    assert exc.value.offset == 5


def test_manifest_digest_and_verification(tmp_path):
    (tmp_path / "scenes").mkdir()
    (tmp_path / "scenes" / "a.json").write_bytes(b"alpha")
    entry = {"scene_id": "a", "status": "ok", "scene_path": "scenes/a.json"}
    want = hashlib.sha256()
    want.update(b"scenes/a.json\0" + hashlib.sha256(b"alpha").hexdigest().encode() + b"\n")
    cd = dataset_io.content_digest(tmp_path, ["scenes/a.json"])
    assert cd == want.hexdigest()
    m = dataset_io.DatasetManifest("cfg", [entry], cd, seed=3)
    digest = dataset_io.write_manifest(tmp_path, m)
    assert digest == hashlib.sha256((tmp_path / "manifest.json").read_bytes()).hexdigest()
    assert dataset_io.verify_manifest(tmp_path)
    (tmp_path / "scenes" / "a.json").write_bytes(b"beta")
    assert not dataset_io.verify_manifest(tmp_path)
    assert dataset_io.read_manifest(tmp_path).seed == 3


def test_missing_manifest(tmp_path):
    with pytest.raises(FileNotFoundError):
        dataset_io.read_manifest(tmp_path)


def test_mesh_round_trip_and_errors():
    v, f = box_mesh((0.01, 0.02, 0.03))
    buf = io.BytesIO()
    dataset_io.write_mesh(v, f, buf)
    v2, f2 = dataset_io.read_mesh(buf.getvalue())
    assert np.array_equal(v, v2) and np.array_equal(f, f2)
    with pytest.raises(FormatError):
        dataset_io.read_mesh(b"PLY\n")
    with pytest.raises(FormatError):
        dataset_io.read_mesh(b"OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n4 0 1 2 3\n")
