"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import contextlib
import hashlib
import json
import math
import struct
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from clutterbench import dataset_io
from clutterbench.dataset_io import FormatError, TrajectoryLog
from clutterbench.impact_metrics import (
    RewardConfig,
    TrajectoryStep,
    curriculum_schedule,
    episode_impact,
    reward_action_range,
    reward_action_rate,
    reward_env,
    reward_penetration,
    reward_pose,
    reward_target_move,
    straight_line_plans,
    sweep_extract,
)
from clutterbench.scene import Container, Placement, SceneSpec, SemanticGrid
from clutterbench.scene_gen import DEFAULT_ASSETS, GenConfig, batch_generate, generate_with_labels
from clutterbench.view_render import CameraModel, DepthMap, RoiSpec, cast_rays, occlusion_rate, occlusion_rate_of, raycast_depth, roi_frame
from clutterbench.voxel_core import (
    GridFrame,
    SE3Pose,
    VoxelGrid,
    collides,
    complement,
    difference,
    intersect,
    iou,
    place,
    transform,
    union,
)
from clutterbench.voxelizer import ObjectAsset, voxelize_asset, voxelize_box, voxelize_cylinder

import conftest
from oracles import (
    audit_scene,
    first_hit_columns,
    mp_action_range,
    mp_action_rate,
    mp_env,
    mp_penetration,
    mp_pose,
    mp_target_move,
    overlap_loop,
    sampled_first_hit,
    slab_first_hit,
)

RES = 0.005


@contextlib.contextmanager
def criterion(n, title):
    detail = {}
    try:
        yield detail
    except BaseException:
        line = f"criterion {n:2d} FAIL  {title}  {detail.get('msg', '')}".rstrip()
        conftest.CRITERIA_RESULTS[n] = line
        print(line)
        raise
    line = f"criterion {n:2d} PASS  {title}  {detail.get('msg', '')}".rstrip()
    conftest.CRITERIA_RESULTS[n] = line
    print(line)


@pytest.fixture(scope="module")
def shelf_scenes():
    cfg = GenConfig(n_scenes=1000, seed=2024)
    return [generate_with_labels(cfg, i) for i in range(1000)]


# 1 ---------------------------------------------------------------------------


def test_c01_voxel_algebra_laws():
    with criterion(1, "voxel algebra laws on 1000 random grids up to 48^3") as d:
        rng = np.random.default_rng(101)
        t0 = time.perf_counter()
        n_grids = 0
        while n_grids < 1000:
            dims = tuple(int(v) for v in rng.integers(1, 49, 3))
            frame = GridFrame((0.0, 0.0, 0.0), RES, dims)
            a, b, c = (VoxelGrid(frame, rng.random(dims) < rng.uniform(0.05, 0.95)) for _ in range(3))
            n_grids += 3
            assert union(a, a) == a and intersect(a, a) == a
            assert union(a, b) == union(b, a) and intersect(a, b) == intersect(b, a)
            assert union(union(a, b), c) == union(a, union(b, c))
            assert intersect(intersect(a, b), c) == intersect(a, intersect(b, c))
            assert complement(union(a, b)) == intersect(complement(a), complement(b))
            assert complement(intersect(a, b)) == union(complement(a), complement(b))
            assert difference(a, b) == intersect(a, complement(b))
            assert complement(complement(a)) == a
        elapsed = time.perf_counter() - t0
        d["msg"] = f"{n_grids} grids in {elapsed:.2f} s"
        assert elapsed < 30.0


# 2 ---------------------------------------------------------------------------


def _random_primitive(rng):
    if rng.random() < 0.5:
        return voxelize_box(tuple(rng.uniform(0.01, 0.08, 3)), RES)
    return voxelize_cylinder(float(rng.uniform(0.008, 0.04)), float(rng.uniform(0.01, 0.08)), RES)


def test_c02_collision_oracle():
    with criterion(2, "collides() equals per-voxel loop on 1000 primitive pairs <= 32^3") as d:
        rng = np.random.default_rng(202)
        lattice = GridFrame((0.0, 0.0, 0.0), RES, (32, 32, 32))
        hits = 0
        for _ in range(1000):
            grids = []
            for _ in range(2):
                prim = _random_primitive(rng)
                pose = SE3Pose(Rotation.random(random_state=rng).as_matrix(), rng.uniform(0.02, 0.14, 3))
                placed = place(prim, pose, lattice)
                full = np.zeros(lattice.dims, dtype=bool)
                if placed is not None:
                    off = lattice.lattice_offset(placed.frame)
                    full[tuple(slice(o, o + s) for o, s in zip(off, placed.dims))] = placed.occupancy
                grids.append(VoxelGrid(lattice, full))
            a, b = grids
            rep = collides(a, b)
            count, first = overlap_loop(a.occupancy, b.occupancy)
            assert rep.overlap_voxels == count and rep.first_hit == first
            hits += count > 0
        d["msg"] = f"1000 pairs, {hits} colliding"


# 3 ---------------------------------------------------------------------------


def test_c03_transform_fidelity():
    with criterion(3, "transform fidelity") as d:
        rng = np.random.default_rng(303)
        for _ in range(200):
            frame = GridFrame(tuple(rng.integers(-10, 10, 3) * RES), RES, tuple(int(v) for v in rng.integers(1, 20, 3)))
            g = VoxelGrid(frame, rng.random(frame.dims) < 0.4)
            shift = SE3Pose.from_translation(rng.integers(-30, 30, 3) * RES)
            moved = transform(g, shift)
            assert np.array_equal(moved.occupancy, g.occupancy)
            assert transform(moved, shift.inverse(), target_frame=frame) == g
        # the rotation is the random variable; the objects are the benchmark's asset library
        library = [voxelize_asset(a, RES) for a in DEFAULT_ASSETS]
        worst = 1.0
        for k in range(1000):
            prim = library[k % len(library)]
            rv = rng.normal(size=3)
            rv *= rng.uniform(0.0, math.radians(30)) / np.linalg.norm(rv)
            p = SE3Pose(Rotation.from_rotvec(rv).as_matrix(), rng.uniform(-0.02, 0.02, 3))
            back = transform(transform(prim, p), p.inverse(), target_frame=prim.frame, allow_clip=True)
            worst = min(worst, iou(back, prim))
        d["msg"] = f"min round-trip IoU {worst:.4f} over 1000 rotations"
        assert worst >= 0.90
        for dims in [(0.04, 0.06, 0.08), (0.015, 0.05, 0.1), (0.1, 0.035, 0.02)]:
            box = voxelize_box(dims, RES)
            half = np.array(dims) / 2
            for axis in "xyz":
                for deg in (90, 180, 270):
                    r = np.round(Rotation.from_euler(axis, deg, degrees=True).as_matrix())
                    pose = SE3Pose(r, np.zeros(3))
                    corners = pose.apply(np.array([[-half[0], -half[1], 0.0], [half[0], half[1], dims[2]]]))
                    lo = corners.min(axis=0)
                    expect = voxelize_box(tuple(corners.max(axis=0) - lo), RES)
                    got = transform(box, pose, target_frame=GridFrame(tuple(lo), RES, expect.dims))
                    assert np.array_equal(got.occupancy, expect.occupancy)


# 4 ---------------------------------------------------------------------------


def test_c04_scene_validity(shelf_scenes):
    with criterion(4, "scene validity audit on 1000 shelf scenes") as d:
        bad = {}
        for scene, _ in shelf_scenes:
            problems = audit_scene(scene)
            if problems:
                bad[scene.scene_id] = problems
        unsolvable = sum(bool(s.flags["unsolvable"]) for s, _ in shelf_scenes) / len(shelf_scenes)
        d["msg"] = f"{len(bad)} invalid scenes, unsolvable rate {unsolvable:.3f}"
        assert not bad, list(bad.items())[:3]


# 5 & 6 -----------------------------------------------------------------------


def _cli_generate(out, workers):
    r = subprocess.run(
        [sys.executable, "-m", "clutterbench.cli", "generate", "--n", "100", "--seed", "42",
         "--workers", str(workers), "--out", str(out)],
        capture_output=True, text=True,
    )
    assert r.returncode == 0, r.stderr
    return r.stdout


def test_c05_determinism(tmp_path):
    with criterion(5, "generate --n 100 --seed 42, 1 vs 8 workers") as d:
        _cli_generate(tmp_path / "w1", 1)
        _cli_generate(tmp_path / "w8", 8)
        a = (tmp_path / "w1" / "manifest.json").read_bytes()
        b = (tmp_path / "w8" / "manifest.json").read_bytes()
        d["msg"] = f"digest {hashlib.sha256(a).hexdigest()[:16]} vs {hashlib.sha256(b).hexdigest()[:16]}"
        assert a == b
        assert dataset_io.verify_manifest(tmp_path / "w1") and dataset_io.verify_manifest(tmp_path / "w8")


def test_c06_throughput(tmp_path):
    with criterion(6, "single-worker shelf throughput (target 10/s, floor 5/s)") as d:
        cfg = GenConfig(n_scenes=200, seed=6)
        assert cfg.max_objects + 1 <= 10 and cfg.resolution == RES
        handle = batch_generate(cfg, tmp_path, workers=1)
        rate = handle.scenes_per_second
        d["msg"] = f"{rate:.1f} scenes/s ({'meets' if rate >= 10 else 'below'} the 10/s target)"
        assert rate >= 5.0


# 7 ---------------------------------------------------------------------------


def _box_scene(placements):
    assets = {"t": ObjectAsset("t", "box", (0.04, 0.04, 0.06)), "slab": ObjectAsset("slab", "box", (0.08, 0.01, 0.1))}
    ps = [Placement(a, SE3Pose.from_translation(t), role) for a, t, role in placements]
    return SceneSpec("s", Container("shelf", (0.3, 0.3, 0.2)), RES, ps, assets)


def test_c07_occlusion_oracle(shelf_scenes):
    with criterion(7, "occlusion rate vs column first-hit oracle on 200 scenes") as d:
        for scene, sem in shelf_scenes[:200]:
            want = first_hit_columns(sem.labels)
            assert occlusion_rate_of(sem) == want
            assert scene.occlusion_rate == want
        full = _box_scene([("t", (0.15, 0.2, 0), "target"), ("slab", (0.15, 0.1, 0), "obstacle")])
        none = _box_scene([("t", (0.15, 0.2, 0), "target"), ("slab", (0.15, 0.28, 0), "obstacle")])
        assert occlusion_rate(full) == 1.0 and occlusion_rate(none) == 0.0
        d["msg"] = "200 scenes exact, full cover 1.0, no cover 0.0"


# 8 ---------------------------------------------------------------------------


def test_c08_raycast_depth():
    with criterion(8, "raycast depth vs analytic box faces and 10k sampled rays") as d:
        rng = np.random.default_rng(808)
        frame = GridFrame((0.0, 0.0, 0.0), RES, (32, 32, 32))
        worst_box = 0.0
        for _ in range(10):
            lo_i = rng.integers(0, 14, 3)
            hi_i = lo_i + rng.integers(3, 18, 3)
            occ = np.zeros(frame.dims, dtype=bool)
            occ[lo_i[0]:hi_i[0], lo_i[1]:hi_i[1], lo_i[2]:hi_i[2]] = True
            lo, hi = lo_i * RES, hi_i * RES
            center = (lo + hi) / 2
            eye = center + rng.normal(size=3) * 0.2
            eye += (eye - center) / np.linalg.norm(eye - center) * 0.15
            cam = CameraModel.look_at(tuple(eye), tuple(center), width=32, height=24, fov_deg=50)
            depth = raycast_depth(VoxelGrid(frame, occ), cam)
            o, dirs = cam.pixel_rays()
            with np.errstate(divide="ignore", invalid="ignore"):
                t1 = (lo - o) / dirs
                t2 = (hi - o) / dirs
            tn = np.nanmax(np.minimum(t1, t2), axis=1)
            tf = np.nanmin(np.maximum(t1, t2), axis=1)
            hit = (tf >= tn) & (tf >= 0)
            v = depth.valid.ravel()
            assert np.array_equal(v, hit)
            err = np.abs(depth.values.ravel()[v] - tn[v])
            worst_box = max(worst_box, float(err.max(initial=0.0)))
        assert worst_box <= RES / 2

        occ = rng.random((24, 24, 24)) < 0.02
        grid = VoxelGrid(GridFrame((0.0, 0.0, 0.0), RES, occ.shape), occ)
        o = rng.uniform(-0.05, 0.17, (10_000, 3))
        dirs = rng.uniform(0.0, 0.12, (10_000, 3)) - o
        dirs /= np.linalg.norm(dirs, axis=1)[:, None]
        got = cast_rays(grid, o, dirs)
        bad_sample = bad_slab = refined = 0
        for k in range(len(o)):
            exact = slab_first_hit(occ, (0.0, 0.0, 0.0), RES, o[k], dirs[k])
            # grazing chords can be shorter than a coarse step; refine before calling it a disagreement
            for step in (RES / 200, RES / 2000, RES / 20000):
                sampled = sampled_first_hit(occ, (0.0, 0.0, 0.0), RES, o[k], dirs[k], step)
                agree = math.isinf(got[k]) == math.isinf(sampled) and (math.isinf(sampled) or abs(got[k] - sampled) <= RES / 2)
                if agree:
                    break
            else:
                bad_sample += 1
            refined += step < RES / 200
            if math.isinf(got[k]) != math.isinf(exact) or (not math.isinf(exact) and abs(got[k] - exact) > 1e-9):
                bad_slab += 1
        d["msg"] = (f"box max error {worst_box * 1000:.3f} mm, {bad_sample}/10000 sampler and "
                    f"{bad_slab}/10000 slab disagreements, {refined} rays needed a finer sampling step")
        assert bad_sample == 0 and bad_slab == 0


# 9 ---------------------------------------------------------------------------


def test_c09_reward_exactness():
    with criterion(9, "reward terms vs 50-digit evaluation on 10k inputs") as d:
        cfg = RewardConfig()
        assert (cfg.lambda_task, cfg.lambda_action_range, cfg.lambda_action_rate, cfg.lambda_pose) == (5.0, 1.5, 0.0001, 0.6)
        assert (cfg.lambda_penetration, cfg.lambda_target_move, cfg.lambda_trans_step, cfg.lambda_rot_step) == (9.0, 0.06, 10.0, 10.0)
        rng = np.random.default_rng(909)
        worst = 0.0
        for _ in range(10_000):
            a = rng.uniform(-5, 5, 6)
            b = rng.uniform(-1, 1, 6)
            pairs = [
                (reward_action_range(a, cfg), mp_action_range(a)),
                (reward_action_rate(a, a + b, cfg), mp_action_rate(a, a + b)),
            ]
            t0, t1 = rng.uniform(-0.5, 0.5, 3), rng.uniform(-0.5, 0.5, 3)
            pairs.append((reward_pose(SE3Pose.from_translation(t1), SE3Pose.from_translation(t0), cfg), mp_pose(t1, t0)))
            acc = float(rng.uniform(0, 20))
            pairs.append((reward_penetration(acc, cfg), mp_penetration(acc)))
            dl, dc, v, dt = rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 2), rng.uniform(0.005, 0.1)
            pairs.append((reward_target_move(dl, dc, v, dt, cfg), mp_target_move(dl, dc, v, dt)))
            mt, mr = rng.uniform(0, 0.5), rng.uniform(0, 1.0)
            pairs.append((reward_env(mt, mr, cfg), mp_env(mt, mr)))
            for got, want in pairs:
                worst = max(worst, abs(got - float(want)))
        assert cfg.sigma_trans == (0.03, 0.015, 0.01, 0.005, 0.0)
        assert cfg.sigma_rot == (0.4, 0.2, 0.16, 0.1, 0.0)
        for _ in range(200):
            hist = list(np.cumsum(rng.normal(0.002, 0.01, int(rng.integers(0, 600)))) + rng.uniform(0, 1))
            stages = curriculum_schedule(hist, cfg)
            assert all(b >= a for a, b in zip(stages, stages[1:]))
            assert all(0 <= s <= 4 for s in stages)
        d["msg"] = f"max abs error {worst:.2e}"
        assert worst <= 1e-9


# 10 --------------------------------------------------------------------------


def _episode(shift):
    o0 = SE3Pose.identity()
    o1 = SE3Pose.from_translation((shift, 0.0, 0.0))
    i = SE3Pose.identity()
    return [TrajectoryStep(k, 0.02, i, (0.0,) * 6, i, 0.0, 0.0, (o,), 0.0) for k, o in enumerate((o0, o1))]


def test_c10_success_semantics():
    with criterion(10, "success at 2.9 cm, failure at 3.1 cm") as d:
        ok = episode_impact(_episode(0.029), fetched=True)
        ko = episode_impact(_episode(0.031), fetched=True)
        d["msg"] = f"m_trans {ok.m_trans:.3f} -> {ok.success}, {ko.m_trans:.3f} -> {ko.success}"
        assert ok.success and not ko.success


# 11 --------------------------------------------------------------------------


def test_c11_roi_contract():
    with criterion(11, "ROI crop dimensions") as d:
        lattice = GridFrame((0.0, 0.0, 0.0), RES, (10, 10, 10))
        got = [roi_frame(lattice, RoiSpec((0.1, 0.1, 0.1), e)).dims
               for e in ((0.20, 0.20, 0.30), (0.40, 0.80, 0.30), (0.60, 1.50, 0.30))]
        assert roi_frame(lattice, RoiSpec((0.1, 0.1, 0.1))).dims == (40, 40, 60)
        d["msg"] = " ".join("x".join(map(str, g)) for g in got)
        assert got == [(40, 40, 60), (80, 160, 60), (120, 300, 60)]


# 12 --------------------------------------------------------------------------


def _random_pose(rng):
    return SE3Pose(Rotation.random(random_state=rng).as_matrix(), rng.normal(size=3))


def _golden_scene():
    assets = {"b": ObjectAsset("b", "box", (0.02, 0.02, 0.02))}
    return SceneSpec("g", Container("shelf", (0.1, 0.1, 0.1)), 0.005,
                     [Placement("b", SE3Pose.from_translation((0.05, 0.05, 0.0)), "target")], assets)


GOLDEN_SCENE = """{
 "assets": {
  "b": {
   "params": [
    0.02,
    0.02,
    0.02
   ],
   "roles": [
    "target",
    "obstacle"
   ],
   "shape": "box"
  }
 },
 "container": {
  "interior": [
   0.1,
   0.1,
   0.1
  ],
  "kind": "shelf"
 },
 "difficulty_level": 1,
 "flags": {},
 "format": "clutterbench.scene",
 "occlusion_rate": 0.0,
 "placements": [
  {
   "asset_id": "b",
   "role": "target",
   "rotation": [
    [
     1.0,
     0.0,
     0.0
    ],
    [
     0.0,
     1.0,
     0.0
    ],
    [
     0.0,
     0.0,
     1.0
    ]
   ],
   "translation": [
    0.05,
    0.05,
    0.0
   ]
  }
 ],
 "resolution": 0.005,
 "scene_id": "g",
 "seed": 0,
 "version": 1
}
"""

POSE_I = '{"rotation": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], "translation": [0.0, 0.0, 0.0]}'
GOLDEN_TRAJ = (
    '{"kind": "header", "trajectory_id": "g", "scene_id": "s", "fetched": true}\n'
    '{"index": 0, "dt": 0.5, "ee_pose": ' + POSE_I + ', "action": [1.0, -2.0], "target_pose": ' + POSE_I
    + ', "target_speed": 0.25, "target_accel": 0.0, "obstacle_poses": [], "goal_distance": 1.5}\n'
)


def test_c12_serialization(shelf_scenes):
    with criterion(12, "serialization round trips, golden bytes, corruption offsets") as d:
        rng = np.random.default_rng(1212)
        for _ in range(1000):
            dims = tuple(int(v) for v in rng.integers(1, 16, 3))
            g = SemanticGrid(GridFrame(tuple(rng.normal(size=3)), float(rng.uniform(0.001, 0.02)), dims),
                             rng.integers(0, 4, dims).astype(np.uint8))
            data = dataset_io.occupancy_bytes(g)
            back = dataset_io.read_occupancy(data)
            assert back == g and dataset_io.occupancy_bytes(back) == data

            h, w = (int(v) for v in rng.integers(1, 20, 2))
            valid = rng.random((h, w)) < 0.7
            vals = np.where(valid, rng.uniform(0, 3, (h, w)), -1.0).astype(np.float32)
            dm = DepthMap(vals, valid)
            data = dataset_io.depth_bytes(dm)
            back = dataset_io.read_depth(data)
            assert np.array_equal(back.values, dm.values) and np.array_equal(back.valid, dm.valid)
            assert dataset_io.depth_bytes(back) == data

            steps = [TrajectoryStep(i, float(rng.uniform(0.001, 0.1)), _random_pose(rng), tuple(rng.normal(size=6)),
                                    _random_pose(rng), float(rng.random()), float(rng.random()),
                                    tuple(_random_pose(rng) for _ in range(int(rng.integers(0, 4)))), float(rng.random()))
                     for i in range(int(rng.integers(0, 5)))]
            if steps:
                n_obs = len(steps[0].obstacle_poses)
                steps = [TrajectoryStep(s.index, s.dt, s.ee_pose, s.action, s.target_pose, s.target_speed,
                                        s.target_accel, steps[0].obstacle_poses[:n_obs], s.goal_distance) for s in steps]
            log = TrajectoryLog(f"t{_}", "scene_0000000", bool(rng.random() < 0.5), steps)
            data = dataset_io.trajectory_bytes(log)
            assert dataset_io.trajectory_bytes(dataset_io.read_trajectory(data)) == data
        for scene, _ in shelf_scenes:
            data = dataset_io.scene_bytes(scene)
            assert dataset_io.scene_bytes(dataset_io.read_scene(data)) == data

        # golden bytes for all four formats
        labels = np.zeros((2, 2, 1), dtype=np.uint8)
        labels[1, 0, 0] = 1
        labels[0, 1, 0], labels[1, 1, 0] = 2, 2
        occ_gold = (b"FBOC" + struct.pack("<H3Id3d", 1, 2, 2, 1, 0.005, 0.5, -0.25, 0.0)
                    + struct.pack("<BI", 0, 1) + struct.pack("<BI", 1, 1) + struct.pack("<BI", 2, 2))
        assert dataset_io.occupancy_bytes(SemanticGrid(GridFrame((0.5, -0.25, 0.0), 0.005, (2, 2, 1)), labels)) == occ_gold
        dep = DepthMap(np.array([[0.5, -1.0]], np.float32), np.array([[True, False]]))
        assert dataset_io.depth_bytes(dep) == b"FBDP" + struct.pack("<IIH", 2, 1, 0) + struct.pack("<2f", 0.5, -1.0)
        assert dataset_io.scene_bytes(_golden_scene()) == GOLDEN_SCENE.encode()
        gold_log = TrajectoryLog("g", "s", True, [TrajectoryStep(0, 0.5, SE3Pose.identity(), (1.0, -2.0),
                                                                 SE3Pose.identity(), 0.25, 0.0, (), 1.5)])
        assert dataset_io.trajectory_bytes(gold_log) == GOLDEN_TRAJ.encode()

        # corrupted fixtures report byte offsets
        cases = [
            (dataset_io.read_occupancy, b"XBOC" + occ_gold[4:], 0),
            (dataset_io.read_occupancy, occ_gold[:30], 30),
            (dataset_io.read_occupancy, occ_gold[:55] + struct.pack("<BI", 9, 1) + occ_gold[60:], 55),
            (dataset_io.read_depth, b"FBDP" + struct.pack("<IIH", 2, 1, 0) + b"\0\0\0", 17),
            (dataset_io.read_scene, b'{"format": 1,, }', 13),
            (dataset_io.read_trajectory, GOLDEN_TRAJ.encode() + b"{oops\n", len(GOLDEN_TRAJ.encode())),
        ]
        for reader, blob, offset in cases:
            with pytest.raises(FormatError) as exc:
                reader(blob)
            assert exc.value.offset == offset, (reader.__name__, exc.value)
        d["msg"] = "4 formats x 1000 trials, 4 golden files, 6 corruption offsets"


# 13 --------------------------------------------------------------------------


def test_c13_baseline_ordering():
    with criterion(13, "lift-then-extract contacts fewer obstacles than direct pull") as d:
        t = SE3Pose.from_translation
        assets = {
            "target": ObjectAsset("target", "box", (0.05, 0.05, 0.08)),
            "wall": ObjectAsset("wall", "box", (0.12, 0.02, 0.10)),
            "side": ObjectAsset("side", "box", (0.03, 0.05, 0.08)),
        }
        ps = [Placement("target", t((0.2, 0.2, 0)), "target"), Placement("wall", t((0.2, 0.1, 0)), "obstacle"),
              Placement("side", t((0.3, 0.2, 0)), "obstacle")]
        scene = SceneSpec("blocked", Container("shelf", (0.4, 0.3, 0.3)), RES, ps, assets)
        plans = straight_line_plans(scene)
        direct = sweep_extract(scene, plans["direct_pull"]).contacted
        lift = sweep_extract(scene, plans["lift_then_extract"]).contacted
        d["msg"] = f"direct_pull {direct}, lift_then_extract {lift}"
        assert lift < direct
