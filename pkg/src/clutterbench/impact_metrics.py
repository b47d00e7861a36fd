"""Obstacle displacement metrics, fetch reward terms, σ curriculum, swept-volume baselines."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from .scene import SceneSpec, placed_grid
from .voxel_core import SE3Pose, VoxelGrid, place, window_of

GRAVITY = 9.81
SUCCESS_THRESHOLD = 0.03  # m, total obstacle translation per episode

SIGMA_TRANS = (0.03, 0.015, 0.01, 0.005, 0.0)
SIGMA_ROT = (0.4, 0.2, 0.16, 0.1, 0.0)


@dataclass(frozen=True)
class RewardConfig:
    lambda_task: float = 5.0
    lambda_action_range: float = 1.5
    lambda_action_rate: float = 0.0001
    lambda_pose: float = 0.6
    lambda_penetration: float = 9.0
    lambda_target_move: float = 0.06
    lambda_trans_step: float = 10.0
    lambda_rot_step: float = 10.0
    sigma_trans: Tuple[float, ...] = SIGMA_TRANS
    sigma_rot: Tuple[float, ...] = SIGMA_ROT
    stage: int = 0
    action_limit: float = 3.0
    accel_gain: float = 1.0 / GRAVITY
    baseline_shift: bool = False
    # curriculum plateau detection
    window: int = 50
    plateau_threshold: float = 0.01
    competence_floor: float = 0.5

    def __post_init__(self) -> None:
        object.__setattr__(self, "sigma_trans", tuple(float(s) for s in self.sigma_trans))
        object.__setattr__(self, "sigma_rot", tuple(float(s) for s in self.sigma_rot))
        for name in ("sigma_trans", "sigma_rot"):
            seq = getattr(self, name)
            if not seq:
                raise ValueError(f"{name} schedule is empty")
            if any(b >= a for a, b in zip(seq, seq[1:])):
                raise ValueError(f"{name} schedule must be strictly decreasing: {seq}")
        if len(self.sigma_trans) != len(self.sigma_rot):
            raise ValueError("sigma schedules must have the same length")
        if not 0 <= self.stage < len(self.sigma_trans):
            raise ValueError(f"stage {self.stage} outside schedule of length {len(self.sigma_trans)}")
        if self.window < 2:
            raise ValueError("curriculum window must be at least 2")

    @property
    def final_stage(self) -> int:
        return len(self.sigma_trans) - 1


@dataclass(frozen=True)
class TrajectoryStep:
    index: int
    dt: float
    ee_pose: SE3Pose
    action: Tuple[float, ...]
    target_pose: SE3Pose
    target_speed: float
    target_accel: float
    obstacle_poses: Tuple[SE3Pose, ...]
    goal_distance: float

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "action", tuple(float(a) for a in self.action))
        object.__setattr__(self, "obstacle_poses", tuple(self.obstacle_poses))


@dataclass
class ImpactReport:
    obstacle_translation: List[float]
    obstacle_rotation: List[float]
    m_trans: float
    m_rot: float
    m_trans_step: List[float]
    m_rot_step: List[float]
    fetched: bool
    success: bool


# ---------------------------------------------------------------------------
# displacement
# ---------------------------------------------------------------------------


def rotation_geodesic(a: SE3Pose, b: SE3Pose) -> float:
    """Angle of the relative rotation ``Raᵀ Rb`` in [0, π]."""
    c = (np.trace(a.rotation.T @ b.rotation) - 1.0) / 2.0
    return math.acos(min(1.0, max(-1.0, float(c))))


def _per_obstacle(prev: TrajectoryStep, cur: TrajectoryStep) -> Tuple[List[float], List[float]]:
    if len(prev.obstacle_poses) != len(cur.obstacle_poses):
        raise ValueError(
            f"obstacle count changed between steps {prev.index} and {cur.index}: "
            f"{len(prev.obstacle_poses)} vs {len(cur.obstacle_poses)}"
        )
    trans = [float(np.linalg.norm(q.translation - p.translation)) for p, q in zip(prev.obstacle_poses, cur.obstacle_poses)]
    rot = [rotation_geodesic(p, q) for p, q in zip(prev.obstacle_poses, cur.obstacle_poses)]
    return trans, rot


def step_displacement(prev: TrajectoryStep, cur: TrajectoryStep) -> Tuple[float, float]:
    """Summed obstacle translation and rotation between two consecutive steps."""
    trans, rot = _per_obstacle(prev, cur)
    return math.fsum(trans), math.fsum(rot)


def task_success(fetched: bool, m_trans: float, m_rot: float, sigma_trans: float, sigma_rot: Optional[float]) -> bool:
    """``m < σ`` per metric; a zero threshold demands exactly zero disturbance."""

    def under(m: float, sigma: float) -> bool:
        return m == 0.0 if sigma == 0.0 else m < sigma

    if not fetched:
        return False
    if not under(m_trans, sigma_trans):
        return False
    return sigma_rot is None or under(m_rot, sigma_rot)


def episode_impact(
    traj: Sequence[TrajectoryStep],
    fetched: bool,
    threshold: float = SUCCESS_THRESHOLD,
    rot_threshold: Optional[float] = None,
) -> ImpactReport:
    """Accumulate obstacle disturbance over an episode and classify success."""
    if not traj:
        raise ValueError("trajectory is empty")
    n = len(traj[0].obstacle_poses)
    per_t = [0.0] * n
    per_r = [0.0] * n
    series_t: List[float] = []
    series_r: List[float] = []
    for prev, cur in zip(traj, traj[1:]):
        trans, rot = _per_obstacle(prev, cur)
        for i in range(n):
            per_t[i] += trans[i]
            per_r[i] += rot[i]
        series_t.append(math.fsum(trans))
        series_r.append(math.fsum(rot))
    m_trans = math.fsum(series_t)
    m_rot = math.fsum(series_r)
    return ImpactReport(
        obstacle_translation=per_t,
        obstacle_rotation=per_r,
        m_trans=m_trans,
        m_rot=m_rot,
        m_trans_step=series_t,
        m_rot_step=series_r,
        fetched=bool(fetched),
        success=task_success(fetched, m_trans, m_rot, threshold, rot_threshold),
    )


# ---------------------------------------------------------------------------
# reward terms
# ---------------------------------------------------------------------------


def _penalty(weight: float, x2: float, cfg: RewardConfig) -> float:
    # literal form is -λ·exp(x²); baseline_shift removes the -λ offset at x = 0
    if cfg.baseline_shift:
        return -weight * math.expm1(x2)
    return -weight * math.exp(x2)


def reward_action_range(a: Sequence[float], cfg: RewardConfig = RewardConfig()) -> float:
    """Per-component penalty for action entries beyond ``±action_limit``."""
    terms = [
        -cfg.lambda_action_range * math.exp((abs(x) - cfg.action_limit) ** 2)
        for x in a
        if abs(x) > cfg.action_limit
    ]
    return math.fsum(terms)


def reward_action_rate(a_last: Sequence[float], a_current: Sequence[float], cfg: RewardConfig = RewardConfig()) -> float:
    diff = np.asarray(a_last, dtype=np.float64) - np.asarray(a_current, dtype=np.float64)
    return _penalty(cfg.lambda_action_rate, float(diff @ diff), cfg)


def reward_pose(p_curr: SE3Pose, p_init: SE3Pose, cfg: RewardConfig = RewardConfig()) -> float:
    """Penalty on the target's translational drift from its initial pose."""
    diff = p_curr.translation - p_init.translation
    return _penalty(cfg.lambda_pose, float(diff @ diff), cfg)


def reward_penetration(a_ccel: float, cfg: RewardConfig = RewardConfig()) -> float:
    if a_ccel < 0:
        raise ValueError(f"acceleration magnitude must be non-negative, got {a_ccel}")
    scaled = a_ccel * cfg.accel_gain
    return _penalty(cfg.lambda_penetration, scaled * scaled, cfg)


def reward_target_move(d_last: float, d_curr: float, v: float, dt: float, cfg: RewardConfig = RewardConfig()) -> float:
    """Goal progress normalized by the distance the target could cover this step."""
    if v < 0:
        raise ValueError("speed must be non-negative")
    if not dt > 0:
        raise ValueError("dt must be positive")
    travel = v * dt
    if travel == 0:
        return 0.0
    return cfg.lambda_target_move * (d_last - d_curr) / travel


def reward_env(m_trans_step: float, m_rot_step: float, cfg: RewardConfig = RewardConfig()) -> float:
    return _penalty(cfg.lambda_trans_step, m_trans_step * m_trans_step, cfg) + _penalty(
        cfg.lambda_rot_step, m_rot_step * m_rot_step, cfg
    )


def reward_task(fetched: bool, m_trans: float, m_rot: float, cfg: RewardConfig = RewardConfig()) -> float:
    ok = task_success(fetched, m_trans, m_rot, cfg.sigma_trans[cfg.stage], cfg.sigma_rot[cfg.stage])
    return cfg.lambda_task if ok else 0.0


@dataclass(frozen=True)
class StepContext:
    """Everything one reward evaluation needs.

    ``fetched`` only matters on terminal steps, where ``m_trans``/``m_rot``
    are the episode totals.
    """

    action: Sequence[float]
    last_action: Sequence[float]
    target_pose: SE3Pose
    initial_target_pose: SE3Pose
    target_accel: float
    d_last: float
    d_curr: float
    target_speed: float
    dt: float
    m_trans_step: float
    m_rot_step: float
    terminal: bool = False
    fetched: bool = False
    m_trans: float = 0.0
    m_rot: float = 0.0


REWARD_TERMS = (
    "task", "action_range", "action_rate", "pose", "penetration", "target_move", "trans_step", "rot_step",
)


def reward_terms(ctx: StepContext, cfg: RewardConfig = RewardConfig()) -> Dict[str, float]:
    return {
        "task": reward_task(ctx.fetched, ctx.m_trans, ctx.m_rot, cfg) if ctx.terminal else 0.0,
        "action_range": reward_action_range(ctx.action, cfg),
        "action_rate": reward_action_rate(ctx.last_action, ctx.action, cfg),
        "pose": reward_pose(ctx.target_pose, ctx.initial_target_pose, cfg),
        "penetration": reward_penetration(ctx.target_accel, cfg),
        "target_move": reward_target_move(ctx.d_last, ctx.d_curr, ctx.target_speed, ctx.dt, cfg),
        "trans_step": _penalty(cfg.lambda_trans_step, ctx.m_trans_step**2, cfg),
        "rot_step": _penalty(cfg.lambda_rot_step, ctx.m_rot_step**2, cfg),
    }


def total_reward(ctx: StepContext, cfg: RewardConfig = RewardConfig()) -> Tuple[float, Dict[str, float]]:
    """Plain sum of all terms, returned with the per-term breakdown."""
    terms = reward_terms(ctx, cfg)
    return sum(terms[k] for k in REWARD_TERMS), terms


def trajectory_rewards(
    traj: Sequence[TrajectoryStep],
    fetched: bool,
    cfg: RewardConfig = RewardConfig(),
) -> Dict[str, float]:
    """Per-term reward sums over a logged trajectory (first step has no predecessor)."""
    sums = {k: 0.0 for k in REWARD_TERMS}
    if len(traj) < 2:
        return sums
    m_trans = m_rot = 0.0
    init = traj[0].target_pose
    for i in range(1, len(traj)):
        prev, cur = traj[i - 1], traj[i]
        mt, mr = step_displacement(prev, cur)
        m_trans += mt
        m_rot += mr
        ctx = StepContext(
            action=cur.action,
            last_action=prev.action,
            target_pose=cur.target_pose,
            initial_target_pose=init,
            target_accel=cur.target_accel,
            d_last=prev.goal_distance,
            d_curr=cur.goal_distance,
            target_speed=cur.target_speed,
            dt=cur.dt,
            m_trans_step=mt,
            m_rot_step=mr,
            terminal=i == len(traj) - 1,
            fetched=fetched,
            m_trans=m_trans,
            m_rot=m_rot,
        )
        for k, v in reward_terms(ctx, cfg).items():
            sums[k] += v
    return sums


# ---------------------------------------------------------------------------
# curriculum
# ---------------------------------------------------------------------------


def plateaued(window: Sequence[float], cfg: RewardConfig) -> bool:
    """Improvement (second-half mean minus first-half mean) below threshold, above the floor."""
    w = np.asarray(window, dtype=np.float64)
    half = len(w) // 2
    improvement = w[half:].mean() - w[:half].mean()
    return bool(improvement < cfg.plateau_threshold and w.mean() >= cfg.competence_floor)


def curriculum_stage(history: Sequence[float], cfg: RewardConfig = RewardConfig()) -> int:
    """Next stage given success rates recorded since the current stage began."""
    if cfg.stage >= cfg.final_stage or len(history) < cfg.window:
        return cfg.stage
    if plateaued(history[-cfg.window :], cfg):
        return cfg.stage + 1
    return cfg.stage


def curriculum_schedule(history: Sequence[float], cfg: RewardConfig = RewardConfig()) -> List[int]:
    """Stage in force after each entry of ``history``; the window restarts on every advance."""
    stages = []
    stage = cfg.stage
    start = 0
    for i in range(len(history)):
        nxt = curriculum_stage(history[start : i + 1], replace(cfg, stage=stage))
        if nxt != stage:
            stage = nxt
            start = i + 1
        stages.append(stage)
    return stages


# ---------------------------------------------------------------------------
# swept-volume evaluation of straight-line heuristics
# ---------------------------------------------------------------------------


@dataclass
class ContactReport:
    overlaps: List[int]
    first_contact_segment: Optional[int]
    swept_voxels: int
    segment_overlaps: List[int] = field(default_factory=list)

    @property
    def contacted(self) -> int:
        return sum(1 for n in self.overlaps if n > 0)

    @property
    def collision_free(self) -> bool:
        return self.first_contact_segment is None


def _segment_samples(a: SE3Pose, b: SE3Pose, radius: float, step: float) -> int:
    """Number of intervals so no body point moves more than ``step`` between samples."""
    travel = float(np.linalg.norm(b.translation - a.translation)) + rotation_geodesic(a, b) * radius
    return max(1, int(math.ceil(travel / step)))


def _interpolate(a: SE3Pose, b: SE3Pose, fractions: np.ndarray) -> List[SE3Pose]:
    if rotation_geodesic(a, b) == 0.0:
        rots = [a.rotation] * len(fractions)
    else:
        slerp = Slerp([0.0, 1.0], Rotation.from_matrix(np.stack([a.rotation, b.rotation])))
        rots = [r for r in slerp(fractions).as_matrix()]
    return [
        SE3Pose(r, (1 - f) * a.translation + f * b.translation) for r, f in zip(rots, fractions)
    ]


def sweep_extract(
    scene: SceneSpec,
    waypoints: Sequence[SE3Pose],
    tool: Optional[VoxelGrid] = None,
    density: int = 1,
) -> ContactReport:
    """Count obstacle contacts of the target (plus tool) moved rigidly along waypoints.

    Waypoints are rigid motions applied to the moving body as placed in the
    scene (the first is normally the identity). Each straight segment is
    sampled so no point of the body moves more than half a voxel between
    samples; ``density`` multiplies the sample count. Obstacles stay put.
    """
    if len(waypoints) < 2:
        raise ValueError("need at least two waypoints")
    lengths = [
        float(np.linalg.norm(b.translation - a.translation)) + rotation_geodesic(a, b)
        for a, b in zip(waypoints, waypoints[1:])
    ]
    if sum(lengths) == 0.0:
        raise ValueError("trajectory has zero length")
    if density < 1:
        raise ValueError("density must be >= 1")
    frame = scene.frame
    res = frame.resolution

    body = np.zeros(frame.dims, dtype=bool)
    target = placed_grid(scene, scene.target)
    if target is not None:
        _or_into(body, frame, target)
    if tool is not None:
        tool_grid = place(tool, SE3Pose.identity(), frame)
        if tool_grid is not None:
            _or_into(body, frame, tool_grid)
    # moving body on a padded lattice so motion out of the container is kept
    body_grid = VoxelGrid(frame, body)
    bounds = body_grid.occupied_bounds()
    if bounds is None:
        raise ValueError("scene has no target voxels to sweep")
    lo_i, hi_i = bounds
    body_frame = frame.shifted(tuple(lo_i), tuple(hi_i - lo_i))
    body_local = window_of(body_grid, body_frame)
    # waypoints rotate about the world origin, so that is the lever arm
    centers = body_frame.centers()[body_local.occupancy]
    radius = float(np.max(np.linalg.norm(centers, axis=1))) + res

    obstacles = [placed_grid(scene, p) for p in scene.obstacles]

    swept = np.zeros(frame.dims, dtype=bool)
    first_contact: Optional[int] = None
    seg_overlaps: List[int] = []
    for s, (a, b) in enumerate(zip(waypoints, waypoints[1:])):
        n = _segment_samples(a, b, radius, res / 2) * density
        seg = np.zeros(frame.dims, dtype=bool)
        for pose in _interpolate(a, b, np.arange(n + 1) / n):
            moved = place(body_local, pose, frame)
            if moved is not None:
                _or_into(seg, frame, moved)
        seg_hits = sum(_count_overlap(seg, frame, g) for g in obstacles if g is not None)
        seg_overlaps.append(seg_hits)
        if seg_hits and first_contact is None:
            first_contact = s
        swept |= seg
    overlaps = [0 if g is None else _count_overlap(swept, frame, g) for g in obstacles]
    return ContactReport(overlaps, first_contact, int(np.count_nonzero(swept)), seg_overlaps)


def _or_into(dst: np.ndarray, frame, grid: VoxelGrid) -> None:
    off = frame.lattice_offset(grid.frame)
    sl = tuple(slice(o, o + d) for o, d in zip(off, grid.dims))
    dst[sl] |= grid.occupancy


def _count_overlap(mask: np.ndarray, frame, grid: VoxelGrid) -> int:
    off = frame.lattice_offset(grid.frame)
    sl = tuple(slice(o, o + d) for o, d in zip(off, grid.dims))
    return int(np.count_nonzero(mask[sl] & grid.occupancy))


def straight_line_plans(scene: SceneSpec, lift: Optional[float] = None, pull: Optional[float] = None) -> Dict[str, List[SE3Pose]]:
    """Waypoints for the two heuristic baselines: direct pull and lift-then-extract.

    ``pull`` defaults to the container depth plus a margin, which clears
    the opening (-y). ``lift`` defaults to the headroom above the target.
    """
    frame = scene.frame
    depth = frame.upper[1] - frame.origin[1]
    pull = depth + 0.05 if pull is None else pull
    if lift is None:
        target = placed_grid(scene, scene.target)
        top = target.frame.origin[2] + (target.occupied_bounds()[1][2]) * frame.resolution
        lift = max(0.0, frame.upper[2] - top - frame.resolution / 2)
    ident = SE3Pose.identity()
    return {
        "direct_pull": [ident, SE3Pose.from_translation((0.0, -pull, 0.0))],
        "lift_then_extract": [
            ident,
            SE3Pose.from_translation((0.0, 0.0, lift)),
            SE3Pose.from_translation((0.0, -pull, lift)),
        ],
    }
