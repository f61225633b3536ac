"""Demonstration-guided RRT-Connect planning in 6-DoF object pose space.

The outer loop first plans start -> goal directly. Whenever an attempt fails,
the next-ranked key pose is inserted into the waypoint sequence (which is
kept in demonstration-time order) and every unsolved segment is replanned.
Key poses that are in collision are replaced by the nearest collision-free
pose found by shell sampling around them.
"""

from __future__ import annotations

import bisect
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .demo import KeyPose
from .geom import RigidTransform, Scene, collisions_in_scene, edge_collides_in_scene, first_collision_in_scene, interpolate_many, pose_in_collision
from .geom.collision import slerp_into
from .geom.transform import quat_angle, quat_from_axis_angle, quat_mul, quat_conj

SUCCESS = "success"
TIMEOUT = "timeout"
EXHAUSTED = "exhausted"
INFEASIBLE = "infeasible_input"

_DEADLINE_CHECK_EVERY = 64
_DD_MAX_RESAMPLES = 100


class PlanningError(ValueError):
    pass


@dataclass(frozen=True)
class PlannerConfig:
    t_e: float = 5.0  # seconds per segment
    step_size: tuple[float, float] = (0.02, 0.2)  # meters, radians
    rotation_weight: float = 0.1  # meters per radian
    goal_bias: float = 0.1
    max_key_poses: int = 6
    # None selects 10x the composite step; 0 disables
    dynamic_domain_radius: float | None = None
    validation_resolution: float = 0.002
    rng_seed: int = 0
    repair_samples_max: int = 2000
    repair_radius_schedule: tuple[float, ...] = (0.005, 0.01, 0.02, 0.04)
    # per-segment iteration budget; 0 leaves only the deadline
    max_iterations: int = 6000
    smoothing_attempts: int = 200
    sampling_bounds: tuple[tuple[float, float, float], tuple[float, float, float]] | None = None

    def __post_init__(self) -> None:
        step_m, step_rad = self.step_size
        if not self.t_e > 0:
            raise PlanningError("t_e must be positive")
        if not 0.0 <= self.goal_bias <= 1.0:
            raise PlanningError("goal_bias must be in [0, 1]")
        if not (step_m > 0 and step_rad > 0):
            raise PlanningError("step sizes must be positive")
        if not 0 < self.validation_resolution <= min(step_m, step_rad):
            raise PlanningError("validation_resolution must be positive and no larger than the smallest step")
        if not self.rotation_weight > 0:
            raise PlanningError("rotation_weight must be positive")
        if self.dynamic_domain_radius is not None and self.dynamic_domain_radius < 0:
            raise PlanningError("dynamic_domain_radius must be >= 0")
        if any(b <= a for a, b in zip(self.repair_radius_schedule, self.repair_radius_schedule[1:])):
            raise PlanningError("repair_radius_schedule must be increasing")

    @property
    def composite_step(self) -> float:
        return self.step_size[0] + self.rotation_weight * self.step_size[1]

    @property
    def domain_radius(self) -> float:
        if self.dynamic_domain_radius is None:
            return 10.0 * self.composite_step
        return self.dynamic_domain_radius


def composite_distance(a: RigidTransform, b: RigidTransform, rotation_weight: float) -> float:
    """Translation distance plus ``rotation_weight`` times the geodesic rotation angle."""
    if rotation_weight <= 0:
        raise PlanningError("rotation_weight must be positive")
    dq = quat_mul(quat_conj(a.rotation), b.rotation)
    return float(np.linalg.norm(a.translation - b.translation)) + rotation_weight * quat_angle(dq)


@dataclass
class ObjectPath:
    waypoints: list[RigidTransform]
    tags: list[str]

    def __post_init__(self) -> None:
        if len(self.waypoints) != len(self.tags):
            raise PlanningError("one provenance tag per waypoint")

    def __len__(self) -> int:
        return len(self.waypoints)


@dataclass(frozen=True)
class SegmentResult:
    status: str
    waypoints: tuple[RigidTransform, ...] = ()
    iterations: int = 0
    tree_sizes: tuple[int, int] = (0, 0)
    elapsed: float = 0.0


@dataclass(frozen=True)
class AttemptRecord:
    attempt: int
    inserted_rank: int | None
    segment_times: tuple[float, ...]
    status: str


@dataclass
class PlanResult:
    status: str
    path: ObjectPath | None
    used_key_pose_count: int
    repaired_key_pose_indices: list[int]
    elapsed: float
    attempts: list[AttemptRecord]
    candidate_count: int = 0
    discarded_key_pose_indices: list[int] = field(default_factory=list)
    message: str = ""


@dataclass(frozen=True)
class PlanningProblem:
    scene: Scene
    start: RigidTransform
    goal: RigidTransform
    ranked_key_poses: tuple[KeyPose, ...] = ()
    config: PlannerConfig = PlannerConfig()
    check_endpoints: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "ranked_key_poses", tuple(sorted(self.ranked_key_poses, key=lambda k: k.rank)))
        if self.check_endpoints:
            if pose_in_collision(self.start, self.scene):
                raise PlanningError("start pose is in collision")
            if pose_in_collision(self.goal, self.scene):
                raise PlanningError("goal pose is in collision")


@dataclass(frozen=True)
class Violation:
    segment: int  # index of the waypoint the offending edge starts from
    s: float  # interpolation parameter along that edge


@dataclass(frozen=True)
class RepairResult:
    pose: RigidTransform | None
    samples: int
    radius: float  # outer radius of the last shell sampled


# -- edge helpers ---------------------------------------------------------


def _edge_samples(a: RigidTransform, b: RigidTransform, resolution: float, weight: float, include_start: bool = False):
    n = max(1, math.ceil(composite_distance(a, b, weight) / resolution))
    s = np.arange(0 if include_start else 1, n + 1) / n
    return s, *interpolate_many(a, b, s)


def edge_is_free(scene: Scene, a: RigidTransform, b: RigidTransform, config: PlannerConfig) -> bool:
    n = max(1, math.ceil(composite_distance(a, b, config.rotation_weight) / config.validation_resolution))
    return not edge_collides_in_scene(scene, a.translation, a.rotation, b.translation, b.rotation, n)


def validate_path(path: ObjectPath | Sequence[RigidTransform], scene: Scene, resolution: float,
                  rotation_weight: float = 0.1, brute_force: bool = False) -> tuple[bool, Violation | None]:
    """Check every waypoint and every densified intermediate pose for collision."""
    waypoints = path.waypoints if isinstance(path, ObjectPath) else list(path)
    if not waypoints:
        raise PlanningError("empty path")
    first = waypoints[0]
    if pose_in_collision(first, scene, brute_force=brute_force):
        return False, Violation(0, 0.0)
    for i, (a, b) in enumerate(zip(waypoints, waypoints[1:])):
        s, q, t = _edge_samples(a, b, resolution, rotation_weight)
        if brute_force:
            for k in range(len(s)):
                if pose_in_collision(RigidTransform(q[k], t[k]), scene, brute_force=True):
                    return False, Violation(i, float(s[k]))
        else:
            k = first_collision_in_scene(scene, q, t)
            if k >= 0:
                return False, Violation(i, float(s[k]))
    return True, None


def densify(waypoints: Sequence[RigidTransform], step_size: tuple[float, float]) -> list[RigidTransform]:
    """Insert interpolated poses so consecutive waypoints are within both step components."""
    out = [waypoints[0]]
    for a, b in zip(waypoints, waypoints[1:]):
        dt = float(np.linalg.norm(b.translation - a.translation))
        dr = quat_angle(quat_mul(quat_conj(a.rotation), b.rotation))
        n = max(1, math.ceil(max(dt / step_size[0], dr / step_size[1]) - 1e-12))
        if n > 1:
            q, t = interpolate_many(a, b, np.arange(1, n) / n)
            out.extend(RigidTransform(q[k], t[k]) for k in range(n - 1))
        out.append(b)
    return out


def sampling_box(scene: Scene, points: Sequence[np.ndarray], config: PlannerConfig) -> tuple[np.ndarray, np.ndarray]:
    if config.sampling_bounds is not None:
        lo, hi = config.sampling_bounds
        return np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    pts = np.array(points, dtype=float)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    bounds = scene.bounds()
    if bounds is not None:
        lo, hi = np.minimum(lo, bounds[0]), np.maximum(hi, bounds[1])
    margin = 2.0 * scene.moving.diameter()
    return lo - margin, hi + margin


# -- RRT-Connect ----------------------------------------------------------

_TRAPPED, _ADVANCED, _REACHED = 0, 1, 2


@njit(cache=True)
def _nearest(pos, quat, n, p, q, weight):
    best = -1
    best_d = np.inf
    for i in range(n):
        dx = pos[i, 0] - p[0]
        dy = pos[i, 1] - p[1]
        dz = pos[i, 2] - p[2]
        d = np.sqrt(dx * dx + dy * dy + dz * dz)
        if d >= best_d:
            continue
        dot = abs(quat[i, 0] * q[0] + quat[i, 1] * q[1] + quat[i, 2] * q[2] + quat[i, 3] * q[3])
        d += weight * 2.0 * np.arccos(min(dot, 1.0))
        if d < best_d:
            best_d = d
            best = i
    return best, best_d


@njit(cache=True)
def _dd_pick(u, lo, hi, pos, quat, n, weight, radius):
    """First candidate within ``radius`` of the tree (any if radius is 0).

    Each row of ``u`` holds six uniforms: three for the position inside the
    box and three for a Shoemake rotation. Returns (row, nearest node,
    distance, position, quaternion); row is -1 when all are rejected, with
    the last candidate reported.
    """
    p = np.empty(3)
    q = np.empty(4)
    near, d = -1, np.inf
    for k in range(u.shape[0]):
        for j in range(3):
            p[j] = lo[j] + u[k, j] * (hi[j] - lo[j])
        a, b = np.sqrt(1.0 - u[k, 3]), np.sqrt(u[k, 3])
        q[0] = b * np.cos(2 * np.pi * u[k, 5])
        q[1] = a * np.sin(2 * np.pi * u[k, 4])
        q[2] = a * np.cos(2 * np.pi * u[k, 4])
        q[3] = b * np.sin(2 * np.pi * u[k, 5])
        near, d = _nearest(pos, quat, n, p, q, weight)
        if radius == 0 or d <= radius:
            return k, near, d, p, q
    return -1, near, d, p, q


@njit(cache=True)
def _steer(p0, q0, p1, q1, step_m, step_rad, weight, resolution):
    """Clip the move toward (p1, q1) to one step; also return the edge sample count."""
    dx = p1[0] - p0[0]
    dy = p1[1] - p0[1]
    dz = p1[2] - p0[2]
    dt = np.sqrt(dx * dx + dy * dy + dz * dz)
    dot = abs(q0[0] * q1[0] + q0[1] * q1[1] + q0[2] * q1[2] + q0[3] * q1[3])
    dr = 2.0 * np.arccos(min(dot, 1.0))
    s = 1.0
    if dt > step_m:
        s = step_m / dt
    if dr > step_rad:
        s = min(s, step_rad / dr)
    pn = np.empty(3)
    qn = np.empty(4)
    if s >= 1.0:
        pn[:] = p1
        qn[:] = q1
    else:
        slerp_into(q0, q1, s, qn)
        for d in range(3):
            pn[d] = (1.0 - s) * p0[d] + s * p1[d]
    n = max(1, int(np.ceil(s * (dt + weight * dr) / resolution)))
    return pn, qn, s >= 1.0, n


class _Tree:
    def __init__(self, root: RigidTransform, weight: float, capacity: int = 1024) -> None:
        self.pos = np.empty((capacity, 3))
        self.quat = np.empty((capacity, 4))
        self.parent = np.empty(capacity, dtype=np.int64)
        self.n = 0
        self.weight = weight
        self.root = root
        self.add(root.translation, root.rotation, -1)

    def add(self, p: np.ndarray, q: np.ndarray, parent: int) -> int:
        if self.n == len(self.parent):
            self.pos = np.concatenate([self.pos, np.empty_like(self.pos)])
            self.quat = np.concatenate([self.quat, np.empty_like(self.quat)])
            self.parent = np.concatenate([self.parent, np.empty_like(self.parent)])
        self.pos[self.n] = p
        self.quat[self.n] = q
        self.parent[self.n] = parent
        self.n += 1
        return self.n - 1

    def nearest(self, p: np.ndarray, q: np.ndarray) -> tuple[int, float]:
        return _nearest(self.pos, self.quat, self.n, p, q, self.weight)

    def pose(self, i: int) -> RigidTransform:
        return RigidTransform(self.quat[i], self.pos[i])

    def branch(self, i: int) -> list[int]:
        out = []
        while i >= 0:
            out.append(i)
            i = int(self.parent[i])
        return out


class _SegmentPlanner:
    def __init__(self, scene: Scene, config: PlannerConfig, rng: np.random.Generator, box) -> None:
        self.scene = scene
        self.config = config
        self.rng = rng
        self.lo, self.hi = box
        self.step_m, self.step_rad = config.step_size
        self.weight = config.rotation_weight
        self.resolution = config.validation_resolution

    def extend(self, tree: _Tree, p, q, near: int | None = None) -> tuple[int, int]:
        if near is None:
            near, _ = tree.nearest(p, q)
        p0, q0 = tree.pos[near], tree.quat[near]
        pn, qn, reached, n = _steer(p0, q0, p, q, self.step_m, self.step_rad, self.weight, self.resolution)
        if edge_collides_in_scene(self.scene, p0, q0, pn, qn, n):
            return _TRAPPED, near
        idx = tree.add(pn, qn, near)
        return (_REACHED if reached else _ADVANCED), idx

    def connect(self, tree: _Tree, p, q) -> tuple[int, int]:
        status, idx = self.extend(tree, p, q)
        while status == _ADVANCED:
            status, nxt = self.extend(tree, p, q, near=idx)
            if status != _TRAPPED:
                idx = nxt
        return status, idx

    def plan(self, start: RigidTransform, goal: RigidTransform, deadline: float) -> SegmentResult:
        t0 = time.monotonic()
        cfg = self.config
        if composite_distance(start, goal, self.weight) == 0.0:
            return SegmentResult(SUCCESS, (start,), 0, (1, 0), time.monotonic() - t0)
        ta, tb = _Tree(start, self.weight), _Tree(goal, self.weight)
        radius = cfg.domain_radius
        it = 0
        while cfg.max_iterations == 0 or it < cfg.max_iterations:
            if it % _DEADLINE_CHECK_EVERY == 0 and time.monotonic() > deadline:
                return SegmentResult(TIMEOUT, (), it, (ta.n, tb.n), time.monotonic() - t0)
            it += 1
            if self.rng.random() < cfg.goal_bias:
                p, q = tb.root.translation, tb.root.rotation
                near = None
            else:
                u = self.rng.random((_DD_MAX_RESAMPLES, 6))
                _, near, _, p, q = _dd_pick(u, self.lo, self.hi, ta.pos, ta.quat, ta.n, self.weight, radius)
            status, ia = self.extend(ta, p, q, near)
            if status != _TRAPPED:
                status_b, ib = self.connect(tb, ta.pos[ia], ta.quat[ia])
                if status_b == _REACHED:
                    nodes_a = [ta.pose(i) for i in reversed(ta.branch(ia))]
                    nodes_b = [tb.pose(i) for i in tb.branch(ib)][1:]
                    path = nodes_a + nodes_b
                    if ta.root is goal:
                        path.reverse()
                    path[0], path[-1] = start, goal
                    return SegmentResult(SUCCESS, tuple(path), it, (ta.n, tb.n), time.monotonic() - t0)
            ta, tb = tb, ta
        return SegmentResult(EXHAUSTED, (), it, (ta.n, tb.n), time.monotonic() - t0)

    def shortcut(self, path: list[RigidTransform], deadline: float) -> list[RigidTransform]:
        for _ in range(self.config.smoothing_attempts):
            if len(path) < 3 or time.monotonic() > deadline:
                break
            i, j = sorted(self.rng.choice(len(path), size=2, replace=False))
            if j - i < 2:
                continue
            if edge_is_free(self.scene, path[i], path[j], self.config):
                path = path[: i + 1] + path[j:]
        return path


def plan_segment(start: RigidTransform, goal: RigidTransform, scene: Scene, config: PlannerConfig,
                 deadline: float | None = None, rng: np.random.Generator | None = None) -> SegmentResult:
    """Bidirectional tree search between two poses, shortcut and densified on success."""
    t0 = time.monotonic()
    if deadline is None:
        deadline = t0 + config.t_e
    if rng is None:
        rng = np.random.default_rng(config.rng_seed)
    if pose_in_collision(start, scene) or pose_in_collision(goal, scene):
        return SegmentResult(INFEASIBLE)
    box = sampling_box(scene, [start.translation, goal.translation], config)
    planner = _SegmentPlanner(scene, config, rng, box)
    result = planner.plan(start, goal, deadline)
    if result.status != SUCCESS:
        return result
    path = planner.shortcut(list(result.waypoints), deadline)
    path = densify(path, config.step_size) if len(path) > 1 else path
    ok, _ = validate_path(path, scene, config.validation_resolution, config.rotation_weight)
    if not ok:
        return SegmentResult(EXHAUSTED, (), result.iterations, result.tree_sizes, time.monotonic() - t0)
    return SegmentResult(SUCCESS, tuple(path), result.iterations, result.tree_sizes, time.monotonic() - t0)


# -- key-pose repair ------------------------------------------------------


def _random_unit(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def repair_key_pose(pose: RigidTransform, scene: Scene, config: PlannerConfig,
                    rng: np.random.Generator | None = None) -> RepairResult:
    """Nearest collision-free pose among random samples drawn in growing shells.

    Each sample sits at a composite distance drawn uniformly within the
    current shell, split randomly between translation and rotation.
    """
    if not pose_in_collision(pose, scene):
        return RepairResult(pose, 0, 0.0)
    if rng is None:
        rng = np.random.default_rng(config.rng_seed)
    schedule = config.repair_radius_schedule
    per_shell = max(1, config.repair_samples_max // len(schedule))
    drawn = 0
    inner = 0.0
    w = config.rotation_weight
    for outer in schedule:
        n = min(per_shell, config.repair_samples_max - drawn)
        if n <= 0:
            break
        d = rng.uniform(inner, outer, n)
        frac = rng.random(n)
        quats = np.empty((n, 4))
        trans = np.empty((n, 3))
        for k in range(n):
            offset_t = frac[k] * d[k] * _random_unit(rng)
            dq = quat_from_axis_angle(_random_unit(rng), (1.0 - frac[k]) * d[k] / w)
            quats[k] = quat_mul(dq, pose.rotation)
            trans[k] = pose.translation + offset_t
        drawn += n
        free = np.flatnonzero(~collisions_in_scene(scene, quats, trans))
        if len(free):
            cands = [RigidTransform(quats[k], trans[k]) for k in free]
            dists = [composite_distance(pose, c, w) for c in cands]
            return RepairResult(cands[int(np.argmin(dists))], drawn, outer)
        inner = outer
    return RepairResult(None, drawn, inner)


# -- outer loop -----------------------------------------------------------


@dataclass
class _Waypoint:
    uid: int
    pose: RigidTransform
    t: float
    tag: str


def plan_with_demonstration(problem: PlanningProblem) -> PlanResult:
    cfg = problem.config
    t_start = time.monotonic()
    scene = problem.scene
    if pose_in_collision(problem.start, scene) or pose_in_collision(problem.goal, scene):
        return PlanResult(INFEASIBLE, None, 0, [], time.monotonic() - t_start, [], len(problem.ranked_key_poses),
                          message="start or goal in collision")
    seq = [_Waypoint(0, problem.start, -math.inf, "start"), _Waypoint(1, problem.goal, math.inf, "goal")]
    next_uid = 2
    solved: dict[tuple[int, int], tuple[RigidTransform, ...]] = {}
    candidates = list(problem.ranked_key_poses)
    repaired: list[int] = []
    discarded: list[int] = []
    attempts: list[AttemptRecord] = []
    used = 0
    attempt = 0
    inserted_rank: int | None = None
    repair_rng = np.random.default_rng([cfg.rng_seed, 1])
    while True:
        seg_times = []
        ok = True
        for k, (a, b) in enumerate(zip(seq, seq[1:])):
            key = (a.uid, b.uid)
            if key in solved:
                continue
            rng = np.random.default_rng([cfg.rng_seed, 0, attempt, k])
            res = plan_segment(a.pose, b.pose, scene, cfg, deadline=time.monotonic() + cfg.t_e, rng=rng)
            seg_times.append(res.elapsed)
            if res.status == SUCCESS:
                solved[key] = res.waypoints
            elif res.status == INFEASIBLE:
                return PlanResult(INFEASIBLE, None, used, repaired, time.monotonic() - t_start, attempts,
                                  len(problem.ranked_key_poses), discarded, "segment endpoint in collision")
            else:
                ok = False
                break
        attempts.append(AttemptRecord(attempt, inserted_rank, tuple(seg_times), SUCCESS if ok else TIMEOUT))
        if ok:
            path = _assemble(seq, solved)
            return PlanResult(SUCCESS, path, used, repaired, time.monotonic() - t_start, attempts,
                              len(problem.ranked_key_poses), discarded)
        inserted = None
        while candidates and used < cfg.max_key_poses:
            kp = candidates.pop(0)
            pose, tag = kp.pose_in_world, f"key_pose({kp.rank})"
            if pose_in_collision(pose, scene):
                fix = repair_key_pose(pose, scene, cfg, repair_rng)
                if fix.pose is None:
                    discarded.append(kp.rank)
                    continue
                pose, tag = fix.pose, f"repaired({kp.rank})"
                repaired.append(kp.rank)
            inserted = _Waypoint(next_uid, pose, kp.t, tag)
            next_uid += 1
            break
        if inserted is None:
            return PlanResult(TIMEOUT, None, used, repaired, time.monotonic() - t_start, attempts,
                              len(problem.ranked_key_poses), discarded, "key poses exhausted")
        times = [w.t for w in seq]
        seq.insert(bisect.bisect_right(times, inserted.t), inserted)
        used += 1
        attempt += 1
        inserted_rank = int(inserted.tag.split("(")[1].rstrip(")"))


def _assemble(seq: list[_Waypoint], solved) -> ObjectPath:
    poses: list[RigidTransform] = [seq[0].pose]
    tags = [seq[0].tag]
    for a, b in zip(seq, seq[1:]):
        seg = solved[(a.uid, b.uid)]
        for p in seg[1:-1]:
            poses.append(p)
            tags.append("sampled")
        if len(seg) > 1 or a.uid != b.uid:
            poses.append(b.pose)
            tags.append(b.tag)
    return ObjectPath(poses, tags)


def warmup() -> None:
    """Compile the numba kernels on a tiny problem so later timings exclude JIT work."""
    from .geom import box

    wall = box((-0.01, -0.1, -0.1), (0.01, 0.1, 0.1))
    scene = Scene(((wall, RigidTransform.identity()),), box((-0.01, -0.01, -0.01), (0.01, 0.01, 0.01)))
    cfg = PlannerConfig(t_e=2.0, max_iterations=2000)
    a = RigidTransform.from_translation((-0.05, 0.0, 0.0))
    b = RigidTransform.from_axis_angle((0, 0, 1), 0.5, (0.05, 0.0, 0.0))
    res = plan_segment(a, b, scene, cfg, rng=np.random.default_rng(0))
    if res.status == SUCCESS:
        validate_path(list(res.waypoints), scene, cfg.validation_resolution)
    repair_key_pose(RigidTransform.identity(), scene, cfg, np.random.default_rng(0))
