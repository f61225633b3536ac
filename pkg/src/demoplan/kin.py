"""Serial-chain kinematics: forward kinematics, damped least-squares IK and
the mapping from an object path to a joint path through a fixed grasp."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from .geom import RigidTransform, Scene, box, build_collision_index, check_collision, compose, interpolate, invert
from .geom.transform import pose_vector_to_transform, quat_conj, quat_mul, quat_to_rotvec


class KinematicsError(ValueError):
    pass


def _rotation_about(axis: np.ndarray, angle: float) -> np.ndarray:
    x, y, z = axis
    c, s = math.cos(angle), math.sin(angle)
    C = 1.0 - c
    return np.array(
        [
            [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
            [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
            [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
        ]
    )


@dataclass(frozen=True, eq=False)
class Joint:
    """Revolute joint: a fixed ``origin`` offset from the previous frame, then
    a rotation about ``axis`` (expressed in the offset frame)."""

    name: str
    axis: np.ndarray
    origin: RigidTransform
    limits: tuple[float, float]

    def __post_init__(self) -> None:
        axis = np.asarray(self.axis, dtype=float).reshape(3)
        n = np.linalg.norm(axis)
        if n == 0:
            raise KinematicsError(f"joint {self.name}: zero axis")
        axis = axis / n
        axis.setflags(write=False)
        object.__setattr__(self, "axis", axis)
        lo, hi = float(self.limits[0]), float(self.limits[1])
        if not lo < hi:
            raise KinematicsError(f"joint {self.name}: limits must satisfy lo < hi, got {self.limits}")
        object.__setattr__(self, "limits", (lo, hi))


@dataclass(frozen=True, eq=False)
class KinematicChain:
    """Base pose, ordered revolute joints (the first one is the waist) and a
    fixed flange-to-tip offset."""

    base: RigidTransform
    joints: tuple[Joint, ...]
    tip: RigidTransform = field(default_factory=RigidTransform.identity)
    link_radius: float = 0.03  # only used by the optional arm collision check
    home_angles: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "joints", tuple(self.joints))
        if not self.joints:
            raise KinematicsError("a chain needs at least one joint")
        self._cache()

    def _cache(self) -> None:
        object.__setattr__(self, "_origins", [j.origin.as_matrix() for j in self.joints])
        object.__setattr__(self, "_base", self.base.as_matrix())
        object.__setattr__(self, "_tip", self.tip.as_matrix())
        lo = np.array([j.limits[0] for j in self.joints])
        hi = np.array([j.limits[1] for j in self.joints])
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dof(self) -> int:
        return len(self.joints)

    @property
    def waist(self) -> Joint:
        return self.joints[0]

    def within_limits(self, q) -> bool:
        q = np.asarray(q, dtype=float)
        return bool(np.all(q >= self.lower) and np.all(q <= self.upper))

    def clamp(self, q) -> np.ndarray:
        return np.clip(np.asarray(q, dtype=float), self.lower, self.upper)

    def home(self) -> np.ndarray:
        if self.home_angles is None:
            return self.clamp(np.zeros(self.dof))
        return self.clamp(np.array(self.home_angles, dtype=float))


@dataclass(frozen=True)
class JointConfig:
    angles: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))

    def as_array(self) -> np.ndarray:
        return np.array(self.angles)


@dataclass(frozen=True)
class GraspTransform:
    """Pose of the object in the gripper-tip frame; fixed for a planning run."""

    tip_T_object: RigidTransform


@dataclass
class JointPath:
    configs: list[JointConfig]

    def __len__(self) -> int:
        return len(self.configs)

    def as_array(self) -> np.ndarray:
        return np.array([c.angles for c in self.configs])

    def to_text(self) -> str:
        return "".join(" ".join(f"{a:.6f}" for a in c.angles) + "\n" for c in self.configs)


# -- chain files ------------------------------------------------------------


def _pose_from_list(values, degrees: bool = False) -> RigidTransform:
    if values is None:
        return RigidTransform.identity()
    if len(values) != 6:
        raise KinematicsError(f"pose needs 6 values (x y z roll pitch yaw), got {values!r}")
    v = [float(x) for x in values]
    if degrees:
        v[3:] = [math.radians(a) for a in v[3:]]
    return pose_vector_to_transform(v)


def chain_from_dict(data: dict) -> KinematicChain:
    degrees = bool(data.get("degrees", False))
    unit = math.radians if degrees else float
    try:
        joints = [
            Joint(
                name=str(j.get("name", f"j{i}")),
                axis=np.asarray(j["axis"], dtype=float),
                origin=_pose_from_list(j.get("origin"), degrees),
                limits=tuple(unit(v) for v in j["limits"]),
            )
            for i, j in enumerate(data["joints"])
        ]
    except (KeyError, TypeError) as exc:
        raise KinematicsError(f"malformed chain description: {exc}") from exc
    return KinematicChain(
        base=_pose_from_list(data.get("base"), degrees),
        joints=tuple(joints),
        tip=_pose_from_list(data.get("tip"), degrees),
        link_radius=float(data.get("link_radius", 0.03)),
        home_angles=None if "home" not in data else tuple(unit(v) for v in data["home"]),
    )


def load_chain(path: str | Path) -> KinematicChain:
    """Read a chain from YAML: ``base``/``tip`` as [x, y, z, roll, pitch, yaw]
    and a ``joints`` list with ``axis``, ``origin`` and ``limits``."""
    data = yaml.safe_load(Path(path).read_text())
    if not isinstance(data, dict):
        raise KinematicsError(f"{path}: expected a mapping")
    return chain_from_dict(data)


def default_chain() -> KinematicChain:
    return load_chain(Path(__file__).parent / "data" / "chains" / "default_chain.yaml")


# -- forward kinematics and Jacobian ---------------------------------------


def _frames(chain: KinematicChain, q: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """World matrices of every joint frame (after its offset, before its rotation) and the tip."""
    T = chain._base
    frames = []
    for joint, origin, angle in zip(chain.joints, chain._origins, q):
        T = T @ origin
        frames.append(T)
        R = np.eye(4)
        R[:3, :3] = _rotation_about(joint.axis, angle)
        T = T @ R
    return frames, T @ chain._tip


def forward_matrix(chain: KinematicChain, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (chain.dof,):
        raise KinematicsError(f"expected {chain.dof} joint angles, got shape {q.shape}")
    return _frames(chain, q)[1]


def forward_kinematics(chain: KinematicChain, q) -> RigidTransform:
    """Tip pose for joint angles ``q``."""
    return RigidTransform.from_matrix(forward_matrix(chain, q))


def jacobian(chain: KinematicChain, q) -> np.ndarray:
    """Geometric Jacobian (6 x dof): rows 0-2 tip linear velocity, rows 3-5
    angular velocity, both in the world frame."""
    frames, tip = _frames(chain, np.asarray(q, dtype=float))
    return _jacobian_from(chain, frames, tip)


def pose_error(current: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Six-vector (translation error, rotation-vector error) taking ``current`` to ``target``."""
    e = np.empty(6)
    e[:3] = target[:3, 3] - current[:3, 3]
    R = target[:3, :3] @ current[:3, :3].T
    e[3:] = _matrix_log(R)
    return e


def _matrix_log(R: np.ndarray) -> np.ndarray:
    c = max(-1.0, min(1.0, (np.trace(R) - 1.0) / 2.0))
    angle = math.acos(c)
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if angle < 1e-9:
        return 0.5 * v
    if math.pi - angle < 1e-6:
        # near pi the antisymmetric part vanishes; recover the axis from the symmetric part
        return quat_to_rotvec(RigidTransform.from_matrix(_homog(R)).rotation)
    return angle / (2.0 * math.sin(angle)) * v


def _homog(R: np.ndarray) -> np.ndarray:
    m = np.eye(4)
    m[:3, :3] = R
    return m


def composite_error(a: RigidTransform, b: RigidTransform, rotation_weight: float) -> float:
    dq = quat_mul(quat_conj(a.rotation), b.rotation)
    angle = 2.0 * math.atan2(np.linalg.norm(dq[1:]), abs(dq[0]))
    return float(np.linalg.norm(a.translation - b.translation)) + rotation_weight * angle


# -- inverse kinematics -----------------------------------------------------


@dataclass(frozen=True)
class IKConfig:
    damping: float = 0.01
    tolerance: float = 1e-4  # composite: meters + rotation_weight * radians
    rotation_weight: float = 0.1
    max_iterations: int = 500
    max_step: float = 0.3  # radians per iteration, largest component
    plateau_iterations: int = 25  # give up when the error stops shrinking for this long
    plateau_ratio: float = 0.999
    posture_gain: float = 0.1  # null-space pull toward the home pose on redundant chains
    step_bound: float = 0.15  # per-joint bound between consecutive path waypoints
    densify_step: tuple[float, float] = (0.005, 0.05)  # meters, radians
    max_refinements: int = 4


@dataclass(frozen=True)
class IKResult:
    success: bool
    angles: np.ndarray
    error: float
    iterations: int
    reason: str = ""


def inverse_kinematics(chain: KinematicChain, target: RigidTransform, seed, config: IKConfig = IKConfig()) -> IKResult:
    """Damped least squares on the 6-D pose error, clamping to joint limits."""
    q = np.asarray(seed, dtype=float).copy()
    if q.shape != (chain.dof,):
        raise KinematicsError(f"seed must have {chain.dof} angles")
    if not chain.within_limits(q):
        raise KinematicsError("seed violates joint limits")
    T_target = target.as_matrix()
    w = config.rotation_weight
    lam2 = config.damping**2
    home = chain.home()
    best = math.inf
    since_best = 0
    for it in range(config.max_iterations + 1):
        frames, tip = _frames(chain, q)
        e = pose_error(tip, T_target)
        err = float(np.linalg.norm(e[:3]) + w * np.linalg.norm(e[3:]))
        if err < config.tolerance:
            return IKResult(True, q, err, it)
        if err < best * config.plateau_ratio:
            best, since_best = err, 0
        else:
            since_best += 1
            if since_best >= config.plateau_iterations:
                return IKResult(False, q, err, it, "plateau")
        if it == config.max_iterations:
            break
        J = _jacobian_from(chain, frames, tip)
        # weight the rotational rows so the step minimizes the same composite metric
        Jw, ew = J.copy(), e.copy()
        Jw[3:] *= w
        ew[3:] *= w
        posture = None
        if config.posture_gain > 0 and chain.dof > 6:
            # switched off near convergence: the damped projector leaks a little into the task
            gain = config.posture_gain if err > 10 * config.tolerance else 0.0
            posture = gain * (home - q)
        dq = _dls_step(Jw, ew, lam2, posture)
        # joints pinned at a limit and pushed outward drop out of the solve
        pinned = ((q <= chain.lower) & (dq < 0)) | ((q >= chain.upper) & (dq > 0))
        if pinned.any():
            Jw[:, pinned] = 0.0
            if posture is not None:
                posture[pinned] = 0.0
            dq = _dls_step(Jw, ew, lam2, posture)
        peak = np.max(np.abs(dq))
        if peak > config.max_step:
            dq *= config.max_step / peak
        q = chain.clamp(q + dq)
    return IKResult(False, q, err, config.max_iterations, "iteration limit")


def _dls_step(J: np.ndarray, e: np.ndarray, lam2: float, posture: np.ndarray | None = None) -> np.ndarray:
    """Damped least-squares step, plus ``posture`` projected into the null space of ``J``."""
    Jp = J.T @ np.linalg.inv(J @ J.T + lam2 * np.eye(len(e)))
    dq = Jp @ e
    if posture is not None:
        dq += posture - Jp @ (J @ posture)
    return dq


def _jacobian_from(chain: KinematicChain, frames, tip) -> np.ndarray:
    p_tip = tip[:3, 3]
    J = np.empty((6, chain.dof))
    for i, (joint, F) in enumerate(zip(chain.joints, frames)):
        axis = F[:3, :3] @ joint.axis
        J[:3, i] = np.cross(axis, p_tip - F[:3, 3])
        J[3:, i] = axis
    return J


# -- object path to joint path ----------------------------------------------


@dataclass
class JointPathResult:
    success: bool
    joint_path: JointPath | None
    targets: list[RigidTransform]  # tip targets, one per densified waypoint
    object_poses: list[RigidTransform]
    failure_index: int | None = None
    reason: str = ""

    @property
    def discontinuity(self) -> bool:
        return self.reason == "discontinuity"


def tip_target(object_pose: RigidTransform, grasp: GraspTransform) -> RigidTransform:
    return compose(object_pose, invert(grasp.tip_T_object))


def object_path_to_joint_path(
    waypoints: Sequence[RigidTransform],
    grasp: GraspTransform,
    chain: KinematicChain,
    config: IKConfig = IKConfig(),
    seed=None,
) -> JointPathResult:
    """Solve IK along a densified object path, seeding each waypoint with the
    previous solution.

    A joint jump above ``config.step_bound`` is first retried by bisecting the
    offending step (up to ``config.max_refinements`` times); the inserted poses
    become part of the returned path. A jump that survives refinement is
    reported as a discontinuity, an unsolvable waypoint as an IK failure.
    """
    from .planner import densify

    if not waypoints:
        raise KinematicsError("empty path")
    dense = densify(list(waypoints), config.densify_step)
    q = chain.home() if seed is None else chain.clamp(seed)
    poses: list[RigidTransform] = []
    targets: list[RigidTransform] = []
    configs: list[JointConfig] = []
    pending = [(p, 0) for p in reversed(dense)]  # stack, next pose on top
    while pending:
        pose, depth = pending[-1]
        target = tip_target(pose, grasp)
        res = inverse_kinematics(chain, target, q, config)
        jump = bool(configs) and np.max(np.abs(res.angles - q)) > config.step_bound
        if configs and (jump or not res.success) and depth < config.max_refinements:
            pending[-1] = (pose, depth + 1)
            pending.append((interpolate(poses[-1], pose, 0.5), depth + 1))
            continue
        if not res.success:
            return JointPathResult(False, None, targets + [target], poses + [pose], len(poses),
                                   f"ik failed ({res.reason}, error {res.error:.3g})")
        if jump:
            return JointPathResult(False, None, targets + [target], poses + [pose], len(poses), "discontinuity")
        pending.pop()
        q = res.angles
        poses.append(pose)
        targets.append(target)
        configs.append(JointConfig(tuple(q)))
    return JointPathResult(True, JointPath(configs), targets, poses)


def read_joint_path(path: str | Path) -> JointPath:
    rows = [line.split() for line in Path(path).read_text().splitlines() if line.strip() and not line.startswith("#")]
    return JointPath([JointConfig(tuple(float(v) for v in r)) for r in rows])


# -- optional arm collision audit -------------------------------------------


def link_segments(chain: KinematicChain, q) -> list[tuple[np.ndarray, np.ndarray]]:
    frames, tip = _frames(chain, np.asarray(q, dtype=float))
    points = [F[:3, 3] for F in frames] + [tip[:3, 3]]
    return [(a, b) for a, b in zip(points, points[1:]) if np.linalg.norm(b - a) > 1e-9]


def _link_mesh(a: np.ndarray, b: np.ndarray, r: float):
    """Box of half-width ``r`` around segment ``ab`` (a cheap stand-in for a capsule)."""
    d = b - a
    length = float(np.linalg.norm(d))
    x = d / length
    helper = np.array([0.0, 0.0, 1.0]) if abs(x[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    y = np.cross(helper, x)
    y /= np.linalg.norm(y)
    z = np.cross(x, y)
    m = np.eye(4)
    m[:3, :3] = np.column_stack([x, y, z])
    m[:3, 3] = a
    return box((-r, -r, -r), (length + r, r, r)), RigidTransform.from_matrix(m)


def arm_collisions(chain: KinematicChain, joint_path: JointPath, scene: Scene, skip_links: int = 0) -> list[int]:
    """Indices of joint configurations whose link boxes touch a scene obstacle.

    The last ``skip_links`` links (usually the ones holding the object) are
    ignored since they are expected to be near the assembly.
    """
    if scene.obstacle_index is None:
        return []
    bad = []
    identity = RigidTransform.identity()
    for i, cfg in enumerate(joint_path.configs):
        segments = link_segments(chain, cfg.angles)
        if skip_links:
            segments = segments[:-skip_links]
        for a, b in segments:
            mesh, pose = _link_mesh(a, b, chain.link_radius)
            if check_collision(build_collision_index(mesh), pose, scene.obstacle_index, identity).intersecting:
                bad.append(i)
                break
    return bad


__all__ = [
    "GraspTransform",
    "IKConfig",
    "IKResult",
    "Joint",
    "JointConfig",
    "JointPath",
    "JointPathResult",
    "KinematicChain",
    "KinematicsError",
    "arm_collisions",
    "chain_from_dict",
    "composite_error",
    "default_chain",
    "forward_kinematics",
    "inverse_kinematics",
    "jacobian",
    "load_chain",
    "object_path_to_joint_path",
    "pose_error",
    "read_joint_path",
    "tip_target",
]
