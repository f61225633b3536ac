"""Builders for the bundled desk-scale scenarios and their synthetic demonstrations.

Run ``python -m demoplan.scenarios [out_dir]`` to regenerate the files shipped
under ``demoplan/data``. Every demonstration log is synthetic: a collision-free
reference path is constructed (by hand or by a grid search over a planar
slice of pose space), re-timed with a human-like velocity profile and
perturbed with a little tracking noise.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .demo import write_pose_log
from .geom import (
    RigidTransform,
    Scene,
    TriMesh,
    boxes,
    collisions_in_scene,
    compose,
    icosphere,
    interpolate,
    pose_vector_to_transform,
    save_obj,
    transform_to_pose_vector,
)
from .geom.transform import quat_from_axis_angle

CLEARANCE = 0.002


@dataclass
class ScenarioSpec:
    """Everything needed to write one bundled scenario to disk."""

    name: str
    moving: TriMesh
    fixed: TriMesh | None  # the part the object is assembled into (G), in its own frame
    world_T_G: RigidTransform
    start_in_G: RigidTransform
    goal_in_G: RigidTransform
    reference_in_G: list[RigidTransform]
    extra_obstacles: list[tuple[str, TriMesh, RigidTransform]] = field(default_factory=list)
    demo: dict = field(default_factory=dict)
    planner: dict = field(default_factory=dict)
    bench: dict = field(default_factory=dict)
    log_world_frame: bool = False
    # tip_T_object as a pose vector: gripper from above, tilted 30 degrees so
    # the default chain's wrist stays clear of its straight-wrist singularity
    grasp: tuple[float, ...] = (0.0, 0.0, 0.0, math.pi, math.pi / 6, 0.0)

    def scene(self) -> Scene:
        obstacles = [] if self.fixed is None else [(self.fixed, self.world_T_G)]
        obstacles += [(m, p) for _, m, p in self.extra_obstacles]
        return Scene(tuple(obstacles), self.moving)


def _pose(x, z, pitch, y=0.0) -> RigidTransform:
    return RigidTransform(quat_from_axis_angle((0, 1, 0), pitch), (x, y, z))


# -- L insertion ----------------------------------------------------------

L_FOOT = (0.08, 0.02, 0.01)  # length, width, thickness
L_STEM = (0.012, 0.06)  # thickness along x, height above the foot
GROOVE = dict(height=0.03, roof=0.01, opening=0.045, wall=0.01)


def l_object() -> TriMesh:
    """L-shaped object: a foot along -x and a stem rising at its x = 0 end."""
    length, width, thick = L_FOOT
    s, h = L_STEM
    w = width / 2
    return boxes([((-length, -w, 0.0), (0.0, w, thick)), ((-s, -w, thick), (0.0, w, thick + h))])


def groove_block() -> TriMesh:
    """Closed groove under a roof, reachable only through a top opening shorter than the foot."""
    length, width, _ = L_FOOT
    c = CLEARANCE
    b = length + 3 * c  # cavity length
    cy = width / 2 + c
    H, r, a, T = GROOVE["height"], GROOVE["roof"], GROOVE["opening"], GROOVE["wall"]
    top = H + r
    return boxes([
        ((-b - T, -cy - T, -T), (T, cy + T, 0.0)),  # floor
        ((0.0, -cy - T, 0.0), (T, cy + T, top)),  # end wall under the opening
        ((-b - T, -cy - T, 0.0), (-b, cy + T, top)),  # far end wall
        ((-b, -cy - T, 0.0), (0.0, -cy, top)),  # side walls
        ((-b, cy, 0.0), (0.0, cy + T, top)),
        ((-b, -cy, H), (-a, cy, top)),  # roof
    ])


def planar_grid_path(scene_in_G: Scene, xs, zs, pitches, start, goal, rot_scale=0.05, clearance_weight=3.0):
    """Shortest high-clearance path over a grid of (x, z, pitch) poses with y = 0.

    Edges join 26-neighbours whose poses are both free; their cost grows as
    the free-space distance transform shrinks, pushing the path away from
    contact. Returns an ``(n, 3)`` array of grid poses or ``None``.
    """
    X, Z, P = np.meshgrid(xs, zs, pitches, indexing="ij")
    quats = np.array([quat_from_axis_angle((0, 1, 0), p) for p in pitches])
    Q = np.broadcast_to(quats[None, None], X.shape + (4,)).reshape(-1, 4)
    T = np.stack([X.ravel(), np.zeros(X.size), Z.ravel()], axis=1)
    blocked = collisions_in_scene(scene_in_G, Q, T).reshape(X.shape)
    steps = (xs[1] - xs[0], zs[1] - zs[0], (pitches[1] - pitches[0]) * rot_scale)
    clear = ndimage.distance_transform_edt(~blocked, sampling=steps)
    ids = np.arange(X.size).reshape(X.shape)
    rows, cols, cost = [], [], []
    for off in np.ndindex(3, 3, 3):
        d = np.array(off) - 1
        if not d.any():
            continue
        src = tuple(slice(max(0, -k), n - max(0, k)) for k, n in zip(d, X.shape))
        dst = tuple(slice(max(0, k), n - max(0, -k)) for k, n in zip(d, X.shape))
        ok = ~blocked[src] & ~blocked[dst]
        length = float(np.linalg.norm(d * np.array(steps)))
        c = np.minimum(clear[src], clear[dst])[ok]
        rows.append(ids[src][ok])
        cols.append(ids[dst][ok])
        cost.append(length * (1.0 + clearance_weight * steps[0] / c))
    graph = coo_matrix((np.concatenate(cost), (np.concatenate(rows), np.concatenate(cols))), shape=(X.size, X.size))
    nearest = lambda grid, v: int(np.argmin(np.abs(grid - v)))  # noqa: E731
    s = ids[nearest(xs, start[0]), nearest(zs, start[1]), nearest(pitches, start[2])]
    g = ids[nearest(xs, goal[0]), nearest(zs, goal[1]), nearest(pitches, goal[2])]
    dist, pred = dijkstra(graph.tocsr(), indices=s, return_predecessors=True)
    if not np.isfinite(dist[g]):
        return None
    chain = [g]
    while chain[-1] != s:
        chain.append(pred[chain[-1]])
    i, j, k = np.unravel_index(np.array(chain[::-1]), X.shape)
    return np.stack([xs[i], zs[j], pitches[k]], axis=1)


def l_insertion() -> ScenarioSpec:
    obj, block = l_object(), groove_block()
    start = (-0.03, 0.10, 0.0)
    goal = (-0.002, 0.01, 0.0)
    local = Scene(((block, RigidTransform.identity()),), obj)
    grid = planar_grid_path(
        local,
        np.arange(-0.07, 0.03 + 1e-9, 0.001),
        np.arange(0.0, 0.12 + 1e-9, 0.001),
        np.radians(np.arange(-90.0, 10.0 + 1e-9, 2.0)),
        start,
        goal,
    )
    if grid is None:
        raise RuntimeError("L-insertion reference path not found")
    reference = [_pose(x, z, p) for x, z, p in grid]
    world_T_G = pose_vector_to_transform((0.45, -0.05, 0.72, 0.0, 0.0, 0.3))
    T = GROOVE["wall"]
    table = boxes([((-0.3, -0.3, -T - 0.03), (0.3, 0.3, -T))])
    return ScenarioSpec(
        name="l_insertion",
        moving=obj,
        fixed=block,
        world_T_G=world_T_G,
        start_in_G=_pose(*start[:2], start[2]),
        goal_in_G=_pose(*goal[:2], goal[2]),
        reference_in_G=reference,
        extra_obstacles=[("table", table, world_T_G)],
        demo=dict(dof="pitch", degree=7, candidates=6, samples=60, noise=(0.0003, 0.004),
                  phases=[(76, 2.2), (88, 0.6), (102, 0.6), (-1, 2.6), (-1, 0.8)], region_phases=(1, 4)),
        planner=dict(t_e=5.0),
        bench=dict(trials=5, seeds=[1, 2, 3, 4, 5], success_floor=4),
        log_world_frame=True,
    )


# -- tenon through two mortises --------------------------------------------

TENON = (0.16, 0.02, 0.02)
MORTISE = dict(thickness=0.015, gap=0.055, hole_z=0.06, height=0.12, half_width=0.08)


def tenon() -> TriMesh:
    length, w, h = TENON
    return boxes([((-length / 2, -w / 2, -h / 2), (length / 2, w / 2, h / 2))])


def _plate_with_hole(x0, x1, half_width, height, hole_z, hole_half):
    return [
        ((x0, -half_width, 0.0), (x1, -hole_half, height)),
        ((x0, hole_half, 0.0), (x1, half_width, height)),
        ((x0, -hole_half, 0.0), (x1, hole_half, hole_z - hole_half)),
        ((x0, -hole_half, hole_z + hole_half), (x1, hole_half, height)),
    ]


def mortise_frame() -> TriMesh:
    m = MORTISE
    hole = TENON[1] / 2 + CLEARANCE
    first = _plate_with_hole(0.0, m["thickness"], m["half_width"], m["height"], m["hole_z"], hole)
    x2 = m["thickness"] + m["gap"]
    second = _plate_with_hole(x2, x2 + m["thickness"], m["half_width"], m["height"], m["hole_z"], hole)
    base = [((-0.22, -0.14, -0.01), (0.22, 0.14, 0.0))]
    return boxes(base + first + second)


def _polyline(waypoints: list[RigidTransform], spacing: float) -> list[RigidTransform]:
    out = [waypoints[0]]
    for a, b in zip(waypoints, waypoints[1:]):
        n = max(1, math.ceil(float(np.linalg.norm(b.translation - a.translation)) / spacing))
        out.extend(interpolate(a, b, k / n) for k in range(1, n + 1))
    return out


def tenon_insertion() -> ScenarioSpec:
    m = MORTISE
    z = m["hole_z"]
    x_mid = m["thickness"] + m["gap"] / 2
    yaw = lambda a: quat_from_axis_angle((0, 0, 1), a)  # noqa: E731
    start = RigidTransform(yaw(math.pi / 2), (-0.14, 0.06, 0.02))
    lifted = RigidTransform(yaw(math.pi / 2), (-0.14, 0.06, 0.07))
    aligned = RigidTransform(yaw(0.0), (-0.12, 0.0, z))
    entry = RigidTransform(yaw(0.0), (-0.09, 0.0, z))
    through_first = RigidTransform(yaw(0.0), (-0.005, 0.0, z))
    goal = RigidTransform(yaw(0.0), (x_mid, 0.0, z))
    reference = _polyline([start, lifted, aligned, entry, through_first, goal], 0.002)
    return ScenarioSpec(
        name="tenon_insertion",
        moving=tenon(),
        fixed=mortise_frame(),
        world_T_G=pose_vector_to_transform((0.40, 0.10, 0.72, 0.0, 0.0, -0.2)),
        start_in_G=start,
        goal_in_G=goal,
        reference_in_G=reference,
        demo=dict(
            dof="x",
            degree=7,
            candidates=11,
            samples=64,
            noise=(0.0003, 0.004),
            phases=[(0, 0.5), (25, 0.8), (57, 1.2), (72, 1.0), (115, 2.0), (-1, 1.5), (-1, 0.6)],
            region_phases=(1, 6),
        ),
        planner=dict(t_e=5.0),
        bench=dict(trials=5, seeds=[1, 2, 3, 4, 5], success_floor=3),
    )


# -- two chambers joined by a bent slot ---------------------------------------

SLOT = dict(radius=0.02, half_y=0.12, half_z=0.15, top=0.0, leg_z=-0.08, bend_x=0.10, length=0.20, far=-0.20)


def slot_block() -> TriMesh:
    """Enclosure split into two chambers; the only connection is a channel with one right-angle bend."""
    s = SLOT
    h = s["radius"] + CLEARANCE
    Y, Z, zt, zl, xb, X, X0, T = s["half_y"], s["half_z"], s["top"], s["leg_z"], s["bend_x"], s["length"], s["far"], 0.01
    block = [
        ((0.0, -Y, -Z), (X, -h, zt)),
        ((0.0, h, -Z), (X, Y, zt)),
        ((0.0, -h, -Z), (X, h, zl - h)),
        ((0.0, -h, zl + h), (xb - h, h, zt)),
        ((xb + h, -h, zl - h), (X, h, zt)),
        ((0.0, -Y, zt), (0.02, Y, Z)),  # divider above the block
    ]
    enclosure = [
        ((X0 - T, -Y, -Z), (X0, Y, Z)),
        ((X, -Y, -Z), (X + T, Y, Z)),
        ((X0 - T, -Y - T, -Z - T), (X + T, -Y, Z + T)),
        ((X0 - T, Y, -Z - T), (X + T, Y + T, Z + T)),
        ((X0 - T, -Y, -Z - T), (X + T, Y, -Z)),
        ((X0 - T, -Y, Z), (X + T, Y, Z + T)),
    ]
    return boxes(block + enclosure)


def narrow_slot() -> ScenarioSpec:
    s = SLOT
    zl, xb = s["leg_z"], s["bend_x"]
    tilt = math.radians(-60.0)
    start = _pose(-0.12, 0.05, 0.0, y=0.05)
    mouth = _pose(-0.05, zl, 0.0)
    leg1 = _pose(xb - 0.03, zl, 0.0)
    bend = _pose(xb, zl, tilt / 2)
    leg2 = _pose(xb, zl + 0.03, tilt)
    exit_ = _pose(xb, 0.04, tilt)
    goal = _pose(0.15, 0.09, tilt, y=-0.05)
    reference = _polyline([start, mouth, leg1, bend, leg2, exit_, goal], 0.003)
    return ScenarioSpec(
        name="narrow_slot",
        moving=icosphere(s["radius"], 1),
        fixed=slot_block(),
        world_T_G=pose_vector_to_transform((0.40, -0.12, 0.80, 0.0, 0.0, 0.0)),
        start_in_G=start,
        goal_in_G=goal,
        reference_in_G=reference,
        demo=dict(
            dof="pitch",
            degree=9,
            candidates=5,
            samples=60,
            noise=(0.0002, 0.002),
            phases=[(0, 0.5), (52, 1.2), (92, 1.2), (112, 1.0), (142, 1.2), (-1, 1.0), (-1, 0.6)],
            region_phases=(1, 6),
        ),
        planner=dict(t_e=2.0, max_iterations=0),
        bench=dict(trials=5, seeds=[1, 2, 3, 4, 5], success_floor=5),
    )


def trivial() -> ScenarioSpec:
    start = RigidTransform.from_translation((0.0, 0.0, 0.1))
    goal = RigidTransform.from_axis_angle((0, 0, 1), 0.5, (0.2, 0.1, 0.15))
    reference = _polyline([start, goal], 0.01)
    return ScenarioSpec(
        name="trivial",
        moving=boxes([((-0.02, -0.02, -0.02), (0.02, 0.02, 0.02))]),
        fixed=None,
        world_T_G=pose_vector_to_transform((0.35, -0.15, 0.75, 0.0, 0.0, 0.0)),
        start_in_G=start,
        goal_in_G=goal,
        reference_in_G=reference,
        demo=dict(dof="pitch", degree=3, candidates=3, samples=20, noise=(0.0, 0.0), phases=[(-1, 2.0)]),
        planner=dict(t_e=5.0),
        bench=dict(trials=5, seeds=[1, 2, 3, 4, 5], success_floor=5),
    )


# -- demonstrations ---------------------------------------------------------


def _phase_progress(t: np.ndarray, phases: list[tuple[int, float]], n_ref: int) -> np.ndarray:
    """Reference-path index reached at each time for a stop-and-go motion.

    Each phase ``(end_index, duration)`` moves from the previous end index
    to ``end_index`` with a minimum-jerk profile, so the demonstrator comes
    briefly to rest between phases.
    """
    ends = [0] + [min(e if e >= 0 else n_ref + e, n_ref - 1) for e, _ in phases]
    bounds = np.concatenate([[0.0], np.cumsum([d for _, d in phases])])
    out = np.empty_like(t)
    for k, tk in enumerate(t):
        i = int(np.clip(np.searchsorted(bounds, tk, side="right") - 1, 0, len(phases) - 1))
        u = np.clip((tk - bounds[i]) / (bounds[i + 1] - bounds[i]), 0.0, 1.0)
        out[k] = ends[i] + (ends[i + 1] - ends[i]) * (10 * u**3 - 15 * u**4 + 6 * u**5)
    return out


def synthesize_demo(spec: ScenarioSpec, seed: int = 7) -> tuple[np.ndarray, list[RigidTransform]]:
    """Re-time the reference path and add tracking noise; returns (times, relative poses)."""
    d = spec.demo
    rng = np.random.default_rng(seed)
    n = d["samples"]
    ref = spec.reference_in_G
    phases = d.get("phases") or [(len(ref) - 1, 1.0)]
    duration = sum(dt for _, dt in phases)
    t = np.linspace(0.0, duration, n)
    progress = _phase_progress(t, phases, len(ref))
    poses = []
    for v in progress:
        i = min(int(v), len(ref) - 2)
        poses.append(interpolate(ref[i], ref[i + 1], float(v - i)))
    sigma_t, sigma_r = d["noise"]
    noisy = []
    for k, p in enumerate(poses):
        if k in (0, n - 1) or sigma_t == 0:
            noisy.append(p)
            continue
        jitter = RigidTransform.from_axis_angle(rng.normal(size=3), rng.normal(scale=sigma_r), rng.normal(scale=sigma_t, size=3))
        noisy.append(compose(p, jitter))
    return t, noisy


def region_of_interest(spec: ScenarioSpec) -> tuple[float, float] | None:
    """Time window spanning phases ``first`` up to (not including) ``stop`` of ``region_phases``."""
    span = spec.demo.get("region_phases")
    if span is None:
        return None
    first, stop = span
    durations = [d for _, d in spec.demo["phases"]]
    return float(sum(durations[:first])), float(sum(durations[:stop]))


# -- writing ----------------------------------------------------------------


def _pv(t: RigidTransform) -> list[float]:
    return [round(float(v), 9) for v in transform_to_pose_vector(t)[0]]


def write_scenario(spec: ScenarioSpec, root: Path, chain_file: str = "../../chains/default_chain.yaml") -> Path:
    out = root / spec.name
    (out / "meshes").mkdir(parents=True, exist_ok=True)
    save_obj(spec.moving, out / "meshes" / "object.obj", comment=f"{spec.name} moving object, meters")
    obstacles = []
    if spec.fixed is not None:
        save_obj(spec.fixed, out / "meshes" / "fixed.obj", comment=f"{spec.name} fixed part, meters")
        obstacles.append({"mesh": "meshes/fixed.obj", "pose": "world_T_G"})
    for name, mesh, pose in spec.extra_obstacles:
        save_obj(mesh, out / "meshes" / f"{name}.obj", comment=f"{spec.name} {name}, meters")
        obstacles.append({"mesh": f"meshes/{name}.obj", "pose": _pv(pose)})

    times, rel = synthesize_demo(spec)
    world_T_G = spec.world_T_G
    if spec.log_world_frame:
        write_pose_log(out / "demo.csv", times, [compose(world_T_G, p) for p in rel], world_T_G=[world_T_G] * len(times))
    else:
        write_pose_log(out / "demo.csv", times, rel)
    reference_file = out / "reference_path.csv"
    write_pose_log(reference_file, np.arange(len(spec.reference_in_G), dtype=float),
                   [compose(world_T_G, p) for p in spec.reference_in_G])

    demo = {k: v for k, v in spec.demo.items() if k in ("dof", "degree", "candidates")}
    region = region_of_interest(spec)
    if region is not None:
        demo["region"] = [round(region[0], 6), round(region[1], 6)]
    config = {
        "name": spec.name,
        "trivial": spec.fixed is None,
        "scene": {"obstacles": obstacles, "moving": "meshes/object.obj"},
        "world_T_G": _pv(world_T_G),
        "start": _pv(compose(world_T_G, spec.start_in_G)),
        "goal": _pv(compose(world_T_G, spec.goal_in_G)),
        "demo": {"log": "demo.csv", **demo},
        "planner": spec.planner,
        "kinematics": {"chain": chain_file, "grasp": [float(v) for v in spec.grasp]},
        "bench": spec.bench,
        "reference_path": "reference_path.csv",
    }
    path = out / "scenario.yaml"
    path.write_text(yaml.safe_dump(config, sort_keys=False))
    return path


ALL = {"l_insertion": l_insertion, "tenon_insertion": tenon_insertion, "narrow_slot": narrow_slot, "trivial": trivial}


def main(argv: list[str] | None = None) -> None:
    argv = sys.argv[1:] if argv is None else argv
    root = Path(argv[0]) if argv else Path(__file__).parent / "data" / "scenarios"
    names = argv[1:] or list(ALL)
    for name in names:
        print("wrote", write_scenario(ALL[name](), root))


if __name__ == "__main__":
    main()
