import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from demoplan.demo import KeyPose
from demoplan.geom import RigidTransform, Scene, box, boxes, interpolate, pose_in_collision
from demoplan.geom.collision import _bisection_order
from demoplan.planner import (
    EXHAUSTED,
    INFEASIBLE,
    SUCCESS,
    TIMEOUT,
    ObjectPath,
    PlannerConfig,
    PlanningError,
    PlanningProblem,
    composite_distance,
    densify,
    edge_is_free,
    plan_segment,
    plan_with_demonstration,
    repair_key_pose,
    validate_path,
)

CUBE = box((-0.01, -0.01, -0.01), (0.01, 0.01, 0.01))  # 2 cm object
I = RigidTransform.identity()


def at(x, y=0.0, z=0.0):
    return RigidTransform.from_translation((x, y, z))


def empty_scene():
    return Scene((), CUBE)


def wall_with_slot(width):
    """A 1 cm thick wall in the x=0 plane with a square slot ``width`` wide around the origin."""
    h, big = width / 2, 0.2
    wall = boxes([
        ((-0.005, -big, -big), (0.005, -h, big)),
        ((-0.005, h, -big), (0.005, big, big)),
        ((-0.005, -h, -big), (0.005, h, -h)),
        ((-0.005, -h, h), (0.005, h, big)),
    ])
    return Scene(((wall, I),), CUBE)


def solid_wall():
    return Scene(((box((-0.005, -0.2, -0.2), (0.005, 0.2, 0.2)), I),), CUBE)


def assert_connects(path, start, goal):
    assert composite_distance(path[0], start, 0.1) < 1e-12
    assert composite_distance(path[-1], goal, 0.1) < 1e-12


# -- metric and configuration -----------------------------------------------


def test_composite_distance_examples():
    assert composite_distance(at(0), at(3, 4), 0.1) == pytest.approx(5.0)
    quarter = RigidTransform.from_axis_angle((0, 0, 1), math.pi / 2)
    assert composite_distance(I, quarter, 0.5) == pytest.approx(0.7854, abs=1e-4)
    flipped = RigidTransform(-quarter.rotation, quarter.translation)
    assert composite_distance(I, flipped, 0.5) == pytest.approx(0.7854, abs=1e-4)
    with pytest.raises(PlanningError):
        composite_distance(I, quarter, 0.0)


@pytest.mark.parametrize("kwargs", [
    dict(t_e=0.0),
    dict(goal_bias=1.5),
    dict(step_size=(0.0, 0.1)),
    dict(validation_resolution=0.5),
    dict(dynamic_domain_radius=-1.0),
    dict(repair_radius_schedule=(0.02, 0.01)),
])
def test_config_validation(kwargs):
    with pytest.raises(PlanningError):
        PlannerConfig(**kwargs)


def test_densify_respects_both_steps():
    a, b = at(0), RigidTransform.from_axis_angle((0, 1, 0), 1.0, (0.1, 0, 0))
    out = densify([a, b], (0.02, 0.2))
    assert_connects(out, a, b)
    for p, q in zip(out, out[1:]):
        assert np.linalg.norm(p.translation - q.translation) <= 0.02 + 1e-12
        assert composite_distance(p, q, 1.0) - np.linalg.norm(p.translation - q.translation) <= 0.2 + 1e-12


# -- single segment ----------------------------------------------------------


def test_identical_start_and_goal_gives_single_waypoint():
    res = plan_segment(at(0.1), at(0.1), solid_wall(), PlannerConfig())
    assert res.status == SUCCESS and len(res.waypoints) == 1


def test_empty_scene_gives_straight_line():
    start = at(0)
    goal = RigidTransform.from_axis_angle((0, 0, 1), 0.7, (0.3, 0.1, -0.05))
    res = plan_segment(start, goal, empty_scene(), PlannerConfig(rng_seed=3))
    assert res.status == SUCCESS
    path = list(res.waypoints)
    assert_connects(path, start, goal)
    # every waypoint sits on the straight interpolation between the endpoints
    total = composite_distance(start, goal, 0.1)
    for p in path:
        s = composite_distance(start, p, 0.1) / total
        assert composite_distance(p, interpolate(start, goal, s), 0.1) < 1e-9


def test_endpoint_in_collision_is_infeasible():
    res = plan_segment(at(0), at(0.1), solid_wall(), PlannerConfig())
    assert res.status == INFEASIBLE


def test_corridor_slightly_wider_than_object():
    scene = wall_with_slot(0.024)  # 1.2 x the 2 cm cube
    start, goal = at(-0.08, 0.05), at(0.08, -0.04)
    cfg = PlannerConfig(rng_seed=11, max_iterations=0, t_e=10.0)
    res = plan_segment(start, goal, scene, cfg)
    assert res.status == SUCCESS
    path = list(res.waypoints)
    assert_connects(path, start, goal)
    ok, violation = validate_path(path, scene, cfg.validation_resolution, brute_force=True)
    assert ok, violation


def test_sealed_wall_times_out():
    cfg = PlannerConfig(t_e=0.3, max_iterations=0, sampling_bounds=((-0.1, -0.1, -0.1), (0.1, 0.1, 0.1)))
    big = Scene(((box((-0.005, -0.5, -0.5), (0.005, 0.5, 0.5)), I),), CUBE)
    res = plan_segment(at(-0.05), at(0.05), big, cfg)
    assert res.status == TIMEOUT


def test_iteration_budget_exhausts():
    cfg = PlannerConfig(max_iterations=50, sampling_bounds=((-0.1, -0.1, -0.1), (0.1, 0.1, 0.1)))
    big = Scene(((box((-0.005, -0.5, -0.5), (0.005, 0.5, 0.5)), I),), CUBE)
    res = plan_segment(at(-0.05), at(0.05), big, cfg)
    assert res.status in (EXHAUSTED, TIMEOUT) and res.iterations <= 50


def test_probabilistic_completeness_smoke():
    cfg = dict(dynamic_domain_radius=0.0, goal_bias=0.0, t_e=10.0)
    start = RigidTransform.from_axis_angle((1, 0, 0), 2.0, (0, 0, 0))
    goal = RigidTransform.from_axis_angle((0, 1, 0), -1.0, (0.2, 0.3, 0.1))
    for seed in range(20):
        res = plan_segment(start, goal, empty_scene(), PlannerConfig(rng_seed=seed, **cfg))
        assert res.status == SUCCESS
        assert_connects(list(res.waypoints), start, goal)


# -- validation --------------------------------------------------------------


def test_validate_path_examples():
    scene = solid_wall()
    assert validate_path([at(-0.05), at(-0.05, 0.1)], scene, 0.002) == (True, None)
    ok, v = validate_path([at(-0.05, 0.1), at(-0.05), at(0.05)], scene, 0.002)
    assert not ok and v.segment == 1 and 0 < v.s < 1
    ok, v = validate_path([at(0), at(0.05)], scene, 0.002)
    assert not ok and (v.segment, v.s) == (0, 0.0)
    with pytest.raises(PlanningError):
        validate_path([], scene, 0.002)


def test_validation_catches_thin_obstacle_between_waypoints():
    sheet = Scene(((box((-0.0005, -0.2, -0.2), (0.0005, 0.2, 0.2)), I),), box((-0.001, -0.001, -0.001), (0.001, 0.001, 0.001)))
    assert not pose_in_collision(at(-0.05), sheet) and not pose_in_collision(at(0.05), sheet)
    assert validate_path([at(-0.05), at(0.05)], sheet, 0.001)[0] is False
    assert validate_path([at(-0.05), at(0.05)], sheet, 0.001, brute_force=True)[0] is False
    assert not edge_is_free(sheet, at(-0.05), at(0.05), PlannerConfig(validation_resolution=0.001))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 400))
def test_bisection_order_is_a_permutation_starting_at_the_end(n):
    order = _bisection_order(n)
    assert order[0] == n - 1
    assert sorted(order.tolist()) == list(range(n))


# -- repair -------------------------------------------------------------------


def test_repair_leaves_free_pose_alone():
    res = repair_key_pose(at(-0.05), solid_wall(), PlannerConfig())
    assert res.pose is at(-0.05) or composite_distance(res.pose, at(-0.05), 0.1) == 0.0
    assert res.samples == 0


def test_repair_finds_nearby_pose_for_shallow_penetration():
    scene = solid_wall()
    pose = at(-0.014)  # face at -0.004: 1 mm into the wall
    assert pose_in_collision(pose, scene)
    res = repair_key_pose(pose, scene, PlannerConfig(), np.random.default_rng(0))
    assert res.pose is not None and not pose_in_collision(res.pose, scene)
    assert res.radius <= 0.005
    assert composite_distance(res.pose, pose, 0.1) <= 0.005


def test_repair_gives_up_inside_enclosed_cavity():
    shell = boxes([((-0.05, -0.05, -0.05), (0.05, 0.05, -0.012)), ((-0.05, -0.05, 0.012), (0.05, 0.05, 0.05)),
                   ((-0.05, -0.05, -0.012), (0.05, -0.012, 0.012)), ((-0.05, 0.012, -0.012), (0.05, 0.05, 0.012)),
                   ((-0.05, -0.012, -0.012), (-0.012, 0.012, 0.012)), ((0.012, -0.012, -0.012), (0.05, 0.012, 0.012))])
    scene = Scene(((shell, I),), box((-0.02, -0.02, -0.02), (0.02, 0.02, 0.02)))
    res = repair_key_pose(I, scene, PlannerConfig(repair_samples_max=400), np.random.default_rng(0))
    assert res.pose is None and res.samples == 400


# -- outer loop ---------------------------------------------------------------


def test_problem_rejects_colliding_endpoints():
    with pytest.raises(PlanningError):
        PlanningProblem(solid_wall(), at(0), at(0.05))
    res = plan_with_demonstration(PlanningProblem(solid_wall(), at(0), at(0.05), check_endpoints=False))
    assert res.status == INFEASIBLE and res.path is None


def test_free_problem_needs_no_key_poses():
    kps = (KeyPose(at(0.05, 0.05), 1.0, 1.0, 1),)
    res = plan_with_demonstration(PlanningProblem(empty_scene(), at(0), at(0.1), kps))
    assert res.status == SUCCESS and res.used_key_pose_count == 0
    assert res.path.tags[0] == "start" and res.path.tags[-1] == "goal"


def slot_problem(key_poses, **cfg):
    """Start and goal either side of a slot too far off-axis for the tiny iteration budget."""
    scene = wall_with_slot(0.024)
    base = dict(max_iterations=30, dynamic_domain_radius=0.0, goal_bias=0.5, rng_seed=2)
    base.update(cfg)
    return PlanningProblem(scene, at(-0.12, 0.15, 0.1), at(0.12, -0.15, -0.1), tuple(key_poses), PlannerConfig(**base))


def test_key_poses_consumed_in_rank_order_and_placed_in_time_order():
    kps = [
        KeyPose(at(0.04), 3.0, 5.0, 1),
        KeyPose(at(-0.04), 1.0, 4.0, 2),
        KeyPose(at(0.0), 2.0, 3.0, 3),
    ]
    res = plan_with_demonstration(slot_problem(kps))
    assert [a.inserted_rank for a in res.attempts][: res.used_key_pose_count + 1] == [None, 1, 2, 3][: res.used_key_pose_count + 1]
    assert res.status == SUCCESS and res.used_key_pose_count >= 1
    key_tags = [t for t in res.path.tags if t.startswith("key_pose")]
    times = {"key_pose(1)": 3.0, "key_pose(2)": 1.0, "key_pose(3)": 2.0}
    assert [times[t] for t in key_tags] == sorted(times[t] for t in key_tags)
    assert validate_path(res.path, slot_problem([]).scene, 0.002, brute_force=True)[0]


def test_colliding_key_pose_is_repaired_and_tagged():
    kps = [KeyPose(at(-0.0145, 0.05), 1.0, 5.0, 1), KeyPose(at(0.04), 2.0, 4.0, 2), KeyPose(at(0.0), 3.0, 1.0, 3)]
    res = plan_with_demonstration(slot_problem(kps, max_iterations=10))
    assert 1 in res.repaired_key_pose_indices
    if res.path is not None:
        assert "repaired(1)" in res.path.tags


def test_exhausted_candidates_report_timeout():
    res = plan_with_demonstration(slot_problem([], max_iterations=5))
    assert res.status == TIMEOUT and res.path is None and res.message


def test_same_seed_same_path():
    kps = [KeyPose(at(0.04), 3.0, 5.0, 1), KeyPose(at(-0.04), 1.0, 4.0, 2)]
    a = plan_with_demonstration(slot_problem(kps))
    b = plan_with_demonstration(slot_problem(kps))
    assert a.status == b.status
    assert a.path.tags == b.path.tags
    assert all(np.array_equal(p.as_array(), q.as_array()) for p, q in zip(a.path.waypoints, b.path.waypoints))


def test_object_path_needs_one_tag_per_waypoint():
    with pytest.raises(PlanningError):
        ObjectPath([I, I], ["start"])
