import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from demoplan.demo import (
    DemoError,
    DemoTrajectory,
    PoseSample,
    RankConfig,
    derivative_scores,
    fit_dof_curve,
    fit_polynomial,
    ingest_pose_log,
    rank_key_poses,
    ranking_order,
    read_pose_log,
    to_world_keyposes,
    write_pose_log,
)
from demoplan.geom import RigidTransform, compose, pose_vector_to_transform, random_quaternion, rotation_angle_between


def rel_record(t, pose):
    x, y, z, qw, qx, qy, qz = pose.as_array()
    return dict(t=t, x=x, y=y, z=z, qw=qw, qx=qx, qy=qy, qz=qz)


def world_record(t, g, l):
    rec = {"t": t}
    for suffix, p in (("_G", g), ("_L", l)):
        for k, v in zip(("x", "y", "z", "qw", "qx", "qy", "qz"), p.as_array()):
            rec[k + suffix] = v
    return rec


def pitch_trajectory(times, pitch):
    return DemoTrajectory(tuple(PoseSample(float(t), pose_vector_to_transform((0, 0, 0, 0, p, 0))) for t, p in zip(times, pitch)))


def test_identity_records():
    ident = RigidTransform.identity()
    traj = ingest_pose_log([rel_record(0, ident), rel_record(1, ident)])
    assert len(traj) == 2
    assert np.allclose(traj.dof_values("x"), 0)


def test_self_relative_world_records():
    g = RigidTransform.from_axis_angle((1, 2, 3), 0.4, (0.3, -0.1, 0.2))
    traj = ingest_pose_log([world_record(0, g, g), world_record(1, g, g)])
    for s in traj.samples:
        assert rotation_angle_between(s.relative_pose, RigidTransform.identity()) < 1e-12
        assert np.linalg.norm(s.relative_pose.translation) < 1e-12


def test_world_records_match_matrix_oracle():
    g = RigidTransform.from_axis_angle((0, 0, 1), math.pi / 2, (0.5, 0, 0))
    l = RigidTransform.from_translation((0.5, 1.0, 0.2))
    traj = ingest_pose_log([world_record(0, g, l), world_record(1, g, l)])
    expected = np.linalg.inv(g.as_matrix()) @ l.as_matrix()
    np.testing.assert_allclose(traj.samples[0].relative_pose.as_matrix(), expected, atol=1e-12)


def test_ingest_rejects_bad_input():
    ident = RigidTransform.identity()
    with pytest.raises(DemoError):
        ingest_pose_log([rel_record(0, ident)])
    with pytest.raises(DemoError):
        ingest_pose_log([rel_record(0, ident), world_record(1, ident, ident)])
    with pytest.raises(DemoError):
        ingest_pose_log([rel_record(0, ident), rel_record(1, ident)], units=("mm", "s"))
    bad = rel_record(0.5, ident)
    bad["x"] = float("nan")
    traj = ingest_pose_log([rel_record(0, ident), bad, rel_record(1, ident)])
    assert traj.rejected == 1 and len(traj) == 2


def test_duplicates_collapse_to_last_and_sort():
    a = RigidTransform.from_translation((1, 0, 0))
    b = RigidTransform.from_translation((2, 0, 0))
    traj = ingest_pose_log([rel_record(1, a), rel_record(0, a), rel_record(1, b)])
    assert list(traj.times) == [0.0, 1.0]
    assert traj.samples[1].relative_pose.translation[0] == 2.0


def test_pose_log_file_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    poses = [RigidTransform(random_quaternion(rng), rng.normal(size=3)) for _ in range(5)]
    path = tmp_path / "demo.csv"
    write_pose_log(path, range(5), poses)
    traj = read_pose_log(path)
    for s, p in zip(traj.samples, poses):
        assert rotation_angle_between(s.relative_pose, p) < 1e-8
    path.write_text(path.read_text().replace("# units: m,s", "# units: mm,s"))
    with pytest.raises(DemoError):
        read_pose_log(path)


def test_to_world_examples():
    rng = np.random.default_rng(1)
    poses = [RigidTransform(random_quaternion(rng), rng.normal(size=3)) for _ in range(3)]
    traj = ingest_pose_log([rel_record(i, p) for i, p in enumerate(poses)])
    for (t, w), p in zip(to_world_keyposes(traj, RigidTransform.identity()), poses):
        assert rotation_angle_between(w, p) < 1e-12
    g = RigidTransform(random_quaternion(rng), rng.normal(size=3))
    ident = ingest_pose_log([rel_record(0, RigidTransform.identity()), rel_record(1, RigidTransform.identity())])
    assert all(np.allclose(w.as_matrix(), g.as_matrix()) for _, w in to_world_keyposes(ident, g))
    for (t, w), p in zip(to_world_keyposes(traj, g), poses):
        np.testing.assert_allclose(w.as_matrix(), g.as_matrix() @ p.as_matrix(), atol=1e-12)


def test_world_log_reproduces_observed_object_pose():
    rng = np.random.default_rng(2)
    g = RigidTransform(random_quaternion(rng), rng.normal(size=3))
    ls = [RigidTransform(random_quaternion(rng), rng.normal(size=3)) for _ in range(4)]
    traj = ingest_pose_log([world_record(i, g, l) for i, l in enumerate(ls)])
    for (t, w), l in zip(to_world_keyposes(traj, g), ls):
        assert np.linalg.norm(w.translation - l.translation) < 1e-9
        assert rotation_angle_between(w, l) < 1e-9


def test_constant_fit():
    fit = fit_polynomial(np.linspace(0, 1, 10), np.full(10, 0.5), "x", 3)
    np.testing.assert_allclose(fit.coefficients, [0.5, 0, 0, 0], atol=1e-12)
    assert fit.rms_residual < 1e-12


def test_cubic_fit_matches_high_precision_normal_equations():
    t = np.linspace(-1.3, 2.1, 20)
    y = t**3 - 2 * t
    fit = fit_polynomial(t, y, "x", 3)
    mpmath.mp.dps = 50
    t0, t1 = mpmath.mpf(float(t.min())), mpmath.mpf(float(t.max()))
    rows = [[((2 * mpmath.mpf(float(ti)) - t0 - t1) / (t1 - t0)) ** k for k in range(4)] for ti in t]
    V = mpmath.matrix(rows)
    rhs = mpmath.matrix([mpmath.mpf(float(ti)) ** 3 - 2 * mpmath.mpf(float(ti)) for ti in t])
    oracle = mpmath.lu_solve(V.T * V, V.T * rhs)
    np.testing.assert_allclose(fit.coefficients, [float(c) for c in oracle], atol=1e-6)


def test_fit_clamps_degree_and_rejects_zero_span():
    fit = fit_polynomial([0.0, 1.0, 2.0], [0.0, 1.0, 4.0], "x", 7)
    assert fit.degree == 2 and len(fit.coefficients) == 3
    with pytest.raises(DemoError):
        fit_polynomial([1.0, 1.0], [0.0, 1.0], "x", 1)


def test_fitted_derivative_matches_central_difference():
    rng = np.random.default_rng(4)
    t = np.linspace(0, 3, 40)
    fit = fit_polynomial(t, np.sin(2 * t) + 0.01 * rng.normal(size=40), "pitch", 7)
    h = 1e-6
    for ti in t[1:-1]:
        u = fit.normalize(ti)
        fd = (np.polynomial.polynomial.polyval(u + h, fit.coefficients) - np.polynomial.polynomial.polyval(u - h, fit.coefficients)) / (2 * h)
        assert abs(fd - fit.derivative_normalized(ti)) <= 1e-6 * max(1.0, abs(fd))


def test_square_law_scores_and_order():
    t = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    scores = derivative_scores(t, {"pitch": t**2}, RankConfig(degree=2))
    np.testing.assert_allclose(scores, [4, 2, 0, 2, 4], atol=1e-9)
    assert [t[i] for i in ranking_order(t, scores)] == [-2, 2, -1, 1, 0]


def test_rank_key_poses_scaled_square_law():
    t = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    traj = pitch_trajectory(t, 0.3 * t**2)
    ranked = rank_key_poses(traj, RankConfig(degree=2))
    assert [k.t for k in ranked] == [-2, 2, -1, 1, 0]
    assert [k.rank for k in ranked] == [1, 2, 3, 4, 5]
    np.testing.assert_allclose([k.score for k in ranked], [1.2, 1.2, 0.6, 0.6, 0.0], atol=1e-9)


def test_constant_trajectory_ranks_in_time_order():
    traj = pitch_trajectory(np.arange(6.0), np.full(6, 0.2))
    ranked = rank_key_poses(traj)
    assert [k.t for k in ranked] == list(range(6))
    assert all(k.score == 0.0 for k in ranked)


def test_region_and_candidate_limit():
    t = np.linspace(0, 1, 11)
    traj = pitch_trajectory(t, 0.5 * t**3)
    ranked = rank_key_poses(traj, RankConfig(region=(0.15, 0.65), max_candidates=3))
    assert len(ranked) == 3
    assert [k.t for k in ranked] == pytest.approx([0.6, 0.5, 0.4])


def test_all_mode_normalises_each_dof():
    t = np.linspace(0, 1, 11)
    # translation in meters changes fastest at the end, pitch at the start
    poses = [pose_vector_to_transform((10.0 * ti**2, 0, 0, 0, 0.01 * (1 - (1 - ti) ** 2), 0)) for ti in t]
    traj = DemoTrajectory(tuple(PoseSample(float(ti), p) for ti, p in zip(t, poses)))
    ranked = rank_key_poses(traj, RankConfig(dof="all", degree=2))
    # both DoFs peak at 2/std at an endpoint; equal after normalisation -> earlier time first
    assert [k.t for k in ranked[:2]] == [0.0, 1.0]


def test_world_frame_key_poses():
    t = np.linspace(0, 1, 5)
    traj = pitch_trajectory(t, 0.4 * t)
    g = RigidTransform.from_translation((1, 2, 3))
    ranked = rank_key_poses(traj, RankConfig(degree=1), planner_world_T_G=g)
    for k in ranked:
        rel = traj.samples[int(np.argmin(abs(t - k.t)))].relative_pose
        np.testing.assert_allclose(k.pose_in_world.as_matrix(), compose(g, rel).as_matrix(), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-1, 1), min_size=4, max_size=4),
    st.floats(-100, 100),
    st.floats(0.1, 10),
)
def test_ranking_invariances(coef, shift, scale):
    t = np.linspace(0, 2, 15)
    y = np.polynomial.polynomial.polyval(t - 1, coef)
    base = derivative_scores(t, {"pitch": y}, RankConfig(degree=5))
    order = ranking_order(t, base)
    shifted = derivative_scores(t + shift, {"pitch": y}, RankConfig(degree=5))
    assert ranking_order(t + shift, shifted) == order
    scaled = derivative_scores(t, {"pitch": scale * y}, RankConfig(degree=5))
    np.testing.assert_allclose(scaled, scale * base, rtol=1e-6, atol=1e-8 * scale)
    assert ranking_order(t, scaled) == order


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=1, max_size=6), st.integers(0, 3))
def test_noiseless_polynomial_derivative_exact(coef, extra):
    d = len(coef) - 1
    t = np.linspace(-0.7, 1.9, 25)
    fit = fit_polynomial(t, np.polynomial.polynomial.polyval(t, coef), "x", max(d, 1) + extra)
    # analytic derivative in the normalised domain: dy/du = dy/dt * dt/du
    half_span = (t.max() - t.min()) / 2
    analytic = np.polynomial.polynomial.polyval(t, np.polynomial.polynomial.polyder(coef)) * half_span
    np.testing.assert_allclose(fit.derivative_normalized(t), analytic, atol=1e-6)


def test_evenly_spread_candidates():
    t = np.linspace(0, 1, 21)
    traj = pitch_trajectory(t, 0.5 * t**2)
    ranked = rank_key_poses(traj, RankConfig(degree=2, candidates=5))
    assert sorted(k.t for k in ranked) == pytest.approx([0.0, 0.25, 0.5, 0.75, 1.0])
    assert [k.t for k in ranked] == pytest.approx([1.0, 0.75, 0.5, 0.25, 0.0])
