"""Demonstration pose logs: ingestion, world mapping, curve fitting and key-pose ranking.

A log holds the pose of the manipulated object relative to the fixed object,
either directly (``t,x,y,z,qw,qx,qy,qz``) or as a pair of world-frame
observations (the same seven fields suffixed ``_G`` and ``_L``). Key poses
are ranked by the magnitude of the time derivative of a least-squares
polynomial fitted to one pose parameter (pitch by default).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from .geom import RigidTransform, compose, invert, transform_to_pose_vector

DOFS = ("x", "y", "z", "roll", "pitch", "yaw")
ANGULAR = {"roll", "pitch", "yaw"}
POSE_FIELDS = ("x", "y", "z", "qw", "qx", "qy", "qz")
RELATIVE_COLUMNS = ("t",) + POSE_FIELDS
WORLD_COLUMNS = ("t",) + tuple(f"{f}_G" for f in POSE_FIELDS) + tuple(f"{f}_L" for f in POSE_FIELDS)
SUPPORTED_UNITS = ("m", "s")
MAX_DEGREE = 12


class DemoError(ValueError):
    pass


@dataclass(frozen=True)
class PoseSample:
    t: float
    relative_pose: RigidTransform  # object in the fixed-object frame


@dataclass(frozen=True)
class DemoTrajectory:
    samples: tuple[PoseSample, ...]
    recording_id: str = ""
    units: tuple[str, str] = SUPPORTED_UNITS
    rejected: int = 0
    # world-frame observations of the fixed object, when the log carried them
    observed_world_T_G: tuple[RigidTransform, ...] | None = None

    def __post_init__(self) -> None:
        if len(self.samples) < 2:
            raise DemoError(f"trajectory needs at least 2 samples, got {len(self.samples)}")
        t = self.times
        if np.any(np.diff(t) <= 0):
            raise DemoError("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    def dof_values(self, dof: str) -> np.ndarray:
        """One pose parameter over time; angles are unwrapped."""
        if dof not in DOFS:
            raise DemoError(f"unknown degree of freedom {dof!r}")
        k = DOFS.index(dof)
        vals = np.array([transform_to_pose_vector(s.relative_pose)[0][k] for s in self.samples])
        return np.unwrap(vals) if dof in ANGULAR else vals


@dataclass(frozen=True)
class PolynomialFit:
    """Least-squares polynomial in normalised time ``u = (2t - t_min - t_max) / (t_max - t_min)``.

    ``coefficients`` are ascending powers of ``u``.
    """

    dof: str
    degree: int
    coefficients: tuple[float, ...]
    domain: tuple[float, float]
    rms_residual: float

    def normalize(self, t) -> np.ndarray:
        t0, t1 = self.domain
        return (2.0 * np.asarray(t, dtype=float) - t0 - t1) / (t1 - t0)

    def __call__(self, t) -> np.ndarray:
        return P.polyval(self.normalize(t), self.coefficients)

    def derivative_normalized(self, t) -> np.ndarray:
        """d/du of the fitted curve."""
        return P.polyval(self.normalize(t), P.polyder(self.coefficients))

    def derivative(self, t) -> np.ndarray:
        """d/dt of the fitted curve, in DoF units per second."""
        t0, t1 = self.domain
        return self.derivative_normalized(t) * (2.0 / (t1 - t0))


@dataclass(frozen=True)
class KeyPose:
    pose_in_world: RigidTransform
    t: float
    score: float
    rank: int


@dataclass(frozen=True)
class RankConfig:
    """``dof`` is one of DOFS or ``"all"``; ``region`` limits the ranked samples in time.

    ``candidates`` picks that many samples spread evenly (by index) over the
    region before ranking, mimicking a demonstration captured as a handful of
    discrete key poses. ``max_candidates`` truncates the ranked list instead.
    """

    dof: str = "pitch"
    degree: int = 7
    region: tuple[float, float] | None = None
    max_candidates: int | None = None
    candidates: int | None = None

    def __post_init__(self) -> None:
        if self.dof != "all" and self.dof not in DOFS:
            raise DemoError(f"unknown degree of freedom {self.dof!r}")
        if not 1 <= self.degree <= MAX_DEGREE:
            raise DemoError(f"degree must be in 1..{MAX_DEGREE}, got {self.degree}")
        for name in ("max_candidates", "candidates"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise DemoError(f"{name} must be positive")


def _transform_from(rec: Mapping[str, float], suffix: str = "") -> RigidTransform:
    g = lambda f: rec[f + suffix]  # noqa: E731
    return RigidTransform(np.array([g("qw"), g("qx"), g("qy"), g("qz")]), np.array([g("x"), g("y"), g("z")]))


def _record_shape(rec: Mapping[str, object]) -> str:
    keys = set(rec)
    if set(WORLD_COLUMNS) <= keys:
        return "world"
    if set(RELATIVE_COLUMNS) <= keys:
        return "relative"
    raise DemoError(f"record has neither pose-log schema: columns {sorted(keys)}")


def ingest_pose_log(
    records: Iterable[Mapping[str, object]],
    units: Sequence[str] = SUPPORTED_UNITS,
    recording_id: str = "",
) -> DemoTrajectory:
    """Build a trajectory of relative poses from raw records.

    World-frame records are converted with ``invert(world_T_G) ∘ world_T_L``.
    Records with non-finite fields are dropped and counted; for repeated
    timestamps the last record wins.
    """
    if tuple(u.strip() for u in units) != SUPPORTED_UNITS:
        raise DemoError(f"unsupported units {tuple(units)}; expected {SUPPORTED_UNITS}")
    shape = None
    by_time: dict[float, tuple[RigidTransform, RigidTransform | None]] = {}
    rejected = 0
    for rec in records:
        s = _record_shape(rec)
        if shape is None:
            shape = s
        elif s != shape:
            raise DemoError("mixed record shapes in one log")
        cols = WORLD_COLUMNS if s == "world" else RELATIVE_COLUMNS
        try:
            vals = {c: float(rec[c]) for c in cols}
        except (TypeError, ValueError):
            rejected += 1
            continue
        if not all(math.isfinite(v) for v in vals.values()):
            rejected += 1
            continue
        try:
            if s == "world":
                wg, wl = _transform_from(vals, "_G"), _transform_from(vals, "_L")
                by_time[vals["t"]] = (compose(invert(wg), wl), wg)
            else:
                by_time[vals["t"]] = (_transform_from(vals), None)
        except ValueError:
            # zero quaternion
            rejected += 1
    if len(by_time) < 2:
        raise DemoError(f"need at least 2 valid records, got {len(by_time)} ({rejected} rejected)")
    times = sorted(by_time)
    samples = tuple(PoseSample(t, by_time[t][0]) for t in times)
    observed = tuple(by_time[t][1] for t in times) if shape == "world" else None
    return DemoTrajectory(samples, recording_id, SUPPORTED_UNITS, rejected, observed)


def read_pose_log(path: str | Path) -> DemoTrajectory:
    """Parse a delimiter-separated pose log with a ``# units: m,s`` header comment."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    units = None
    body = []
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith("#"):
            key, _, value = stripped[1:].partition(":")
            if key.strip().lower() == "units":
                units = tuple(u.strip() for u in value.split(","))
            continue
        if stripped:
            body.append(line)
    if units is None:
        raise DemoError(f"{path}: missing '# units: m,s' header")
    if not body:
        raise DemoError(f"{path}: no header line")
    try:
        dialect = csv.Sniffer().sniff(body[0], delimiters=",;\t ")
    except csv.Error:
        dialect = csv.excel
    reader = csv.DictReader(io.StringIO("\n".join(body)), dialect=dialect, skipinitialspace=True)
    return ingest_pose_log(list(reader), units, recording_id=path.stem)


def write_pose_log(path: str | Path, times, poses: Sequence[RigidTransform], world_T_G: Sequence[RigidTransform] | None = None) -> None:
    lines = ["# units: m,s"]
    if world_T_G is None:
        lines.append(",".join(RELATIVE_COLUMNS))
        for t, p in zip(times, poses):
            lines.append(",".join(f"{v:.9f}" for v in [t, *p.as_array()]))
    else:
        lines.append(",".join(WORLD_COLUMNS))
        for t, g, p in zip(times, world_T_G, poses):
            lines.append(",".join(f"{v:.9f}" for v in [t, *g.as_array(), *p.as_array()]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def to_world_keyposes(traj: DemoTrajectory, planner_world_T_G: RigidTransform) -> list[tuple[float, RigidTransform]]:
    """Map each relative pose to the planner world: ``world_T_G ∘ G_T_L``."""
    return [(s.t, compose(planner_world_T_G, s.relative_pose)) for s in traj.samples]


def fit_polynomial(t, y, dof: str, degree: int = 7) -> PolynomialFit:
    """Least-squares fit of samples ``y(t)``; degree is clamped to ``len(t) - 1``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    degree = min(int(degree), len(t) - 1)
    if degree < 1:
        raise DemoError("degree must be at least 1")
    t0, t1 = float(t.min()), float(t.max())
    if not t1 > t0:
        raise DemoError("rank-deficient fit: zero time span")
    u = (2.0 * t - t0 - t1) / (t1 - t0)
    V = np.vander(u, degree + 1, increasing=True)
    coef, _, rank, _ = np.linalg.lstsq(V, y, rcond=None)
    if rank < degree + 1:
        raise DemoError(f"rank-deficient fit for {dof} (rank {rank} < {degree + 1})")
    resid = y - V @ coef
    return PolynomialFit(dof, degree, tuple(float(c) for c in coef), (t0, t1), float(np.sqrt(np.mean(resid**2))))


def fit_dof_curve(traj: DemoTrajectory, dof: str, degree: int = 7) -> PolynomialFit:
    return fit_polynomial(traj.times, traj.dof_values(dof), dof, degree)


def _snap(scores: np.ndarray, floor: float) -> np.ndarray:
    """Quantise scores so that round-off never decides an order; ties stay ties."""
    tol = 1e-9 * max(float(np.max(scores, initial=0.0)), floor)
    if tol == 0.0:
        return np.zeros_like(scores)
    return np.round(scores / tol) * tol


def derivative_scores(t, values: Mapping[str, np.ndarray], config: RankConfig) -> np.ndarray:
    """|d/dt| of the fitted curve at each sample time.

    ``values`` maps DoF name to its samples. In ``"all"`` mode each DoF's
    derivative is divided by that DoF's sample standard deviation and the
    maximum over DoFs is taken.
    """
    t = np.asarray(t, dtype=float)
    span = float(t.max() - t.min())
    if config.dof != "all":
        y = np.asarray(values[config.dof], dtype=float)
        fit = fit_polynomial(t, y, config.dof, config.degree)
        scale = (float(np.max(np.abs(y))) + float(np.ptp(y))) / span
        return _snap(np.abs(fit.derivative(t)), scale)
    per_dof = []
    for dof, y in values.items():
        sd = float(np.std(y, ddof=1))
        if sd == 0.0:
            continue
        per_dof.append(np.abs(fit_polynomial(t, y, dof, config.degree).derivative(t)) / sd)
    if not per_dof:
        return np.zeros(len(t))
    return _snap(np.max(per_dof, axis=0), 1.0 / span)


def ranking_order(t, scores: np.ndarray) -> list[int]:
    return sorted(range(len(scores)), key=lambda i: (-scores[i], t[i]))


def rank_key_poses(
    traj: DemoTrajectory,
    config: RankConfig = RankConfig(),
    planner_world_T_G: RigidTransform | None = None,
) -> list[KeyPose]:
    """Key poses sorted by descending derivative magnitude, earlier time first on ties."""
    dofs = DOFS if config.dof == "all" else (config.dof,)
    scores = derivative_scores(traj.times, {d: traj.dof_values(d) for d in dofs}, config)
    world_T_G = planner_world_T_G or RigidTransform.identity()
    world = to_world_keyposes(traj, world_T_G)
    idx = np.arange(len(traj))
    if config.region is not None:
        lo, hi = config.region
        idx = idx[(traj.times >= lo) & (traj.times <= hi)]
        if len(idx) == 0:
            raise DemoError(f"region {config.region} contains no samples")
    if config.candidates is not None and config.candidates < len(idx):
        idx = idx[np.unique(np.round(np.linspace(0, len(idx) - 1, config.candidates)).astype(int))]
    order = [int(idx[k]) for k in ranking_order(traj.times[idx], scores[idx])]
    if config.max_candidates is not None:
        order = order[: config.max_candidates]
    return [KeyPose(world[i][1], traj.samples[i].t, float(scores[i]), r + 1) for r, i in enumerate(order)]


@dataclass(frozen=True)
class FitTrace:
    dof: str
    t: np.ndarray
    raw: np.ndarray
    fitted: np.ndarray
    derivative: np.ndarray
    fit: PolynomialFit = field(repr=False)


def fit_trace(traj: DemoTrajectory, dof: str, degree: int = 7) -> FitTrace:
    """Per-sample raw value, fitted value and derivative, for external plotting."""
    fit = fit_dof_curve(traj, dof, degree)
    t = traj.times
    return FitTrace(dof, t, traj.dof_values(dof), fit(t), fit.derivative(t), fit)
