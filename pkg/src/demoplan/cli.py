"""Scenario files, the end-to-end pipeline, the benchmark harness and the
``demoplan`` command line."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from . import kin
from .demo import DemoError, DemoTrajectory, KeyPose, RankConfig, fit_trace, rank_key_poses, read_pose_log
from .geom import MeshError, RigidTransform, Scene, TriMesh, load_obj, merge, pose_vector_to_transform, transform_to_pose_vector
from .planner import (
    SUCCESS,
    ObjectPath,
    PlannerConfig,
    PlanningError,
    PlanningProblem,
    PlanResult,
    Violation,
    plan_with_demonstration,
    validate_path,
    warmup,
)

BUNDLED = Path(__file__).parent / "data" / "scenarios"
PATH_FORMAT = "demoplan-object-path/1"


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it and ``__cause__`` holds the reason."""

    def __init__(self, stage: str, cause: BaseException | str) -> None:
        self.stage = stage
        self.cause = cause
        super().__init__(f"{stage}: {cause}")


class ArtifactParseError(ValueError):
    pass


# -- scenario files ---------------------------------------------------------


@dataclass(frozen=True)
class DemoSpec:
    log: Path
    dof: str = "pitch"
    degree: int = 7
    region: tuple[float, float] | None = None
    candidates: int | None = None

    def rank_config(self) -> RankConfig:
        return RankConfig(dof=self.dof, degree=self.degree, region=self.region, candidates=self.candidates)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    source: Path
    obstacles: tuple[tuple[Path, RigidTransform], ...]
    moving: Path
    world_T_G: RigidTransform
    start: RigidTransform
    goal: RigidTransform
    demo: DemoSpec | None
    planner: PlannerConfig
    chain: Path | None
    grasp: RigidTransform
    gripper: Path | None = None
    trivial: bool = False
    trials: int = 5
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    success_floor: int = 0
    check_arm: bool = False
    ik: kin.IKConfig = field(default_factory=kin.IKConfig)

    def scene(self) -> Scene:
        moving = _load_mesh(self.moving)
        if self.gripper is not None:
            moving = merge([moving, _load_mesh(self.gripper)])
        return Scene(tuple((_load_mesh(p), pose) for p, pose in self.obstacles), moving)

    def trajectory(self) -> DemoTrajectory:
        if self.demo is None:
            raise ConfigError(f"{self.name}: no demonstration configured")
        return read_pose_log(self.demo.log)

    def trial_seeds(self) -> list[int]:
        seeds = list(self.seeds)
        while len(seeds) < self.trials:
            seeds.append((seeds[-1] if seeds else 0) + 1)
        return seeds[: self.trials]


_mesh_cache: dict[Path, TriMesh] = {}


def _load_mesh(path: Path) -> TriMesh:
    if path not in _mesh_cache:
        _mesh_cache[path] = load_obj(path)
    return _mesh_cache[path]


def _pose(value, what: str, world_T_G: RigidTransform | None = None) -> RigidTransform:
    if value == "world_T_G" and world_T_G is not None:
        return world_T_G
    if not isinstance(value, (list, tuple)) or len(value) != 6:
        raise ConfigError(f"{what}: expected [x, y, z, roll, pitch, yaw], got {value!r}")
    try:
        return pose_vector_to_transform([float(v) for v in value])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what}: {exc}") from exc


def _existing(base: Path, rel, what: str) -> Path:
    if not isinstance(rel, str):
        raise ConfigError(f"{what}: expected a file path, got {rel!r}")
    p = (base / rel).resolve()
    if not p.is_file():
        raise ConfigError(f"{what}: file not found: {p}")
    return p


def _planner_config(raw: dict | None) -> PlannerConfig:
    raw = dict(raw or {})
    for key in ("step_size", "repair_radius_schedule"):
        if key in raw:
            raw[key] = tuple(float(v) for v in raw[key])
    if raw.get("sampling_bounds") is not None:
        raw["sampling_bounds"] = tuple(tuple(float(v) for v in b) for b in raw["sampling_bounds"])
    try:
        return PlannerConfig(**raw)
    except TypeError as exc:
        raise ConfigError(f"planner: {exc}") from exc
    except PlanningError as exc:
        raise ConfigError(f"planner: {exc}") from exc


def apply_overrides(raw: dict, overrides: Sequence[str]) -> dict:
    """Apply ``dotted.key=value`` strings; values are parsed as YAML scalars or lists."""
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not key=value")
        node = raw
        parts = key.strip().split(".")
        for part in parts[:-1]:
            child = node.get(part)
            if child is None:
                child = node[part] = {}
            elif not isinstance(child, dict):
                raise ConfigError(f"override {item!r}: {part} is not a section")
            node = child
        node[parts[-1]] = yaml.safe_load(value)
    return raw


def resolve_config_path(name_or_path: str) -> Path:
    """A scenario file path, or the name of a bundled scenario."""
    p = Path(name_or_path)
    if p.is_dir():
        p = p / "scenario.yaml"
    if p.is_file():
        return p
    bundled = BUNDLED / name_or_path / "scenario.yaml"
    if bundled.is_file():
        return bundled
    raise ConfigError(f"no scenario file or bundled scenario named {name_or_path!r}")


def load_scenario(path: str | Path, overrides: Sequence[str] = ()) -> ScenarioConfig:
    path = resolve_config_path(str(path)).resolve()
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    raw = apply_overrides(raw, overrides)
    return scenario_from_dict(raw, path)


def scenario_from_dict(raw: dict, source: Path) -> ScenarioConfig:
    base = source.parent
    scene = raw.get("scene") or {}
    world_T_G = _pose(raw.get("world_T_G", [0, 0, 0, 0, 0, 0]), "world_T_G")
    obstacles = tuple(
        (_existing(base, o.get("mesh"), f"scene.obstacles[{i}].mesh"),
         _pose(o.get("pose", [0, 0, 0, 0, 0, 0]), f"scene.obstacles[{i}].pose", world_T_G))
        for i, o in enumerate(scene.get("obstacles") or [])
    )
    moving = _existing(base, scene.get("moving"), "scene.moving")
    gripper = _existing(base, scene["gripper"], "scene.gripper") if scene.get("gripper") else None
    start = _pose(raw.get("start"), "start")
    goal = _pose(raw.get("goal"), "goal")
    trivial = bool(raw.get("trivial", False))
    if not trivial and np.allclose(start.as_array(), goal.as_array(), atol=1e-12):
        raise ConfigError("start equals goal; set 'trivial: true' if that is intended")

    demo = None
    if raw.get("demo"):
        d = raw["demo"]
        region = d.get("region")
        demo = DemoSpec(
            log=_existing(base, d.get("log"), "demo.log"),
            dof=str(d.get("dof", "pitch")),
            degree=int(d.get("degree", 7)),
            region=None if region is None else (float(region[0]), float(region[1])),
            candidates=None if d.get("candidates") is None else int(d["candidates"]),
        )
        try:
            demo.rank_config()
        except DemoError as exc:
            raise ConfigError(f"demo: {exc}") from exc

    kin_raw = raw.get("kinematics") or {}
    chain = _existing(base, kin_raw["chain"], "kinematics.chain") if kin_raw.get("chain") else None
    grasp = _pose(kin_raw.get("grasp", [0, 0, 0, math.pi, 0, 0]), "kinematics.grasp")
    ik_raw = dict(kin_raw.get("ik") or {})
    if "densify_step" in ik_raw:
        ik_raw["densify_step"] = tuple(float(v) for v in ik_raw["densify_step"])
    try:
        ik = kin.IKConfig(**ik_raw)
    except TypeError as exc:
        raise ConfigError(f"kinematics.ik: {exc}") from exc

    bench = raw.get("bench") or {}
    seeds = tuple(int(s) for s in bench.get("seeds", [1, 2, 3, 4, 5]))
    trials = int(bench.get("trials", len(seeds)))
    if trials < 1:
        raise ConfigError("bench.trials must be at least 1")
    return ScenarioConfig(
        name=str(raw.get("name", source.parent.name)),
        source=source,
        obstacles=obstacles,
        moving=moving,
        world_T_G=world_T_G,
        start=start,
        goal=goal,
        demo=demo,
        planner=_planner_config(raw.get("planner")),
        chain=chain,
        grasp=grasp,
        gripper=gripper,
        trivial=trivial,
        trials=trials,
        seeds=seeds,
        success_floor=int(bench.get("success_floor", 0)),
        check_arm=bool(kin_raw.get("check_arm", False)),
        ik=ik,
    )


# -- artifacts --------------------------------------------------------------


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _pose_list(t: RigidTransform) -> list[float]:
    return [float(v) for v in t.as_array()]


def path_document(config: ScenarioConfig, seed: int, result: PlanResult) -> dict:
    """Serializable form of a planned path; contains no timing so reruns compare byte-for-byte."""
    path = result.path
    return {
        "format": PATH_FORMAT,
        "scenario": config.name,
        "seed": seed,
        "status": result.status,
        "frame": "world",
        "pose_layout": ["x", "y", "z", "qw", "qx", "qy", "qz"],
        "validation_resolution": config.planner.validation_resolution,
        "rotation_weight": config.planner.rotation_weight,
        "candidate_key_poses": result.candidate_count,
        "used_key_poses": result.used_key_pose_count,
        "repaired_key_poses": list(result.repaired_key_pose_indices),
        "waypoints": [] if path is None else [
            {"pose": _pose_list(p), "tag": tag} for p, tag in zip(path.waypoints, path.tags)
        ],
    }


def read_path_file(path: str | Path) -> tuple[ObjectPath, dict]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArtifactParseError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != PATH_FORMAT:
        raise ArtifactParseError(f"{path}: not a {PATH_FORMAT} document")
    try:
        wps = doc["waypoints"]
        poses = [RigidTransform.from_array([float(v) for v in w["pose"]]) for w in wps]
        tags = [str(w.get("tag", "")) for w in wps]
        if any(len(w["pose"]) != 7 for w in wps):
            raise ValueError("each pose needs 7 numbers")
    except (KeyError, TypeError, ValueError) as exc:
        raise ArtifactParseError(f"{path}: malformed waypoint list ({exc})") from exc
    if not poses:
        raise ArtifactParseError(f"{path}: no waypoints")
    return ObjectPath(poses, tags), doc


def _csv(rows: Sequence[Sequence[Any]], header: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def key_pose_table(key_poses: Sequence[KeyPose]) -> str:
    rows = []
    for k in key_poses:
        pv = transform_to_pose_vector(k.pose_in_world)[0]
        rows.append([k.rank, f"{k.t:.6f}", f"{k.score:.9g}", *(f"{v:.6f}" for v in pv)])
    return _csv(rows, ["rank", "t", "score", "x", "y", "z", "roll", "pitch", "yaw"])


def fit_trace_table(traj: DemoTrajectory, spec: DemoSpec) -> str:
    from .demo import DOFS

    dofs = DOFS if spec.dof == "all" else (spec.dof,)
    rows = []
    for dof in dofs:
        tr = fit_trace(traj, dof, spec.degree)
        rows.extend(
            [dof, f"{t:.6f}", f"{r:.9g}", f"{f:.9g}", f"{d:.9g}"]
            for t, r, f, d in zip(tr.t, tr.raw, tr.fitted, tr.derivative)
        )
    return _csv(rows, ["dof", "t", "raw", "fitted", "derivative"])


def attempt_table(result: PlanResult) -> str:
    rows = [
        [a.attempt, "" if a.inserted_rank is None else a.inserted_rank, a.status,
         " ".join(f"{s:.4f}" for s in a.segment_times)]
        for a in result.attempts
    ]
    return _csv(rows, ["attempt", "inserted_rank", "status", "segment_seconds"])


# -- pipeline ---------------------------------------------------------------


@dataclass
class ScenarioRun:
    config: ScenarioConfig
    seed: int
    result: PlanResult
    key_poses: list[KeyPose]
    joints: kin.JointPathResult | None
    artifacts: dict[str, Path]
    arm_collisions: list[int] = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.result.status == SUCCESS and (self.joints is None or self.joints.success)


def rank_stage(config: ScenarioConfig) -> tuple[DemoTrajectory | None, list[KeyPose]]:
    if config.demo is None:
        return None, []
    try:
        traj = config.trajectory()
    except (DemoError, OSError) as exc:
        raise StageError("ingest", exc) from exc
    try:
        return traj, rank_key_poses(traj, config.demo.rank_config(), config.world_T_G)
    except DemoError as exc:
        raise StageError("rank", exc) from exc


def run_scenario(config: ScenarioConfig, seed: int, out_dir: str | Path | None = None) -> ScenarioRun:
    """Ingest, rank, plan and map to joints; write artifacts under ``out_dir/<name>/seed_<seed>``.

    Every file is written atomically. If any stage fails, the files this run
    has already written are removed and a :class:`StageError` is raised.
    """
    written: list[Path] = []
    try:
        try:
            scene = config.scene()
        except (MeshError, OSError) as exc:
            raise StageError("scene", exc) from exc
        traj, key_poses = rank_stage(config)
        cfg = replace(config.planner, rng_seed=seed)
        try:
            problem = PlanningProblem(scene, config.start, config.goal, tuple(key_poses), cfg)
            result = plan_with_demonstration(problem)
        except PlanningError as exc:
            raise StageError("plan", exc) from exc

        joints = None
        arm_hits: list[int] = []
        if result.status == SUCCESS and config.chain is not None:
            try:
                chain = kin.load_chain(config.chain)
                joints = kin.object_path_to_joint_path(
                    result.path.waypoints, kin.GraspTransform(config.grasp), chain, config.ik
                )
            except kin.KinematicsError as exc:
                raise StageError("kin", exc) from exc
            if joints.success and config.check_arm:
                arm_hits = kin.arm_collisions(chain, joints.joint_path, scene, skip_links=1)

        artifacts: dict[str, Path] = {}
        if out_dir is not None:
            root = Path(out_dir) / config.name / f"seed_{seed}"
            files = {
                "path": ("path.json", json.dumps(path_document(config, seed, result), indent=1) + "\n"),
                "attempts": ("attempts.csv", attempt_table(result)),
                "summary": ("summary.json", json.dumps(_summary(config, seed, result, joints, arm_hits), indent=1) + "\n"),
            }
            if key_poses:
                files["key_poses"] = ("key_poses.csv", key_pose_table(key_poses))
            if traj is not None:
                files["fit_trace"] = ("fit_trace.csv", fit_trace_table(traj, config.demo))
            if joints is not None and joints.success:
                files["joint_path"] = ("joint_path.txt", joints.joint_path.to_text())
            try:
                for key, (name, text) in files.items():
                    target = root / name
                    _atomic_write(target, text)
                    written.append(target)
                    artifacts[key] = target
            except OSError as exc:
                raise StageError("write", exc) from exc
        return ScenarioRun(config, seed, result, key_poses, joints, artifacts, arm_hits)
    except BaseException:
        for p in written:
            p.unlink(missing_ok=True)
        raise


def _summary(config, seed, result: PlanResult, joints, arm_hits) -> dict:
    out = {
        "scenario": config.name,
        "seed": seed,
        "status": result.status,
        "message": result.message,
        "candidate_key_poses": result.candidate_count,
        "used_key_poses": result.used_key_pose_count,
        "repaired_key_poses": result.repaired_key_pose_indices,
        "discarded_key_poses": result.discarded_key_pose_indices,
        "planning_seconds": round(result.elapsed, 4),
        "waypoints": 0 if result.path is None else len(result.path),
    }
    if joints is not None:
        out["joint_path"] = {
            "success": joints.success,
            "rows": len(joints.joint_path) if joints.success else 0,
            "failure_index": joints.failure_index,
            "reason": joints.reason,
        }
        if config.check_arm:
            out["arm_collision_rows"] = arm_hits
    return out


# -- benchmark --------------------------------------------------------------


@dataclass(frozen=True)
class BenchRow:
    scenario: str
    candidates: int
    trial: int
    seed: int
    status: str
    used: int
    repaired: int
    time_s: float

    def cells(self, with_time: bool = True) -> list[str]:
        cells = [self.scenario, str(self.candidates), str(self.trial), str(self.seed), self.status,
                 str(self.used), str(self.repaired)]
        return cells + [f"{self.time_s:.3f}"] if with_time else cells


BENCH_COLUMNS = ["scenario", "candidates", "trial", "seed", "status", "used", "repaired", "time_s"]


@dataclass
class BenchReport:
    rows: list[BenchRow]
    success_floor: int = 0

    @property
    def success_count(self) -> int:
        return sum(r.status == SUCCESS for r in self.rows)

    @property
    def passed(self) -> bool:
        return self.success_count >= self.success_floor

    def to_csv(self) -> str:
        return _csv([r.cells() for r in self.rows], BENCH_COLUMNS)

    def to_table(self) -> str:
        cells = [BENCH_COLUMNS] + [r.cells() for r in self.rows]
        widths = [max(len(row[i]) for row in cells) for i in range(len(BENCH_COLUMNS))]
        lines = ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
        lines.insert(1, "  ".join("-" * w for w in widths))
        verdict = "ok" if self.passed else "BELOW FLOOR"
        lines.append(f"successes: {self.success_count}/{len(self.rows)} (floor {self.success_floor}, {verdict})")
        return "\n".join(lines)


def _bench_trial(args) -> BenchRow:
    config, trial, seed, out_dir = args
    try:
        run = run_scenario(config, seed, out_dir)
        res = run.result
        status = res.status
        if status == SUCCESS and run.joints is not None and not run.joints.success:
            status = "kin_failed"
        n_cand = res.candidate_count
        return BenchRow(config.name, n_cand, trial, seed, status, res.used_key_pose_count,
                        len(res.repaired_key_pose_indices), res.elapsed)
    except StageError as exc:
        n_cand = (config.demo.candidates or 0) if config.demo else 0
        return BenchRow(config.name, n_cand, trial, seed, f"error:{exc.stage}", 0, 0, 0.0)


def _warm_worker() -> None:
    warmup()


def run_bench(config: ScenarioConfig, trials: int | None = None, out_dir: str | Path | None = None,
              workers: int = 1) -> BenchReport:
    """Run the pipeline once per seed. Failures become rows, never exceptions."""
    if trials is not None:
        if trials < 1:
            raise ConfigError("trials must be at least 1")
        config = replace(config, trials=trials)
    jobs = [(config, i + 1, seed, out_dir) for i, seed in enumerate(config.trial_seeds())]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_warm_worker) as pool:
            rows = list(pool.map(_bench_trial, jobs))
    else:
        warmup()
        rows = [_bench_trial(j) for j in jobs]
    report = BenchReport(rows, config.success_floor)
    if out_dir is not None:
        _atomic_write(Path(out_dir) / config.name / "bench.csv", report.to_csv())
    return report


# -- artifact check ---------------------------------------------------------


@dataclass(frozen=True)
class CheckVerdict:
    valid: bool
    violation: Violation | None = None
    waypoints: int = 0

    def describe(self) -> str:
        if self.valid:
            return f"valid ({self.waypoints} waypoints)"
        v = self.violation
        return f"INVALID: collision on the edge leaving waypoint {v.segment} at s={v.s:.4f}"


def check_artifacts(path_file: str | Path, scene: Scene, resolution: float | None = None,
                    rotation_weight: float | None = None) -> CheckVerdict:
    """Re-validate a persisted path with the exhaustive triangle-pair test.

    Raises :class:`ArtifactParseError` when the file cannot be read; a path
    that parses but collides yields ``valid=False`` with the violation.
    """
    path, doc = read_path_file(path_file)
    res = float(resolution if resolution is not None else doc.get("validation_resolution", 0.002))
    w = float(rotation_weight if rotation_weight is not None else doc.get("rotation_weight", 0.1))
    ok, violation = validate_path(path, scene, res, w, brute_force=True)
    return CheckVerdict(ok, violation, len(path))


# -- command line -----------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", help="scenario file, scenario directory or bundled scenario name")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field, e.g. planner.max_iterations=0 (repeatable)")
    p.add_argument("--te", type=float, help="per-segment time limit in seconds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="demoplan", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="summarize a pose log (or a scenario's log)")
    p.add_argument("source", help="pose log file, scenario file or bundled scenario name")

    p = sub.add_parser("rank", help="rank key poses and write the fit trace")
    _common(p)
    p.add_argument("--out-dir", default="demoplan_out")

    p = sub.add_parser("plan", help="run the full pipeline once")
    _common(p)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out-dir", default="demoplan_out")

    p = sub.add_parser("bench", help="run seeded trials and report success counts")
    _common(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--seeds", type=lambda s: [int(v) for v in s.split(",")], help="comma-separated seeds")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", default="demoplan_out")
    p.add_argument("--csv", action="store_true", help="print machine-readable rows instead of the table")

    p = sub.add_parser("check", help="re-validate a persisted path exhaustively")
    p.add_argument("path_file")
    _common(p)
    return parser


def _load(args) -> ScenarioConfig:
    overrides = list(args.overrides)
    if getattr(args, "te", None) is not None:
        overrides.append(f"planner.t_e={args.te}")
    if getattr(args, "seeds", None):
        overrides.append(f"bench.seeds={args.seeds}")
    if getattr(args, "trials", None) is not None:
        overrides.append(f"bench.trials={args.trials}")
    return load_scenario(args.config, overrides)


def _cmd_ingest(args) -> int:
    src = Path(args.source)
    if src.suffix.lower() in (".yaml", ".yml") or not src.is_file():
        cfg = load_scenario(args.source)
        traj = cfg.trajectory()
    else:
        traj = read_pose_log(src)
    from .demo import DOFS

    t = traj.times
    print(f"recording: {traj.recording_id or '-'}")
    print(f"samples: {len(traj)} (rejected {traj.rejected})")
    print(f"time span: {t[0]:.4f} .. {t[-1]:.4f} s")
    for dof in DOFS:
        v = traj.dof_values(dof)
        print(f"  {dof:>5}: {v.min(): .6f} .. {v.max(): .6f}")
    return 0


def _cmd_rank(args) -> int:
    cfg = _load(args)
    traj, key_poses = rank_stage(cfg)
    if traj is None:
        raise ConfigError(f"{cfg.name}: no demonstration configured")
    root = Path(args.out_dir) / cfg.name
    _atomic_write(root / "key_poses.csv", key_pose_table(key_poses))
    _atomic_write(root / "fit_trace.csv", fit_trace_table(traj, cfg.demo))
    sys.stdout.write(key_pose_table(key_poses))
    print(f"wrote {root / 'key_poses.csv'} and {root / 'fit_trace.csv'}")
    return 0


def _cmd_plan(args) -> int:
    cfg = _load(args)
    warmup()
    run = run_scenario(cfg, args.seed, args.out_dir)
    res = run.result
    print(f"{cfg.name} seed {args.seed}: {res.status}, used {res.used_key_pose_count} of "
          f"{res.candidate_count} key poses, {res.elapsed:.3f} s")
    if run.joints is not None:
        j = run.joints
        print(f"joint path: {len(j.joint_path)} rows" if j.success else
              f"joint path failed at waypoint {j.failure_index}: {j.reason}")
    for name, p in run.artifacts.items():
        print(f"  {name}: {p}")
    return 0 if run.success else 1


def _cmd_bench(args) -> int:
    cfg = _load(args)
    report = run_bench(cfg, out_dir=args.out_dir, workers=args.workers)
    print(report.to_csv() if args.csv else report.to_table(), end="\n" if not args.csv else "")
    return 0 if report.passed else 1


def _cmd_check(args) -> int:
    cfg = _load(args)
    try:
        verdict = check_artifacts(args.path_file, cfg.scene())
    except ArtifactParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 2
    print(verdict.describe())
    return 0 if verdict.valid else 1


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"ingest": _cmd_ingest, "rank": _cmd_rank, "plan": _cmd_plan, "bench": _cmd_bench, "check": _cmd_check}
    try:
        return handler[args.command](args)
    except StageError as exc:
        print(f"error in stage {exc.stage}: {exc.cause}", file=sys.stderr)
        return 3
    except (ConfigError, DemoError, kin.KinematicsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
