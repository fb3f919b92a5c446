"""Closed-loop episode runner and batch evaluation.

perception -> behavior tick -> target resolution -> PID -> action scaling -> sim step,
until the simulator reports success, the tree finishes, or 200 steps pass.
"""
from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from ..behavior.context import TaskContext
from ..behavior.tasks import DEFAULT_POLICY, PolicyConfig, build_tree
from ..behavior.targets import resolve_with_status
from ..behavior.tree import tick
from ..control import (ControllerBank, JointGroup, action_to_velocity, gains_from_dict, pid_step,
                       velocity_to_action)
from ..errors import HomemanipError
from ..geometry import write_ply
from ..task import Task
from .scenario import Scenario, generate_scenario
from .world import SimConfig, Simulator


class FailureReason(Enum):
    TIMEOUT = "Timeout"
    GRASP_LOST = "GraspLost"
    OBJECT_TOPPLED = "ObjectToppled"
    IK_FAILURE = "IkFailure"


ESTIMATE_COLUMNS = {
    Task.OPEN_DRAWER: ("handle_points", "opening"),
    Task.OPEN_DOOR: ("handle_points", "door_angle"),
    Task.MOVE_BUCKET: ("rim_height", "rim_radius", "rim_thickness"),
    Task.PUSH_CHAIR: ("chair_center_x", "chair_center_y", "chair_center_z"),
}


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


@dataclass(frozen=True, eq=False)
class TrajectoryLog:
    header: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        w.writerows(self.rows)
        return buf.getvalue()

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_csv())
        return path


@dataclass(frozen=True, eq=False)
class EpisodeResult:
    task: Task
    seed: int
    success: bool
    steps_used: int
    failure_reason: Optional[FailureReason]
    log: TrajectoryLog
    history: tuple[str, ...] = ()
    branch: Optional[str] = None
    object_joint: float = 0.0
    object_position: tuple[float, ...] = ()
    error: Optional[str] = None

    def __post_init__(self):
        if self.success and self.failure_reason is not None:
            raise ValueError("a successful episode carries no failure reason")

    def summary(self) -> dict:
        return {"task": self.task.value, "seed": self.seed, "success": self.success,
                "steps_used": self.steps_used,
                "failure_reason": None if self.failure_reason is None else self.failure_reason.value,
                "branch": self.branch, "object_joint": self.object_joint,
                "object_position": list(self.object_position), "nodes_visited": list(self.history),
                "error": self.error}


def _estimate_values(task: Task, estimates) -> list:
    if task is Task.PUSH_CHAIR:
        c = estimates.get("chair_center")
        return [None] * 3 if c is None else [float(v) for v in c]
    return [estimates.get(k) for k in ESTIMATE_COLUMNS[task]]


def _bank(sim: Simulator) -> ControllerBank:
    s = sim.scenario
    gains = gains_from_dict({g: {"kp": kp, "ki": ki, "kd": kd} for g, kp, ki, kd in s.gains})
    return ControllerBank(tuple(JointGroup(g) for g in sim.model.groups), gains=gains, dt=sim.config.dt)


def run_episode(scenario: Scenario, sim_config: SimConfig = SimConfig(), policy: PolicyConfig = DEFAULT_POLICY,
                cloud_dir=None, on_step: Optional[Callable] = None) -> EpisodeResult:
    """Run one closed-loop episode. Deterministic in the scenario; never raises on task failure.

    ``on_step(world, tree, ctx, target)`` runs after every sim step. Returning a
    WorldState replaces the world (for scripted perturbations); the cloud is
    then re-rendered.
    """
    sim = Simulator(scenario, sim_config)
    model = sim.model
    task = scenario.task
    tree = build_tree(task, policy)
    ctx = TaskContext.initial(task, model, scenario.info())
    bank = _bank(sim)
    vel = model.velocity_limits
    header = (("step", "node") + tuple(f"q_{n}" for n in model.joint_names)
              + tuple(f"v_{n}" for n in model.joint_names) + ("object_joint", "object_x", "object_y", "object_z")
              + ESTIMATE_COLUMNS[task])
    rows: list[tuple[str, ...]] = []
    if cloud_dir is not None:
        cloud_dir = Path(cloud_dir)
        cloud_dir.mkdir(parents=True, exist_ok=True)

    world, cloud = sim.reset()
    if cloud_dir is not None:
        write_ply(cloud, cloud_dir / "cloud_000.ply")
    done, success = sim.check_success(world)
    target, desired = None, None
    error = None
    try:
        while not done:
            tree, ctx, new_target, _, tree_done = tick(tree, ctx, cloud, world.q)
            if new_target is not target:
                target = new_target
                desired, _ = resolve_with_status(target, model, world.q, ctx.desired)
            ctx = replace(ctx, desired=desired)
            bank, v = pid_step(bank, desired, world.q)
            a = velocity_to_action(v, vel)
            world, cloud = sim.step(world, a)
            applied = action_to_velocity(a, vel)
            if on_step is not None:
                perturbed = on_step(world, tree, ctx, target)
                if perturbed is not None:
                    world, cloud = perturbed, sim.render(perturbed)
            if cloud_dir is not None:
                write_ply(cloud, cloud_dir / f"cloud_{world.step_count:03d}.ply")
            rows.append((str(world.step_count), tree.current) + tuple(_fmt(x) for x in (
                list(world.q) + list(applied) + [world.object_joint, *world.object_position]
                + _estimate_values(task, ctx.estimates))))
            done, success = sim.check_success(world)
            if tree_done:
                done = True
    except HomemanipError as exc:
        # an internal error ends the episode; it is reported, not raised
        error = f"{type(exc).__name__}: {exc}"
        success = sim.is_success(world)

    reason = None
    if not success:
        if world.toppled:
            reason = FailureReason.OBJECT_TOPPLED
        elif ctx.ik_failures > 0:
            reason = FailureReason.IK_FAILURE
        elif world.grasp_lost:
            reason = FailureReason.GRASP_LOST
        else:
            reason = FailureReason.TIMEOUT
    branch = None if ctx.branch is None else ctx.branch.value
    return EpisodeResult(task, scenario.seed, bool(success), world.step_count, reason,
                         TrajectoryLog(header, tuple(rows)), tree.history, branch, float(world.object_joint),
                         tuple(float(v) for v in world.object_position), error)


# -- batch evaluation ------------------------------------------------------
@dataclass(frozen=True, eq=False)
class EvalSummary:
    task: Task
    seed: int
    results: tuple[EpisodeResult, ...]

    @property
    def n(self) -> int:
        return len(self.results)

    @property
    def successes(self) -> int:
        return sum(r.success for r in self.results)

    @property
    def rate(self) -> float:
        return self.successes / self.n

    @property
    def mean_steps(self) -> float:
        return float(np.mean([r.steps_used for r in self.results]))

    @property
    def histogram(self) -> dict[str, int]:
        c = Counter(r.failure_reason.value for r in self.results if r.failure_reason is not None)
        return {f.value: c.get(f.value, 0) for f in FailureReason}

    @property
    def branches(self) -> dict[str, int]:
        c = Counter(r.branch for r in self.results if r.branch is not None)
        return dict(sorted(c.items()))

    def row(self) -> dict:
        d = {"task": self.task.value, "seed": self.seed, "episodes": self.n, "successes": self.successes,
             "success_rate": f"{self.rate:.4f}", "mean_steps": f"{self.mean_steps:.2f}"}
        d.update(self.histogram)
        return d


def episode_seeds(seed: int, n: int) -> list[int]:
    return [seed + i for i in range(n)]


def evaluate(task, n_episodes: int, seed: int = 0, sim_config: SimConfig = SimConfig(),
             policy: PolicyConfig = DEFAULT_POLICY, scenarios: Optional[Sequence[Scenario]] = None) -> EvalSummary:
    task = Task.parse(task)
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    if scenarios is None:
        scenarios = [generate_scenario(task, s) for s in episode_seeds(seed, n_episodes)]
    results = tuple(run_episode(s, sim_config, policy) for s in scenarios)
    return EvalSummary(task, seed, results)


EPISODE_FIELDS = ("episode", "seed", "success", "steps_used", "failure_reason", "branch", "object_joint",
                  "object_x", "object_y", "object_z")


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def episodes_csv(summaries: Sequence[EvalSummary]) -> str:
    rows = []
    for s in summaries:
        for i, r in enumerate(s.results):
            rows.append([s.task.value, i, r.seed, int(r.success), r.steps_used,
                         "" if r.failure_reason is None else r.failure_reason.value, r.branch or "",
                         _fmt(r.object_joint), *(_fmt(v) for v in r.object_position)])
    return _csv(("task",) + EPISODE_FIELDS, rows)


def summary_csv(summaries: Sequence[EvalSummary]) -> str:
    rows = [s.row() for s in summaries]
    header = list(rows[0])
    return _csv(header, [[r[h] for h in header] for r in rows])


def summary_text(summaries: Sequence[EvalSummary]) -> str:
    rows = [s.row() for s in summaries]
    header = list(rows[0])
    cells = [header] + [[str(r[h]) for h in header] for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) if j == 0 else c.rjust(w) for j, (c, w) in enumerate(zip(row, widths)))
             for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    for s in summaries:
        if s.branches:
            lines.append(f"{s.task.value} branches: " + ", ".join(f"{k}={v}" for k, v in s.branches.items()))
    return "\n".join(lines) + "\n"


def write_eval(summaries: Sequence[EvalSummary], out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"episodes": out / "episodes.csv", "summary": out / "summary.csv", "table": out / "summary.txt"}
    paths["episodes"].write_text(episodes_csv(summaries))
    paths["summary"].write_text(summary_csv(summaries))
    paths["table"].write_text(summary_text(summaries))
    return paths


def write_run(scenario: Scenario, result: EpisodeResult, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"scenario": scenario.save(out / "scenario.json"),
             "trajectory": result.log.write(out / "trajectory.csv"),
             "result": out / "result.json"}
    paths["result"].write_text(json.dumps(result.summary(), indent=2, sort_keys=True) + "\n")
    return paths
