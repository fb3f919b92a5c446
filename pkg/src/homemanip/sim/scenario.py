"""Scenario descriptions, seeded generation of the default corpus, and JSON I/O.

Scenarios are hashable values (tuples, not arrays) so simulators can be
cached per scenario.

Schema (JSON object)::

    task: "open_drawer" | "open_door" | "move_bucket" | "push_chair"
    seed: int
    robot: "single_arm" | "dual_arm"
    robot_start: {joint_name: value, ...}   # unspecified joints stay at 0
    episode_limit: int (200)
    points_per_object: int (>= 100)
    keep_probability: float in (0, 1]        # per-frame sensor dropout
    cabinet: {joint, front_center[3], outward[2], panel_width, panel_height,
              panel_thickness, joint_range, initial_joint, handle_offset[2],
              handle_length, handle_thickness, handle_standoff,
              handle_vertical, hinge_side}
    bucket: {center[2], radius, height, rim_thickness, handle_over_rim,
             handle_rise, handle_yaw}
    chair: {position[2], yaw, seat_height, seat_width, seat_depth,
            seat_thickness, back_height, back_thickness, leg_size}
    target: {center[2], radius, platform_height, platform_radius}
    tilt_threshold_deg: float (20)
    upright_threshold_deg: float (15)
    gains: {group: {kp, ki, kd}}             # optional PID overrides
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from ..kinematics import load_stock_model
from ..task import Task, TaskInfo


@dataclass(frozen=True)
class CabinetSpec:
    joint: str  # "prismatic" (drawer) | "revolute" (door)
    front_center: tuple[float, float, float]  # closed panel front-face center
    outward: tuple[float, float]
    panel_width: float
    panel_height: float
    joint_range: float
    handle_offset: tuple[float, float] = (0.0, 0.0)  # (lateral, vertical) from panel center
    handle_length: float = 0.12
    handle_thickness: float = 0.02
    handle_standoff: float = 0.05
    handle_vertical: bool = False
    hinge_side: str = "right"
    panel_thickness: float = 0.02
    initial_joint: float = 0.0


@dataclass(frozen=True)
class BucketSpec:
    center: tuple[float, float]
    radius: float
    height: float
    rim_thickness: float
    handle_over_rim: bool = True
    handle_rise: float = 0.1
    handle_yaw: float = 0.0


@dataclass(frozen=True)
class ChairSpec:
    position: tuple[float, float]
    yaw: float
    seat_height: float = 0.45
    seat_width: float = 0.46
    seat_depth: float = 0.44
    seat_thickness: float = 0.05
    back_height: float = 0.42
    back_thickness: float = 0.05
    leg_size: float = 0.04


@dataclass(frozen=True)
class TargetSpec:
    center: tuple[float, float]
    radius: float
    platform_height: float = 0.0
    platform_radius: float = 0.3


@dataclass(frozen=True)
class Scenario:
    task: Task
    seed: int
    robot: str
    robot_start: tuple[float, ...]
    cabinet: Optional[CabinetSpec] = None
    bucket: Optional[BucketSpec] = None
    chair: Optional[ChairSpec] = None
    target: Optional[TargetSpec] = None
    episode_limit: int = 200
    points_per_object: int = 600
    keep_probability: float = 0.7
    tilt_threshold_deg: float = 20.0
    upright_threshold_deg: float = 15.0
    gains: tuple = ()  # ((group, kp, ki, kd), ...)

    def __post_init__(self):
        if self.points_per_object < 100:
            raise ValueError("points_per_object must be >= 100")
        if not 0 < self.keep_probability <= 1:
            raise ValueError("keep_probability must be in (0, 1]")
        if self.target is not None and self.target.radius <= 0:
            raise ValueError("target radius must be positive")
        for spec in (self.cabinet, self.bucket, self.chair):
            if spec is None:
                continue
            for f in fields(spec):
                v = getattr(spec, f.name)
                if f.name in ("front_center", "outward", "center", "position", "handle_offset",
                              "yaw", "handle_yaw", "initial_joint"):
                    continue
                if isinstance(v, (int, float)) and not isinstance(v, bool) and v <= 0:
                    raise ValueError(f"{type(spec).__name__}.{f.name} must be positive")

    def info(self) -> TaskInfo:
        """The policy-visible subset of the scenario."""
        kw = {}
        if self.cabinet is not None:
            o = self.cabinet.outward
            kw.update(outward=np.array([o[0], o[1], 0.0]), hinge_side=self.cabinet.hinge_side,
                      joint_range=self.cabinet.joint_range)
        if self.target is not None:
            z = self.target.platform_height
            kw.update(target_center=np.array([*self.target.center, z]), target_radius=self.target.radius)
        return TaskInfo(self.task, **kw)

    def start_state(self) -> np.ndarray:
        return np.array(self.robot_start, dtype=float)

    # -- serialisation -------------------------------------------------
    def to_dict(self) -> dict:
        model = load_stock_model(self.robot)
        d = {"task": self.task.value, "seed": self.seed, "robot": self.robot,
             "robot_start": {n: float(v) for n, v in zip(model.joint_names, self.robot_start)},
             "episode_limit": self.episode_limit, "points_per_object": self.points_per_object,
             "keep_probability": self.keep_probability,
             "tilt_threshold_deg": self.tilt_threshold_deg,
             "upright_threshold_deg": self.upright_threshold_deg}
        for key in ("cabinet", "bucket", "chair", "target"):
            spec = getattr(self, key)
            if spec is not None:
                d[key] = _jsonable(asdict(spec))
        if self.gains:
            d["gains"] = {g: {"kp": kp, "ki": ki, "kd": kd} for g, kp, ki, kd in self.gains}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        task = Task.parse(d["task"])
        robot = d.get("robot", task.robot)
        model = load_stock_model(robot)
        start = d.get("robot_start", {})
        if isinstance(start, dict):
            q = np.zeros(model.dof)
            for name, v in start.items():
                q[model.joint_index(name)] = float(v)
        else:
            q = np.asarray(start, dtype=float)
        specs = {}
        for key, typ in (("cabinet", CabinetSpec), ("bucket", BucketSpec), ("chair", ChairSpec),
                         ("target", TargetSpec)):
            if d.get(key) is not None:
                specs[key] = typ(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in d[key].items()})
        gains = tuple((g, float(v["kp"]), float(v["ki"]), float(v.get("kd", 0.0)))
                      for g, v in sorted(d.get("gains", {}).items()))
        extra = {k: d[k] for k in ("episode_limit", "points_per_object", "keep_probability",
                                   "tilt_threshold_deg", "upright_threshold_deg") if k in d}
        return cls(task, int(d.get("seed", 0)), robot, tuple(float(x) for x in q), gains=gains,
                   **specs, **extra)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _jsonable(d):
    if isinstance(d, dict):
        return {k: _jsonable(v) for k, v in d.items()}
    if isinstance(d, (tuple, list)):
        return [_jsonable(v) for v in d]
    if isinstance(d, Task):
        return d.value
    return d


def _r(x: float) -> float:
    # keep generated values short and exactly reproducible through JSON
    return float(round(float(x), 6))


def _start_pose(robot: str, x: float, y: float, yaw: float, torso: float,
                arm: dict[str, float]) -> tuple[float, ...]:
    model = load_stock_model(robot)
    q = np.zeros(model.dof)
    q[model.joint_index("base_x")] = x
    q[model.joint_index("base_y")] = y
    q[model.joint_index("base_yaw")] = yaw
    q[model.joint_index("torso")] = torso
    for name, v in arm.items():
        if name in model.joint_names:
            q[model.joint_index(name)] = v
    for i in model.finger_joints:
        q[i] = model.upper[i]
    return tuple(_r(v) for v in q)


READY_ARM = {"r_j2": 0.6, "r_j4": -1.2, "r_j6": 0.6, "l_j2": 0.6, "l_j4": -1.2, "l_j6": 0.6}
LOW_ARM = {"r_j2": 1.0, "r_j4": -1.3, "r_j6": 1.4, "l_j2": 1.0, "l_j4": -1.3, "l_j6": 1.4}


def generate_scenario(task, seed: int) -> Scenario:
    """Randomised scenario from the default corpus; ``seed`` fixes every draw."""
    task = Task.parse(task)
    rng = np.random.default_rng([seed, list(Task).index(task)])
    robot = task.robot
    if task in (Task.OPEN_DRAWER, Task.OPEN_DOOR):
        psi = rng.uniform(-0.15, 0.15)
        outward = (_r(-math.cos(psi)), _r(-math.sin(psi)))
        n = np.array([outward[0], outward[1]])
        left = np.array([n[1], -n[0]])
        if task is Task.OPEN_DRAWER:
            width, height = rng.uniform(0.4, 0.6), rng.uniform(0.15, 0.25)
            zc = rng.uniform(0.5, 0.9)
            vertical = bool(rng.random() < 0.2)
            cab = CabinetSpec(
                joint="prismatic", front_center=(1.0, 0.0, _r(zc)), outward=outward,
                panel_width=_r(width), panel_height=_r(height), joint_range=_r(rng.uniform(0.3, 0.45)),
                handle_offset=(_r(rng.uniform(-0.05, 0.05)), 0.0),
                handle_length=_r(0.12 * rng.uniform(0.5, 1.5) if not vertical else 0.08),
                handle_thickness=_r(rng.uniform(0.015, 0.025)), handle_vertical=vertical)
        else:
            width, height = rng.uniform(0.35, 0.55), rng.uniform(0.5, 0.8)
            zc = rng.uniform(0.6, 0.9)
            side = "right" if rng.random() < 0.5 else "left"
            lat = width / 2 - 0.06
            cab = CabinetSpec(
                joint="revolute", front_center=(1.0, 0.0, _r(zc)), outward=outward,
                panel_width=_r(width), panel_height=_r(height), joint_range=_r(rng.uniform(1.7, 2.0)),
                handle_offset=(_r(lat if side == "right" else -lat), _r(rng.uniform(-0.05, 0.05))),
                handle_length=_r(0.12 * rng.uniform(0.5, 1.5)), handle_thickness=_r(rng.uniform(0.015, 0.025)),
                handle_vertical=True, hinge_side=side)
        front = np.array(cab.front_center[:2])
        base = front + n * rng.uniform(1.0, 1.2) + left * rng.uniform(-0.1, 0.1)
        yaw = math.atan2(-n[1], -n[0]) + rng.uniform(-0.05, 0.05)
        torso = float(np.clip(zc - 0.75, 0.0, 0.5))
        start = _start_pose(robot, base[0], base[1], yaw, torso, READY_ARM)
        return Scenario(task, seed, robot, start, cabinet=cab)

    if task is Task.MOVE_BUCKET:
        yaw = rng.uniform(-math.pi, math.pi)
        f = np.array([math.cos(yaw), math.sin(yaw)])
        base = rng.uniform(-0.3, 0.3, size=2)
        center = base + f * rng.uniform(0.85, 1.0) + np.array([-f[1], f[0]]) * rng.uniform(-0.05, 0.05)
        radius = rng.uniform(0.12, 0.22)
        # the wall may not eat more than 60% of the radius
        thickness = min(rng.uniform(0.01, 0.12), 0.6 * radius)
        bucket = BucketSpec(center=(_r(center[0]), _r(center[1])), radius=_r(radius),
                            height=_r(rng.uniform(0.25, 0.35)), rim_thickness=_r(thickness),
                            handle_over_rim=bool(rng.random() < 0.5), handle_yaw=_r(rng.uniform(0, math.pi)))
        ang = yaw + rng.uniform(-math.pi / 3, math.pi / 3)
        tc = center + rng.uniform(0.6, 1.0) * np.array([math.cos(ang), math.sin(ang)])
        target = TargetSpec(center=(_r(tc[0]), _r(tc[1])), radius=0.15, platform_height=0.06,
                            platform_radius=0.3)
        start = _start_pose(robot, base[0], base[1], yaw, 0.0, LOW_ARM)
        return Scenario(task, seed, robot, start, bucket=bucket, target=target)

    # push chair: target at the world origin, robot behind the chair on the chair->target ray
    ang = rng.uniform(-math.pi, math.pi)
    dist = rng.uniform(0.4, 1.0)
    chair_xy = dist * np.array([math.cos(ang), math.sin(ang)])
    u = -chair_xy / np.linalg.norm(chair_xy)
    perp = np.array([-u[1], u[0]])
    base = chair_xy - u * rng.uniform(0.9, 1.1) + perp * rng.uniform(-0.1, 0.1)
    yaw = math.atan2(u[1], u[0]) + rng.uniform(-0.1, 0.1)
    chair = ChairSpec(position=(_r(chair_xy[0]), _r(chair_xy[1])), yaw=_r(rng.uniform(-math.pi, math.pi)),
                      seat_height=_r(rng.uniform(0.42, 0.5)), seat_width=_r(rng.uniform(0.4, 0.5)),
                      seat_depth=_r(rng.uniform(0.4, 0.48)), back_height=_r(rng.uniform(0.35, 0.45)))
    target = TargetSpec(center=(0.0, 0.0), radius=0.25, platform_height=0.0, platform_radius=0.25)
    start = _start_pose(robot, base[0], base[1], yaw, 0.0, READY_ARM)
    return Scenario(task, seed, robot, start, chair=chair, target=target)


def with_overrides(scenario: Scenario, **kw) -> Scenario:
    return replace(scenario, **kw)
