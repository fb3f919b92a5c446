"""Quasi-static kinematic world: robot integration plus attach, hug and push couplings.

Objects never move on their own. They follow the grippers while attached
(handle or rim grasp) or hugged, and a door additionally yields to pushers
(fingertips or the base disk) sweeping its inner face.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..control import action_to_velocity
from ..errors import DimensionMismatch, EpisodeOver
from ..geometry import PointCloud, axis_angle_matrix, rot_z
from ..kinematics import load_stock_model
from ..task import Task
from . import sensor
from .scenario import Scenario


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.01
    closed_threshold: float = 0.02  # mean finger opening (m) at or below which a gripper counts as closed
    attach_distance: float = 0.025
    hold_distance: float = 0.03
    fingertip_radius: float = 0.03
    base_radius: float = 0.25
    # hug bands: radial offset from the object's side, relative height window
    bucket_band: tuple[float, float] = (-0.03, 0.06)
    bucket_heights: tuple[float, float] = (0.2, 0.9)  # fractions of the bucket height
    chair_band: tuple[float, float] = (-0.04, 0.08)
    chair_below_seat: float = 0.15
    min_hug_separation: float = math.radians(120)


@dataclass(frozen=True, eq=False)
class Attachment:
    kind: str  # "handle" | "rim" | "hug"
    grippers: tuple[int, ...]
    grip_start: np.ndarray  # (k, 3) tool positions when the coupling formed
    object_start: np.ndarray  # joint value, or object position
    local_point: Optional[np.ndarray] = None  # handle coupling point in the cabinet frame


@dataclass(frozen=True, eq=False)
class WorldState:
    q: np.ndarray
    object_joint: float = 0.0
    object_position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    object_yaw: float = 0.0
    tilt: float = 0.0
    tilt_axis: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    attachment: Optional[Attachment] = None
    closed: tuple[bool, ...] = ()
    toppled: bool = False
    grasp_lost: bool = False
    step_count: int = 0

    @property
    def carried(self) -> bool:
        return self.attachment is not None


def _wrap(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi


def _outside_rect(x: float, y: float, a: float, b: float) -> float:
    """Signed distance from a planar point to a centred a x b half-size rectangle."""
    dx, dy = abs(x) - a, abs(y) - b
    if dx <= 0 and dy <= 0:
        return max(dx, dy)
    return math.hypot(max(dx, 0.0), max(dy, 0.0))


class Simulator:
    """Steps one scenario. Holds only immutable per-scenario data."""

    def __init__(self, scenario: Scenario, config: SimConfig = SimConfig()):
        self.scenario = scenario
        self.config = config
        self.model = load_stock_model(scenario.robot)
        if len(scenario.robot_start) != self.model.dof:
            raise DimensionMismatch("robot_start does not match the robot model")
        self.stations = sensor.build_stations(scenario)
        self._frames = list(self.model.gripper_frames) + ["head", self.model.base_frame]
        self._vel = self.model.velocity_limits
        cab = scenario.cabinet
        if cab is not None:
            n = np.array([cab.outward[0], cab.outward[1], 0.0])
            n /= np.linalg.norm(n)
            left = np.array([n[1], -n[0], 0.0])
            lat = left if (cab.joint == "prismatic" or cab.hinge_side == "right") else -left
            origin = np.array(cab.front_center, float)
            if cab.joint == "revolute":
                origin = origin - lat * cab.panel_width / 2
            self._n, self._lat = n, lat
            self._B0 = np.column_stack([lat, n, [0.0, 0.0, 1.0]])
            self._origin = origin
            self._segment = sensor.handle_segment(cab)

    # -- geometry --------------------------------------------------------
    def cabinet_transform(self, joint: float) -> tuple[np.ndarray, np.ndarray]:
        if self.scenario.cabinet.joint == "prismatic":
            return self._B0, self._origin + joint * self._n
        return self._B0 @ rot_z(joint), self._origin

    @property
    def hinge(self) -> np.ndarray:
        return self._origin

    def transforms(self, world: WorldState) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        s = self.scenario
        out = {}
        if s.cabinet is not None:
            out[sensor.CABINET] = self.cabinet_transform(world.object_joint)
        if s.bucket is not None:
            out[sensor.BUCKET] = (axis_angle_matrix(world.tilt_axis, world.tilt), world.object_position)
        if s.chair is not None:
            out[sensor.CHAIR] = (rot_z(world.object_yaw) @ axis_angle_matrix(world.tilt_axis, world.tilt),
                                 world.object_position)
        if s.target is not None:
            out[sensor.TARGET] = (np.eye(3), np.array([*s.target.center, 0.0]))
        return out

    def frame_positions(self, q) -> dict[str, np.ndarray]:
        cache, _ = self.model._chain(np.asarray(q, float), self._frames)
        return {f: cache[f][1] for f in self._frames}

    def tool_positions(self, q) -> np.ndarray:
        pos = self.frame_positions(q)
        return np.array([pos[f] for f in self.model.gripper_frames])

    def viewpoint(self, q) -> np.ndarray:
        return self.frame_positions(q)["head"]

    def gripper_closed(self, q) -> tuple[bool, ...]:
        q = np.asarray(q)
        return tuple(bool(q[list(self.model.fingers[f])].mean() <= self.config.closed_threshold)
                     for f in self.model.gripper_frames)

    def handle_world(self, joint: float, local_point) -> np.ndarray:
        R, t = self.cabinet_transform(joint)
        return R @ local_point + t

    # -- episode ---------------------------------------------------------
    def initial_world(self) -> WorldState:
        s = self.scenario
        q = self.model.check_state(s.start_state())
        q = np.minimum(np.maximum(q, self.model.lower), self.model.upper)
        pos, yaw = np.zeros(3), 0.0
        joint = 0.0
        if s.cabinet is not None:
            joint = float(np.clip(s.cabinet.initial_joint, 0.0, s.cabinet.joint_range))
        if s.bucket is not None:
            pos = np.array([*s.bucket.center, 0.0])
        if s.chair is not None:
            pos = np.array([*s.chair.position, 0.0])
            yaw = s.chair.yaw
        return WorldState(q, joint, pos, yaw, closed=self.gripper_closed(q))

    def reset(self) -> tuple[WorldState, PointCloud]:
        world = self.initial_world()
        return world, self.render(world)

    def render(self, world: WorldState) -> PointCloud:
        s = self.scenario
        return sensor.render(self.stations, self.transforms(world), self.viewpoint(world.q), s.seed,
                             world.step_count, s.keep_probability)

    def step(self, world: WorldState, action) -> tuple[WorldState, PointCloud]:
        if world.step_count >= self.scenario.episode_limit:
            raise EpisodeOver(f"episode limit of {self.scenario.episode_limit} steps reached")
        a = np.asarray(action, dtype=float)
        if a.shape != (self.model.dof,):
            raise DimensionMismatch(f"action must have {self.model.dof} entries")
        v = action_to_velocity(a, self._vel)
        q = np.minimum(np.maximum(world.q + v * self.config.dt, self.model.lower), self.model.upper)
        new = world
        if not np.array_equal(q, world.q):
            new = self._couple(world, q)
        new = replace(new, q=q, step_count=world.step_count + 1)
        return new, self.render(new)

    def _couple(self, world: WorldState, q: np.ndarray) -> WorldState:
        p0 = self.frame_positions(world.q)
        p1 = self.frame_positions(q)
        frames = self.model.gripper_frames
        g0 = np.array([p0[f] for f in frames])
        g1 = np.array([p1[f] for f in frames])
        closed = self.gripper_closed(q)
        s = self.scenario
        if s.cabinet is not None:
            b0 = p0[self.model.base_frame]
            b1 = p1[self.model.base_frame]
            world = self._couple_cabinet(world, g0, g1, b0, b1, closed)
        elif s.bucket is not None:
            world = self._couple_bucket(world, g1, closed)
        elif s.chair is not None:
            world = self._couple_chair(world, g1)
        return replace(world, closed=closed)

    # -- cabinet ---------------------------------------------------------
    def _angle(self, p) -> float:
        rel = p - self._origin
        return math.atan2(float(rel @ self._n), float(rel @ self._lat))

    def _couple_cabinet(self, world, g0, g1, b0, b1, closed) -> WorldState:
        cab = self.scenario.cabinet
        cfg = self.config
        att = world.attachment
        joint = world.object_joint
        if att is not None:
            k = att.grippers[0]
            if cab.joint == "prismatic":
                joint = att.object_start[0] + float((g1[k] - att.grip_start[k]) @ self._n)
            else:
                joint = att.object_start[0] + _wrap(self._angle(g1[k]) - self._angle(att.grip_start[k]))
            joint = float(np.clip(joint, 0.0, cab.joint_range))
            h = self.handle_world(joint, att.local_point)
            if not closed[k]:
                return replace(world, object_joint=joint, attachment=None)
            if np.linalg.norm(g1[k] - h) > cfg.hold_distance:
                return replace(world, object_joint=joint, attachment=None, grasp_lost=True)
            return replace(world, object_joint=joint)

        for k in range(len(g1)):
            if closed[k] and not world.closed[k]:
                R, t = self.cabinet_transform(joint)
                local = R.T @ (g1[k] - t)
                a, b = self._segment
                d = b - a
                u = float(np.clip((local - a) @ d / (d @ d), 0.0, 1.0))
                if np.linalg.norm(local - (a + u * d)) <= cfg.attach_distance:
                    att = Attachment("handle", (k,), g1.copy(), np.array([joint]), local)
                    return replace(world, attachment=att)

        if cab.joint == "revolute":
            joint = self._pry(joint, [(g0[k], g1[k], cfg.fingertip_radius) for k in range(len(g1))]
                              + [(b0, b1, cfg.base_radius)])
            if joint != world.object_joint:
                return replace(world, object_joint=joint)
        return world

    def _pry(self, phi: float, pushers) -> float:
        """Open the door to clear pushers that sweep into its inner face."""
        W = self.scenario.cabinet.panel_width
        new = phi
        for p0, p1, rho in pushers:
            r0 = p0 - self._origin
            s0 = math.hypot(float(r0 @ self._lat), float(r0 @ self._n))
            if s0 <= rho or s0 > W:
                continue
            beta0 = self._angle(p0)
            if beta0 < 0.0 or beta0 + math.asin(rho / s0) > phi + 1e-12:
                continue  # was not clear on the inner side
            r1 = p1 - self._origin
            s1 = math.hypot(float(r1 @ self._lat), float(r1 @ self._n))
            if s1 <= rho or s1 > W:
                continue
            need = self._angle(p1) + math.asin(rho / s1)
            if need > new:
                new = min(need, self.scenario.cabinet.joint_range)
        return float(new)

    # -- bucket ----------------------------------------------------------
    def _bucket_band(self, g, pos) -> bool:
        b = self.scenario.bucket
        lo, hi = self.config.bucket_band
        r = math.hypot(g[0] - pos[0], g[1] - pos[1])
        h0, h1 = self.config.bucket_heights
        z = g[2] - pos[2]
        return b.radius + lo <= r <= b.radius + hi and h0 * b.height <= z <= h1 * b.height

    def _separated(self, g, pos) -> bool:
        u = g[0, :2] - pos[:2]
        v = g[1, :2] - pos[:2]
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        if nu < 1e-9 or nv < 1e-9:
            return False
        return math.acos(float(np.clip(u @ v / (nu * nv), -1, 1))) >= self.config.min_hug_separation

    def _on_rim(self, g, pos) -> bool:
        b = self.scenario.bucket
        rc = b.radius - b.rim_thickness / 2
        r = math.hypot(g[0] - pos[0], g[1] - pos[1])
        return math.hypot(r - rc, g[2] - (pos[2] + b.height)) <= self.config.hold_distance

    def _drop(self, world: WorldState, pos: np.ndarray, **kw) -> WorldState:
        t = self.scenario.target
        z = 0.0
        if t is not None and math.hypot(pos[0] - t.center[0], pos[1] - t.center[1]) <= t.platform_radius:
            z = t.platform_height
        return replace(world, object_position=np.array([pos[0], pos[1], z]), attachment=None, **kw)

    def _couple_bucket(self, world, g1, closed) -> WorldState:
        if world.toppled or len(g1) < 2:
            return world
        att = world.attachment
        s = self.scenario
        if att is not None:
            delta = g1 - att.grip_start
            pos = att.object_start + delta.mean(axis=0)
            g_start = att.grip_start
            sep = float(np.linalg.norm(g_start[0, :2] - g_start[1, :2]))
            dz = float(delta[0, 2] - delta[1, 2])
            tilt = math.atan2(abs(dz), sep)
            line = g_start[1] - g_start[0]
            axis = np.array([-line[1], line[0], 0.0])
            axis = axis / (np.linalg.norm(axis) or 1.0)
            if dz < 0:
                axis = -axis
            if tilt >= math.radians(s.tilt_threshold_deg):
                return replace(world, object_position=np.array([pos[0], pos[1], 0.0]), tilt=math.pi / 2,
                               tilt_axis=axis, attachment=None, toppled=True)
            if att.kind == "rim":
                if not all(closed):
                    return self._drop(world, pos, tilt=0.0)
                dev = np.linalg.norm(delta - delta.mean(axis=0), axis=1)
                if np.any(dev > self.config.hold_distance):
                    return self._drop(world, pos, tilt=0.0, grasp_lost=True)
            elif not (all(self._bucket_band(g, pos) for g in g1) and self._separated(g1, pos)):
                return self._drop(world, pos, tilt=0.0)
            # a tilted bucket pivots on its bottom center; lift it so the low rim edge stays on the floor
            pos = np.array([pos[0], pos[1], max(pos[2], s.bucket.radius * math.sin(tilt))])
            return replace(world, object_position=pos, tilt=tilt, tilt_axis=axis)

        pos = world.object_position
        if all(closed) and not all(world.closed) and all(self._on_rim(g, pos) for g in g1):
            return replace(world, attachment=Attachment("rim", (0, 1), g1.copy(), pos.copy()))
        if all(self._bucket_band(g, pos) for g in g1) and self._separated(g1, pos):
            return replace(world, attachment=Attachment("hug", (0, 1), g1.copy(), pos.copy()))
        return world

    # -- chair -----------------------------------------------------------
    def _chair_band(self, g, pos, yaw) -> bool:
        c = self.scenario.chair
        lo, hi = self.config.chair_band
        cy, sy = math.cos(yaw), math.sin(yaw)
        dx, dy = g[0] - pos[0], g[1] - pos[1]
        x, y = cy * dx + sy * dy, -sy * dx + cy * dy
        d = _outside_rect(x, y, c.seat_depth / 2, c.seat_width / 2)
        z_lo = c.seat_height - self.config.chair_below_seat
        return lo <= d <= hi and z_lo <= g[2] <= c.seat_height + c.back_height

    def _couple_chair(self, world, g1) -> WorldState:
        if len(g1) < 2:
            return world
        att = world.attachment
        if att is not None:
            delta = (g1 - att.grip_start).mean(axis=0)
            pos = att.object_start + np.array([delta[0], delta[1], 0.0])
            if all(self._chair_band(g, pos, world.object_yaw) for g in g1) and self._separated(g1, pos):
                return replace(world, object_position=pos)
            return replace(world, object_position=pos, attachment=None)
        pos = world.object_position
        if all(self._chair_band(g, pos, world.object_yaw) for g in g1) and self._separated(g1, pos):
            return replace(world, attachment=Attachment("hug", (0, 1), g1.copy(), pos.copy()))
        return world

    # -- success ---------------------------------------------------------
    def object_center(self, world: WorldState) -> np.ndarray:
        return world.object_position

    def is_success(self, world: WorldState) -> bool:
        s = self.scenario
        task = s.task
        if task is Task.OPEN_DRAWER:
            return world.object_joint >= 0.9 * s.cabinet.joint_range
        if task is Task.OPEN_DOOR:
            return world.object_joint >= math.pi / 2
        t = s.target
        dist = math.hypot(world.object_position[0] - t.center[0], world.object_position[1] - t.center[1])
        if task is Task.MOVE_BUCKET:
            return (not world.toppled and not world.carried and dist <= t.radius
                    and world.tilt < math.radians(s.tilt_threshold_deg)
                    and abs(world.object_position[2] - t.platform_height) <= 1e-6)
        return dist <= t.radius and world.tilt < math.radians(s.upright_threshold_deg)

    def check_success(self, world: WorldState) -> tuple[bool, bool]:
        ok = self.is_success(world)
        return ok or world.step_count >= self.scenario.episode_limit, ok
