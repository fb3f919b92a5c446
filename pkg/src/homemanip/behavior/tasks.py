"""Behavior trees for the four household tasks.

Each builder returns a validated :class:`BehaviorTree`. Nodes read features
from the live point cloud and the measured joint state and emit motion
targets; the runner turns those into joint setpoints.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ..errors import DegenerateCloud, EmptySelection, NoGraspFound, NoRimFound
from ..geometry import Label, PointCloud, Pose, Z_AXIS, unit
from ..kinematics import forward_kinematics
from ..perception import (HandleAccumulator, accumulate_handle, chair_span_along, detect_open_displacement,
                          estimate_bucket_rim, estimate_chair_center, estimate_handle_grasps,
                          estimate_hinge_angle, rim_graspable)
from ..task import Task
from .context import Branch, TaskContext
from .targets import (BaseWaypoint, GripperAction, GripperCommand, GripperPoses, Hold, solve_gripper_poses)
from .tree import BehaviorTree, Node, NodeFailure, make_tree


@dataclass(frozen=True)
class PolicyConfig:
    pregrasp_offset: float = 0.10
    grasp_depth: float = 0.02  # past the handle's front surface
    hold_distance: float = 0.03
    lift_height: float = 0.10
    base_min_distance: float = 0.35
    # door pull: the chord's sagitta stays below the hold distance
    pull_sagitta: float = 0.018
    free_edge_clearance: float = 0.08
    pry_radius_fraction: float = 0.8
    pry_target_angle: float = math.radians(100)
    pusher_radius: float = 0.03
    pull_speed: float = 1.0  # m/s, base waypoint ramp while holding a handle
    circular_pull: bool = False
    circular_waypoints: int = 10
    push_fraction: float = 1.0  # of the planar error covered by the open-loop push
    nudge_gain: float = 0.5
    nudge_cap: float = 0.05
    nudge_done_fraction: float = 0.6  # of the target radius
    rim_frames: int = 3  # frames merged before slicing the rim
    tilt_limit: float = math.radians(10)
    pre_hug_clearance: float = 0.12
    hug_clearance: float = 0.02
    hug_height_fraction: float = 0.65
    finger_closed: float = 0.015
    finger_open: float = 0.025
    tol_waypoint: float = 0.02
    tol_grasp: float = 0.008
    tol_base: float = 0.01


DEFAULT_POLICY = PolicyConfig()


# -- shared helpers --------------------------------------------------------
def _base(ctx: TaskContext, q) -> np.ndarray:
    m = ctx.model
    return np.array([q[m.joint_index(n)] for n in ("base_x", "base_y", "base_yaw", "torso")])


def _heading(ctx: TaskContext, q) -> tuple[np.ndarray, np.ndarray]:
    yaw = q[ctx.model.joint_index("base_yaw")]
    f = np.array([math.cos(yaw), math.sin(yaw), 0.0])
    return f, np.array([-f[1], f[0], 0.0])


def _tool(ctx: TaskContext, q, frame: str) -> Pose:
    return forward_kinematics(ctx.model, q, frame)


def _fingers(ctx: TaskContext, q, frame: str) -> float:
    return float(np.mean([q[i] for i in ctx.model.fingers[frame]]))


def _frames(ctx: TaskContext) -> tuple[str, ...]:
    return ctx.model.gripper_frames


def _aligned(R: np.ndarray, current: np.ndarray) -> np.ndarray:
    """Parallel jaws are symmetric: pick the closing sign nearest the current wrist."""
    if R[:, 1] @ current[:, 1] < 0:
        return R @ np.diag([-1.0, -1.0, 1.0])
    return R


def _frame_from(closing, approach) -> np.ndarray:
    y, z = unit(closing), unit(approach)
    return np.column_stack([np.cross(y, z), y, z])


def _ik(ctx: TaskContext, p, poses, cfg: PolicyConfig, orientation_weight: float = 1.0,
        locked=("base_yaw",)) -> tuple[TaskContext, GripperPoses]:
    target = GripperPoses(tuple(poses), orientation_weight, tuple(locked), cfg.base_min_distance)
    q, ok = solve_gripper_poses(target, ctx.model, p.q, ctx.desired)
    if not ok:
        raise NodeFailure("inverse kinematics not achieved", replace(ctx, ik_failures=ctx.ik_failures + 1))
    return ctx, replace(target, solution=q, achieved=True)


def _reached(ctx: TaskContext, p, target, tol: float) -> bool:
    if not isinstance(target, GripperPoses):
        return False
    return all(np.linalg.norm(_tool(ctx, p.q, f).translation - pose.translation) <= tol
               for f, pose in target.poses)


def _base_reached(ctx: TaskContext, p, wp: BaseWaypoint, tol: float) -> bool:
    b = _base(ctx, p.q)
    ok = True
    if wp.x is not None:
        ok &= math.hypot(b[0] - wp.x, b[1] - wp.y) <= tol
    if wp.height is not None:
        ok &= abs(b[3] - wp.height) <= tol / 2
    return bool(ok)


def _current(ctx: TaskContext, key: str):
    return ctx.notes.get("target_" + key)


def _remember(ctx: TaskContext, key: str, target):
    return ctx.note(**{"target_" + key: target}), target


def _settled_on(key: str, tol: float):
    def pred(ctx, p):
        return _reached(ctx, p, _current(ctx, key), tol)
    return pred


def _base_settled_on(key: str, tol: float):
    def pred(ctx, p):
        return _base_reached(ctx, p, _current(ctx, key), tol)
    return pred


def _fingers_at_most(v: float, frames=None):
    def pred(ctx, p):
        return all(_fingers(ctx, p.q, f) <= v for f in (frames or _frames(ctx)))
    return pred


def _fingers_at_least(v: float, frames=None):
    def pred(ctx, p):
        return all(_fingers(ctx, p.q, f) >= v for f in (frames or _frames(ctx)))
    return pred


def _open_all(ctx, p):
    return ctx, GripperCommand(GripperAction.OPEN)


def _done(ctx, p):
    return ctx, Hold()


# -- cabinet (drawer and door) ---------------------------------------------
def _record_initial_panel(ctx: TaskContext, p) -> TaskContext:
    if ctx.initial_panel is None:
        return replace(ctx, initial_panel=p.cloud)
    return ctx


def _handle_centroid(p) -> Optional[np.ndarray]:
    h = p.cloud.select(Label.HANDLE)
    return None if len(h) == 0 else h.points.mean(axis=0)


def _grip_offset(ctx: TaskContext, p) -> Optional[np.ndarray]:
    c = _handle_centroid(p)
    if c is None:
        return None
    return _tool(ctx, p.q, _frames(ctx)[0]).translation - c


def _held(ctx: TaskContext, p, cfg: PolicyConfig) -> bool:
    """Gripper still on the tracked handle.

    Only the near face of the handle is visible, so once a hold is established
    the offset measured then is the reference rather than zero.
    """
    off = _grip_offset(ctx, p)
    if off is None:
        return False
    ref = ctx.notes.get("hold_offset")
    if ref is not None:
        off = off - ref
    return bool(np.linalg.norm(off) <= cfg.hold_distance)


def _start_hold(ctx: TaskContext, p) -> TaskContext:
    return ctx.note(hold_offset=_grip_offset(ctx, p))


def _ramp(key: str, speed: float, dt: float = 0.01):
    """Retarget that slides a base waypoint from the entry pose toward its goal at ``speed``.

    Keeps the base PID out of saturation so the base follows the straight line.
    """
    def retarget(ctx, p, target):
        start, goal = ctx.notes[key + "_from"], ctx.notes[key + "_to"]
        k = ctx.notes[key + "_k"] + 1
        d = goal - start
        n = float(np.linalg.norm(d))
        f = 1.0 if n < 1e-9 else min(1.0, k * speed * dt / n)
        wp = start + f * d
        ctx = ctx.note(**{key + "_k": k})
        return _remember(ctx, key, BaseWaypoint(float(wp[0]), float(wp[1])))
    return retarget


def _ramp_enter(ctx: TaskContext, p, key: str, goal: np.ndarray):
    b = _base(ctx, p.q)[:2]
    ctx = ctx.note(**{key + "_from": b, key + "_to": np.asarray(goal[:2], float), key + "_k": 0})
    ctx = ctx.note(**{"target_" + key: BaseWaypoint(float(goal[0]), float(goal[1]))})
    return ctx, BaseWaypoint(float(b[0]), float(b[1]))


def _ramp_done(key: str, tol: float):
    def pred(ctx, p):
        goal = ctx.notes[key + "_to"]
        return _base_reached(ctx, p, BaseWaypoint(float(goal[0]), float(goal[1])), tol)
    return pred


def _handle_nodes(cfg: PolicyConfig, after_close: str, budgets=(12, 40, 40, 20)) -> list[Node]:
    """AccumulateHandle -> PreGrasp -> Grasp -> CloseGripper, shared by drawer and door."""

    def acc_enter(ctx, p):
        ctx = replace(ctx, accumulator=HandleAccumulator(), ready=False, grasp=None).note(hold_offset=None)
        return ctx, GripperCommand(GripperAction.OPEN)

    def acc_update(ctx, p):
        pc = ctx.perception
        acc, ready = accumulate_handle(ctx.accumulator, p.cloud, pc.min_handle_points, pc.min_handle_frames)
        ctx = replace(ctx, accumulator=acc, ready=ready).estimate(handle_points=len(acc.merged))
        if ready and ctx.grasp is None and len(acc.merged) > 0:
            try:
                grasps = estimate_handle_grasps(acc.merged, ctx.info.max_jaw_width, -ctx.info.outward,
                                                pc.station_spacing, pc.orientation_threshold)
            except (NoGraspFound, EmptySelection):
                return ctx
            ctx = replace(ctx, grasp=grasps[0])
        return ctx

    def grasp_pose(ctx, p, offset):
        g = ctx.grasp
        frame = _frames(ctx)[0]
        R = _aligned(g.pose.rotation, _tool(ctx, p.q, frame).rotation)
        return frame, Pose(R, g.position + offset * g.approach)

    def pregrasp_enter(ctx, p):
        ctx, t = _ik(ctx, p, [grasp_pose(ctx, p, -cfg.pregrasp_offset)], cfg)
        return _remember(ctx, "pregrasp", t)

    def grasp_enter(ctx, p):
        ctx, t = _ik(ctx, p, [grasp_pose(ctx, p, cfg.grasp_depth - ctx.grasp.depth / 2)], cfg)
        return _remember(ctx, "grasp", t)

    def close_enter(ctx, p):
        return ctx, GripperCommand(GripperAction.CLOSE, (_frames(ctx)[0],))

    def close_ok(ctx, p):
        return _fingers(ctx, p.q, _frames(ctx)[0]) <= cfg.finger_closed and _held(ctx, p, cfg)

    def close_failed(ctx, p):
        return _fingers(ctx, p.q, _frames(ctx)[0]) <= cfg.finger_closed and not _held(ctx, p, cfg)

    a, b, c, d = budgets
    return [
        Node("AccumulateHandle", acc_enter, lambda ctx, p: ctx.grasp is not None,
             lambda ctx, p: ctx.ready and ctx.grasp is None, "PreGrasp", "AccumulateHandle",
             update=acc_update, budget=a, doc="merge handle points until 50 points or 10 frames"),
        Node("PreGrasp", pregrasp_enter, _settled_on("pregrasp", cfg.tol_waypoint), on_success="Grasp",
             on_failure="AccumulateHandle", budget=b, doc="grasp pose backed off along the approach axis"),
        Node("Grasp", grasp_enter, _settled_on("grasp", cfg.tol_grasp), on_success="CloseGripper",
             on_failure="AccumulateHandle", budget=c),
        Node("CloseGripper", close_enter, close_ok, close_failed, after_close, "AccumulateHandle", budget=d,
             doc="close until the fingertips hold the tracked handle centroid"),
    ]


def build_drawer_tree(cfg: PolicyConfig = DEFAULT_POLICY) -> BehaviorTree:
    def perceive(ctx, p):
        ctx = _record_initial_panel(ctx, p)
        try:
            d = detect_open_displacement(p.cloud, ctx.initial_panel, Label.DRAWER_PANEL, ctx.info.outward)
        except EmptySelection:
            return ctx
        return ctx.estimate(opening=d)

    def is_open(ctx, p):
        d = ctx.estimates.get("opening")
        return d is not None and d >= 0.9 * ctx.info.joint_range

    def pull_enter(ctx, p):
        d = ctx.estimates.get("opening", 0.0)
        travel = ctx.info.joint_range - d + 0.005
        b = _base(ctx, p.q)
        return _ramp_enter(_start_hold(ctx, p), p, "pull", b[:2] + travel * ctx.info.outward[:2])

    nodes = _handle_nodes(cfg, "PullBase") + [
        Node("PullBase", pull_enter, _ramp_done("pull", cfg.tol_base),
             lambda ctx, p: not _held(ctx, p, cfg), "CheckOpen", "AccumulateHandle",
             retarget=_ramp("pull", cfg.pull_speed), budget=60,
             doc="retreat the base along the cabinet's outward axis"),
        Node("CheckOpen", _done, is_open, on_failure="AccumulateHandle", budget=10, terminal=True),
    ]
    return make_tree("open_drawer", nodes, "AccumulateHandle", goal=is_open, goal_node="CheckOpen",
                     perceive=perceive)


def circular_pull_waypoints(hinge, start, sweep: float, n: int = 10) -> np.ndarray:
    """``n`` points on the hinge arc through ``start``, equally spaced in angle over ``sweep``.

    The arc lies in the horizontal plane of ``start``; the first waypoint is one
    step past ``start`` and the last is ``sweep`` radians away.
    """
    hinge = np.asarray(hinge, float)
    start = np.asarray(start, float)
    rel = start - hinge
    r = math.hypot(rel[0], rel[1])
    a0 = math.atan2(rel[1], rel[0])
    angles = a0 + sweep * np.arange(1, n + 1) / n
    return np.column_stack([hinge[0] + r * np.cos(angles), hinge[1] + r * np.sin(angles),
                            np.full(n, start[2])])


def _door_hinge(ctx: TaskContext) -> tuple[np.ndarray, float]:
    """Hinge line and panel width from the closed panel seen in the first frame."""
    panel = ctx.initial_panel.select(Label.DOOR_PANEL).points
    c = ctx.info.closed_direction
    n = ctx.info.outward
    s = panel @ c
    hinge = s.min() * c + (panel @ n).max() * n + np.array([0.0, 0.0, panel[:, 2].mean()])
    return hinge, float(s.max() - s.min())


def _arc_point(ctx: TaskContext, hinge, radius: float, angle: float, z: float) -> np.ndarray:
    c, n = ctx.info.closed_direction, ctx.info.outward
    p = hinge + radius * (math.cos(angle) * c + math.sin(angle) * n)
    p[2] = z
    return p


def build_door_tree(cfg: PolicyConfig = DEFAULT_POLICY) -> BehaviorTree:
    def perceive(ctx, p):
        ctx = _record_initial_panel(ctx, p)
        if "hinge" not in ctx.notes:
            try:
                hinge, width = _door_hinge(ctx)
            except ValueError:
                return ctx
            ctx = ctx.note(hinge=hinge, panel_width=width)
        panel = p.cloud.select(Label.DOOR_PANEL)
        try:
            phi = estimate_hinge_angle(panel, ctx.notes["hinge"], ctx.info.closed_direction, ctx.info.outward)
        except (DegenerateCloud, EmptySelection):
            return ctx
        return ctx.estimate(door_angle=phi)

    def is_open(ctx, p):
        phi = ctx.estimates.get("door_angle")
        return phi is not None and phi >= math.pi / 2

    def pull_geometry(ctx, p):
        hinge = ctx.notes["hinge"]
        rel = _tool(ctx, p.q, _frames(ctx)[0]).translation - hinge
        c, n = ctx.info.closed_direction, ctx.info.outward
        r = math.hypot(float(rel @ c), float(rel @ n))
        theta0 = math.atan2(float(rel @ n), float(rel @ c))
        return hinge, r, theta0

    def diagonal_enter(ctx, p):
        hinge, r, theta0 = pull_geometry(ctx, p)
        sweep = 2 * math.acos(max(-1.0, 1 - cfg.pull_sagitta / r))
        a = _arc_point(ctx, hinge, r, theta0, 0.0)
        b = _arc_point(ctx, hinge, r, theta0 + sweep, 0.0)
        base = _base(ctx, p.q)
        return _ramp_enter(_start_hold(ctx, p), p, "pull", base[:2] + (b - a)[:2])

    def circular_enter(ctx, p):
        hinge, r, theta0 = pull_geometry(ctx, p)
        phi = ctx.estimates.get("door_angle", 0.0)
        sweep = max(0.0, math.pi / 2 + 0.15 - phi)
        # hinge-frame arc mapped to world through the (closed, outward) basis
        c, n = ctx.info.closed_direction, ctx.info.outward
        angles = theta0 + sweep * np.arange(1, cfg.circular_waypoints + 1) / cfg.circular_waypoints
        pts = [_arc_point(ctx, hinge, r, a, ctx.grasp.position[2]) for a in angles]
        ctx = _start_hold(ctx, p).note(circle=tuple(map(tuple, pts)), circle_index=0)
        return circle_target(ctx, p, 0)

    def circle_target(ctx, p, i):
        frame = _frames(ctx)[0]
        R = _tool(ctx, p.q, frame).rotation
        ctx, t = _ik(ctx, p, [(frame, Pose(R, np.array(ctx.notes["circle"][i])))], cfg, orientation_weight=0.0)
        return _remember(ctx.note(circle_index=i), "circle", t)

    def circular_retarget(ctx, p, target):
        i = ctx.notes["circle_index"]
        if i + 1 < len(ctx.notes["circle"]) and _reached(ctx, p, target, cfg.tol_waypoint):
            try:
                return circle_target(ctx, p, i + 1)
            except NodeFailure as exc:
                return exc.context, target
        return ctx, target

    def circular_done(ctx, p):
        return (ctx.notes["circle_index"] == len(ctx.notes["circle"]) - 1
                and _reached(ctx, p, _current(ctx, "circle"), cfg.tol_grasp))

    def release_enter(ctx, p):
        return ctx, GripperCommand(GripperAction.OPEN, (_frames(ctx)[0],))

    def position_only(ctx, p, point, key):
        frame = _frames(ctx)[0]
        R = _tool(ctx, p.q, frame).rotation
        ctx, t = _ik(ctx, p, [(frame, Pose(R, point))], cfg, orientation_weight=0.0)
        return _remember(ctx, key, t)

    def reposition_enter(ctx, p):
        phi = ctx.estimates.get("door_angle", 0.0)
        z = ctx.grasp.position[2]
        e = _arc_point(ctx, ctx.notes["hinge"], ctx.notes["panel_width"] + cfg.free_edge_clearance, phi, z)
        return position_only(ctx, p, e, "edge")

    def pry_radius(ctx):
        return cfg.pry_radius_fraction * ctx.notes["panel_width"]

    def prepry_enter(ctx, p):
        phi = ctx.estimates.get("door_angle", 0.0)
        r = pry_radius(ctx)
        angle = phi - math.asin(min(1.0, cfg.pusher_radius / r)) - 0.1
        pt = _arc_point(ctx, ctx.notes["hinge"], r, max(angle, 0.05), ctx.grasp.position[2])
        return position_only(ctx, p, pt, "prepry")

    def pry_enter(ctx, p):
        r = pry_radius(ctx)
        angle = cfg.pry_target_angle + math.asin(min(1.0, cfg.pusher_radius / r))
        pt = _arc_point(ctx, ctx.notes["hinge"], r, angle, ctx.grasp.position[2])
        return position_only(ctx, p, pt, "pry")

    not_held = lambda ctx, p: not _held(ctx, p, cfg)  # noqa: E731
    if cfg.circular_pull:
        # a pull that runs out of time still leaves the door ajar for prying
        pull = Node("CircularPull", circular_enter, circular_done, not_held, "Release", "Release",
                    retarget=circular_retarget, budget=35,
                    doc=f"{cfg.circular_waypoints} gripper waypoints on the hinge arc")
        after_close = "CircularPull"
    else:
        pull = Node("DiagonalPull", diagonal_enter, _ramp_done("pull", cfg.tol_base), not_held,
                    "Release", "AccumulateHandle", retarget=_ramp("pull", cfg.pull_speed), budget=35,
                    doc="base moves along the chord of the handle's arc, away from the hinge side")
        after_close = "DiagonalPull"
    nodes = _handle_nodes(cfg, after_close, budgets=(12, 30, 20, 16)) + [
        pull,
        Node("Release", release_enter, _fingers_at_least(cfg.finger_open), on_success="Reposition",
             on_failure="AccumulateHandle", budget=14),
        Node("Reposition", reposition_enter, _settled_on("edge", 2 * cfg.tol_waypoint), on_success="PrePry",
             on_failure="AccumulateHandle", budget=20, doc="clear the panel's free edge"),
        Node("PrePry", prepry_enter, _settled_on("prepry", cfg.tol_waypoint), on_success="PryPush",
             on_failure="AccumulateHandle", budget=20, doc="fingertips just inside the open panel"),
        Node("PryPush", pry_enter, _settled_on("pry", cfg.tol_waypoint), on_success="CheckOpen",
             on_failure="AccumulateHandle", budget=25, doc="sweep the panel's inner face past 90 degrees"),
        Node("CheckOpen", _done, is_open, on_failure="AccumulateHandle", budget=6, terminal=True),
    ]
    return make_tree("open_door", nodes, "AccumulateHandle", goal=is_open, goal_node="CheckOpen",
                     perceive=perceive)


# -- bucket ----------------------------------------------------------------
def _tilt_estimate(ctx: TaskContext, p) -> float:
    a, b = (_tool(ctx, p.q, f).translation for f in _frames(ctx))
    sep = math.hypot(a[0] - b[0], a[1] - b[1])
    return math.atan2(abs(a[2] - b[2]), max(sep, 1e-9))


def _around(ctx: TaskContext, p, center, radius: float, z: float, approach) -> list:
    """Right gripper on the robot's right of ``center``, left gripper on its left."""
    _, left = _heading(ctx, p.q)
    out = []
    for frame, sign in zip(_frames(ctx), (-1.0, 1.0)):
        pos = np.array([center[0], center[1], z]) + sign * radius * left
        R = _aligned(_frame_from(left, approach), _tool(ctx, p.q, frame).rotation)
        out.append((frame, Pose(R, pos)))
    return out


def build_bucket_tree(cfg: PolicyConfig = DEFAULT_POLICY) -> BehaviorTree:
    down = -Z_AXIS

    def estimate_update(ctx, p):
        if ctx.rim is not None:
            return ctx
        merged = ctx.notes.get("bucket_cloud")
        bucket = p.cloud.select(Label.BUCKET)
        if merged is not None:
            bucket = PointCloud.concatenate([merged, bucket], frame_index=p.cloud.frame_index)
        # the same surface station seen in several frames counts once
        _, first = np.unique(bucket.points, axis=0, return_index=True)
        keep = np.zeros(len(bucket), bool)
        keep[first] = True
        bucket = bucket.mask(keep)
        frames = ctx.notes.get("bucket_frames", 0) + 1
        ctx = ctx.note(bucket_cloud=bucket, bucket_frames=frames)
        if frames < cfg.rim_frames:
            return ctx
        try:
            rim = estimate_bucket_rim(bucket, ctx.perception.rim_bin_height)
        except (NoRimFound, EmptySelection):
            return ctx
        branch = Branch.PREHENSILE if rim_graspable(rim, ctx.info.max_jaw_width, ctx.perception.rim_margin) \
            else Branch.HUG
        ctx = ctx.with_(rim=rim, branch=branch).note(bucket_center=rim.rim_center.copy())
        return ctx.estimate(rim_height=rim.rim_height, rim_radius=rim.rim_radius,
                            rim_thickness=rim.rim_thickness)

    def estimate_enter(ctx, p):
        ctx = ctx.with_(rim=None, branch=None).note(bucket_cloud=None, bucket_frames=0)
        return ctx, GripperCommand(GripperAction.OPEN)

    def branch(ctx):
        return "Prehensile/ApproachBase" if ctx.branch is Branch.PREHENSILE else "Hug/ApproachBase"

    def rim_poses(ctx, p, lift=0.0):
        rim = ctx.rim
        return _around(ctx, p, rim.rim_center, rim.rim_radius, rim.rim_height + lift, down)

    def hug_poses(ctx, p, clearance, center=None):
        rim = ctx.rim
        c = rim.rim_center if center is None else center
        return _around(ctx, p, c, rim.outer_radius + clearance, cfg.hug_height_fraction * rim.rim_height, down)

    locked = ("base_yaw", "torso")

    def approach_from(poses_fn):
        def enter(ctx, p):
            ctx, t = _ik(ctx, p, poses_fn(ctx, p), cfg, locked=locked)
            m = ctx.model
            wp = BaseWaypoint(t.solution[m.joint_index("base_x")], t.solution[m.joint_index("base_y")])
            return _remember(ctx, "approach", wp)
        return enter

    def arms_to(poses_fn, key, lock=locked):
        def enter(ctx, p):
            ctx, t = _ik(ctx, p, poses_fn(ctx, p), cfg, locked=lock)
            return _remember(ctx, key, t)
        return enter

    def lift_enter(ctx, p):
        return _remember(ctx, "lift", BaseWaypoint(height=_base(ctx, p.q)[3] + cfg.lift_height))

    def move_enter(ctx, p):
        t = ctx.info.target_center
        c = ctx.notes["bucket_center"]
        b = _base(ctx, p.q)
        ctx = ctx.note(carried_shift=np.array([t[0] - c[0], t[1] - c[1], 0.0]))
        return _remember(ctx, "move", BaseWaypoint(b[0] + t[0] - c[0], b[1] + t[1] - c[1]))

    def unhug_poses(ctx, p):
        c = ctx.notes["bucket_center"] + ctx.notes.get("carried_shift", np.zeros(3))
        rim = ctx.rim
        z = np.mean([_tool(ctx, p.q, f).translation[2] for f in _frames(ctx)])
        return _around(ctx, p, c, rim.outer_radius + cfg.pre_hug_clearance, z, down)

    def placed(ctx, p):
        try:
            rim = estimate_bucket_rim(p.cloud.select(Label.BUCKET), ctx.perception.rim_bin_height)
        except (NoRimFound, EmptySelection):
            return False
        t = ctx.info.target_center
        return math.hypot(rim.rim_center[0] - t[0], rim.rim_center[1] - t[1]) <= ctx.info.target_radius

    tilted = lambda ctx, p: _tilt_estimate(ctx, p) > cfg.tilt_limit  # noqa: E731
    lift_ok = _base_settled_on("lift", cfg.tol_base)
    move_ok = _base_settled_on("move", cfg.tol_base)

    nodes = [
        Node("EstimateRim", estimate_enter, lambda ctx, p: ctx.rim is not None, on_failure="EstimateRim",
             branch=branch, branches=("Prehensile/ApproachBase", "Hug/ApproachBase"), update=estimate_update,
             budget=5, doc="highest well-populated z-slice; thin rims are grasped, thick ones hugged"),
        # prehensile branch
        Node("Prehensile/ApproachBase", approach_from(lambda c, p: rim_poses(c, p, cfg.pregrasp_offset)),
             _base_settled_on("approach", cfg.tol_waypoint), on_success="Prehensile/DualGrasp",
             on_failure="EstimateRim", budget=30),
        Node("Prehensile/DualGrasp", arms_to(rim_poses, "grasp"), _settled_on("grasp", cfg.tol_grasp),
             on_success="Prehensile/CloseGrippers", on_failure="EstimateRim", budget=40,
             doc="opposite rim points, jaws straddling the wall"),
        Node("Prehensile/CloseGrippers", lambda ctx, p: (ctx, GripperCommand(GripperAction.CLOSE)),
             _fingers_at_most(cfg.finger_closed), on_success="Prehensile/LiftViaTorso", on_failure="EstimateRim",
             budget=15),
        Node("Prehensile/LiftViaTorso", lift_enter, lift_ok, tilted, "Prehensile/MoveToTarget", "EstimateRim",
             budget=20),
        Node("Prehensile/MoveToTarget", move_enter, move_ok, tilted, "Prehensile/LowerAndRelease", "EstimateRim",
             budget=60),
        Node("Prehensile/LowerAndRelease", _open_all, _fingers_at_least(cfg.finger_open), on_success="Done",
             on_failure="EstimateRim", budget=15),
        # hug branch
        Node("Hug/ApproachBase", approach_from(lambda c, p: hug_poses(c, p, cfg.pre_hug_clearance)),
             _base_settled_on("approach", cfg.tol_waypoint), on_success="Hug/PreHug", on_failure="EstimateRim",
             budget=25),
        Node("Hug/PreHug", arms_to(lambda c, p: hug_poses(c, p, cfg.pre_hug_clearance), "prehug"),
             _settled_on("prehug", cfg.tol_waypoint), on_success="Hug/Hug", on_failure="EstimateRim", budget=35,
             doc="arms spread around the body"),
        Node("Hug/Hug", arms_to(lambda c, p: hug_poses(c, p, cfg.hug_clearance), "hug"),
             _settled_on("hug", cfg.tol_base), on_success="Hug/LiftViaTorso", on_failure="EstimateRim", budget=30),
        Node("Hug/LiftViaTorso", lift_enter, lift_ok, tilted, "Hug/MoveToTarget", "EstimateRim", budget=20),
        Node("Hug/MoveToTarget", move_enter, move_ok, tilted, "Hug/UnHug", "EstimateRim", budget=60),
        Node("Hug/UnHug", arms_to(unhug_poses, "unhug", lock=("base_x", "base_y", "base_yaw", "torso")),
             _settled_on("unhug", cfg.tol_waypoint), on_success="Done", on_failure="EstimateRim", budget=20),
        Node("Done", _done, placed, on_failure="EstimateRim", budget=5, terminal=True),
    ]
    return make_tree("move_bucket", nodes, "EstimateRim")


# -- chair -----------------------------------------------------------------
def build_chair_tree(cfg: PolicyConfig = DEFAULT_POLICY) -> BehaviorTree:
    def perceive(ctx, p):
        chair = p.cloud.select(Label.CHAIR)
        try:
            c = estimate_chair_center(chair, ctx.perception.cushion_height)
        except (EmptySelection, DegenerateCloud):
            return ctx
        return ctx.estimate(chair_center=c)

    def error(ctx):
        c = ctx.estimates.get("chair_center")
        if c is None:
            return None
        t = ctx.info.target_center
        return np.array([t[0] - c[0], t[1] - c[1]])

    def at_target(ctx, p):
        e = error(ctx)
        return e is not None and float(np.linalg.norm(e)) <= cfg.nudge_done_fraction * ctx.info.target_radius

    def estimate_update(ctx, p):
        c = ctx.estimates.get("chair_center")
        if c is None:
            return ctx
        _, left = _heading(ctx, p.q)
        chair = p.cloud.select(Label.CHAIR)
        # hug around the middle of the lateral extremes so both arms get the same gap
        lo, hi = chair_span_along(chair, left, c, ctx.perception.cushion_height)
        return ctx.with_(chair_center=c + 0.5 * (lo + hi) * left, chair_extent=0.5 * (hi - lo))

    def hug_poses(ctx, p):
        f, left = _heading(ctx, p.q)
        return _around(ctx, p, ctx.chair_center, ctx.chair_extent + cfg.hug_clearance, ctx.chair_center[2], f)

    def approach_enter(ctx, p):
        ctx, t = _ik(ctx, p, hug_poses(ctx, p), cfg, locked=("base_yaw", "torso"))
        m = ctx.model
        wp = BaseWaypoint(t.solution[m.joint_index("base_x")], t.solution[m.joint_index("base_y")])
        return _remember(ctx, "approach", wp)

    def hug_enter(ctx, p):
        ctx, t = _ik(ctx, p, hug_poses(ctx, p), cfg, locked=("base_yaw", "torso"))
        return _remember(ctx, "hug", t)

    def grip_mid(ctx, p):
        return np.mean([_tool(ctx, p.q, f).translation[:2] for f in _frames(ctx)], axis=0)

    def push_enter(ctx, p):
        e = error(ctx)
        b = _base(ctx, p.q)
        c = ctx.estimates["chair_center"]
        ctx = ctx.note(hug_offset=c[:2] - grip_mid(ctx, p))
        e = cfg.push_fraction * e
        return _remember(ctx, "push", BaseWaypoint(b[0] + e[0], b[1] + e[1]))

    def lost(ctx, p):
        c = ctx.estimates.get("chair_center")
        off = ctx.notes.get("hug_offset")
        if c is None or off is None:
            return False
        return float(np.linalg.norm(c[:2] - grip_mid(ctx, p) - off)) > 0.1

    def nudge_target(ctx, p):
        e = error(ctx)
        b = _base(ctx, p.q)
        step = cfg.nudge_gain * e
        n = float(np.linalg.norm(step))
        if n > cfg.nudge_cap:
            step *= cfg.nudge_cap / n
        return BaseWaypoint(b[0] + step[0], b[1] + step[1])

    def nudge_enter(ctx, p):
        return ctx, nudge_target(ctx, p)

    def nudge_retarget(ctx, p, target):
        return ctx, nudge_target(ctx, p)

    nodes = [
        Node("EstimateChair", _done, lambda ctx, p: ctx.chair_center is not None, on_success="ApproachBase",
             on_failure="EstimateChair", update=estimate_update, budget=5,
             doc="center of the PCA box around the chair's upper body"),
        Node("ApproachBase", approach_enter, _base_settled_on("approach", cfg.tol_waypoint), on_success="Hug",
             on_failure="EstimateChair", budget=30, doc="behind the chair, facing the target"),
        Node("Hug", hug_enter, _settled_on("hug", cfg.tol_base), on_success="PushToTarget",
             on_failure="EstimateChair", budget=40),
        Node("PushToTarget", push_enter, _base_settled_on("push", 2 * cfg.tol_base), lost, "Nudge",
             "EstimateChair", budget=60),
        Node("Nudge", nudge_enter, at_target, lost, "Done", "EstimateChair", retarget=nudge_retarget, budget=40,
             doc="re-estimate the center every tick and step the base toward the target"),
        Node("Done", _done, lambda ctx, p: True, budget=5, terminal=True),
    ]
    return make_tree("push_chair", nodes, "EstimateChair", goal=at_target, goal_node="Done", perceive=perceive)


BUILDERS = {
    Task.OPEN_DRAWER: build_drawer_tree,
    Task.OPEN_DOOR: build_door_tree,
    Task.MOVE_BUCKET: build_bucket_tree,
    Task.PUSH_CHAIR: build_chair_tree,
}


def build_tree(task, cfg: PolicyConfig = DEFAULT_POLICY) -> BehaviorTree:
    return BUILDERS[Task.parse(task)](cfg)
