"""Motion targets emitted by behavior nodes and their resolution into joint setpoints."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from ..geometry import Pose
from ..kinematics import IkRequest, IkTarget, KinematicModel, solve_ik


class GripperAction(Enum):
    OPEN = "open"
    CLOSE = "close"


@dataclass(frozen=True, eq=False)
class GripperPoses:
    poses: tuple[tuple[str, Pose], ...]
    orientation_weight: float = 1.0
    locked: tuple[str, ...] = ("base_yaw",)  # joints the solver must leave alone
    base_min_distance: Optional[float] = 0.35
    # filled in when the owning node resolves the target on entry
    solution: Optional[np.ndarray] = None
    achieved: Optional[bool] = None

    @property
    def kind(self) -> str:
        return "gripper_poses"


@dataclass(frozen=True, eq=False)
class BaseWaypoint:
    x: Optional[float] = None
    y: Optional[float] = None
    yaw: Optional[float] = None
    height: Optional[float] = None

    @property
    def kind(self) -> str:
        return "base_waypoint"


@dataclass(frozen=True, eq=False)
class GripperCommand:
    action: GripperAction
    frames: Optional[tuple[str, ...]] = None  # None means every gripper

    @property
    def kind(self) -> str:
        return "gripper_command"


@dataclass(frozen=True, eq=False)
class Hold:
    @property
    def kind(self) -> str:
        return "hold"


MotionTarget = GripperPoses | BaseWaypoint | GripperCommand | Hold

_BASE = ("base_x", "base_y", "base_yaw", "torso")


def _ik_seeds(model: KinematicModel, state, reference):
    yield state
    # arms back in the ready posture, base where it is
    ready = state.copy()
    for j in ("j2", "j4", "j6"):
        for side in ("r_", "l_"):
            name = side + j
            if name in model.joint_names:
                ready[model.joint_index(name)] = {"j2": 0.6, "j4": -1.2, "j6": 0.6}[j]
    yield ready


def solve_gripper_poses(target: GripperPoses, model: KinematicModel, state,
                        reference=None) -> tuple[np.ndarray, bool]:
    state = model.check_state(state)
    ref = state if reference is None else model.check_state(reference)
    locked = {model.joint_index(n) for n in target.locked if n in model.joint_names}
    locked |= set(model.finger_joints)
    frames = [f for f, _ in target.poses]
    moving = sorted({j for f in frames + [model.base_frame] for j in model.path_joints(f)} - locked)
    fixed = np.setdiff1d(np.arange(model.dof), moving)
    targets = tuple(IkTarget(f, p, 1.0, target.orientation_weight) for f, p in target.poses)
    best = None
    for seed in _ik_seeds(model, state, ref):
        seed = seed.copy()
        seed[fixed] = ref[fixed]
        req = IkRequest(targets, seed, base_min_distance=target.base_min_distance,
                        tolerance_pos=1e-3, tolerance_rot=1e-2, active_joints=tuple(moving))
        res = solve_ik(model, req)
        if res.achieved:
            return res.q, True
        if best is None:
            best = res.q
    return best, False


def resolve_with_status(target: MotionTarget, model: KinematicModel, state,
                        reference=None) -> tuple[np.ndarray, bool]:
    """Desired joint state for ``target`` plus whether it is attainable.

    Joints the target does not address keep their values from ``reference``
    (the previous setpoint), or from ``state`` when no reference is given.
    """
    state = model.check_state(state)
    base = (state if reference is None else model.check_state(reference)).copy()
    if isinstance(target, Hold):
        return base, True
    if isinstance(target, BaseWaypoint):
        for name, v in zip(_BASE, (target.x, target.y, target.yaw, target.height)):
            if v is not None:
                base[model.joint_index(name)] = v
        return np.minimum(np.maximum(base, model.lower), model.upper), True
    if isinstance(target, GripperCommand):
        frames = target.frames or model.gripper_frames
        for f in frames:
            for i in model.fingers[f]:
                base[i] = model.upper[i] if target.action is GripperAction.OPEN else model.lower[i]
        return base, True
    if target.solution is not None:
        return np.array(target.solution), bool(target.achieved)
    return solve_gripper_poses(target, model, state, reference)


def resolve_target(target: MotionTarget, model: KinematicModel, state, reference=None) -> np.ndarray:
    return resolve_with_status(target, model, state, reference)[0]
