"""Robot joint tree, forward kinematics, geometric Jacobian and constrained IK.

Joint states are plain float vectors ordered like ``KinematicModel.joints``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidParameter, NonFiniteTarget, UnknownFrame
from .geometry import Pose, axis_angle_matrix, rotation_log, unit

WORLD = "world"


class JointKind(Enum):
    PRISMATIC_X = "prismatic_x"
    PRISMATIC_Y = "prismatic_y"
    PRISMATIC_Z = "prismatic_z"
    REVOLUTE_Z = "revolute_z"
    REVOLUTE = "revolute"  # arbitrary axis

    @property
    def prismatic(self) -> bool:
        return self.value.startswith("prismatic")


_FIXED_AXES = {
    JointKind.PRISMATIC_X: (1.0, 0.0, 0.0),
    JointKind.PRISMATIC_Y: (0.0, 1.0, 0.0),
    JointKind.PRISMATIC_Z: (0.0, 0.0, 1.0),
    JointKind.REVOLUTE_Z: (0.0, 0.0, 1.0),
}


@dataclass(frozen=True, eq=False)
class JointSpec:
    name: str
    kind: JointKind
    parent: str
    child: str
    origin: Pose
    lower: float
    upper: float
    velocity_limit: float
    group: str = "arm"
    axis: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.lower < self.upper:
            raise InvalidParameter(f"{self.name}: lower limit must be below upper")
        if self.velocity_limit <= 0:
            raise InvalidParameter(f"{self.name}: velocity limit must be positive")
        if self.kind is JointKind.REVOLUTE:
            if self.axis is None:
                raise InvalidParameter(f"{self.name}: revolute joint needs an axis")
            axis = unit(self.axis)
        else:
            axis = np.array(_FIXED_AXES[self.kind])
        axis.setflags(write=False)
        object.__setattr__(self, "axis", axis)


@dataclass(frozen=True, eq=False)
class FixedFrame:
    name: str
    parent: str
    origin: Pose


def rpy_matrix(r: float, p: float, y: float) -> np.ndarray:
    cr, sr, cp, sp, cy, sy = math.cos(r), math.sin(r), math.cos(p), math.sin(p), math.cos(y), math.sin(y)
    return np.array([
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ])


def _pose_from_dict(d: Optional[dict]) -> Pose:
    if not d:
        return Pose()
    return Pose(rpy_matrix(*d.get("rpy", (0.0, 0.0, 0.0))), d.get("xyz", (0.0, 0.0, 0.0)))


class KinematicModel:
    """Immutable joint tree rooted at the world frame."""

    def __init__(self, joints: Sequence[JointSpec], frames: Sequence[FixedFrame],
                 gripper_frames: Sequence[str], base_frame: str,
                 fingers: Optional[dict] = None, name: str = "robot"):
        self.name = name
        self.joints = tuple(joints)
        self.frames = tuple(frames)
        self.gripper_frames = tuple(gripper_frames)
        self.base_frame = base_frame
        self.joint_names = tuple(j.name for j in self.joints)
        self._joint_index = {j.name: i for i, j in enumerate(self.joints)}
        if len(self._joint_index) != len(self.joints):
            raise InvalidParameter("duplicate joint names")

        # link table: name -> (parent, origin 4x4, joint index or -1)
        links: dict[str, tuple[str, Pose, int]] = {}
        for i, j in enumerate(self.joints):
            links[j.child] = (j.parent, j.origin, i)
        for f in self.frames:
            links[f.name] = (f.parent, f.origin, -1)
        if WORLD in links:
            raise InvalidParameter("'world' cannot be a child link")
        if len(links) != len(self.joints) + len(self.frames):
            raise InvalidParameter("duplicate link names")
        self._links = links
        self._paths: dict[str, tuple[str, ...]] = {}
        for name in links:
            self._paths[name] = self._resolve_path(name)

        for g in self.gripper_frames:
            self.path(g)
        self.path(base_frame)

        self.lower = np.array([j.lower for j in self.joints])
        self.upper = np.array([j.upper for j in self.joints])
        self.velocity_limits = np.array([j.velocity_limit for j in self.joints])
        self.groups = tuple(j.group for j in self.joints)
        for a in (self.lower, self.upper, self.velocity_limits):
            a.setflags(write=False)
        self.fingers = {k: tuple(self.joint_index(n) for n in v) for k, v in (fingers or {}).items()}
        finger_set = {i for v in self.fingers.values() for i in v}
        self.finger_joints = tuple(sorted(finger_set))
        self.base_joints = tuple(i for i, j in enumerate(self.joints) if j.group.startswith("base"))

        # compact per-link arrays for the hot loops
        self._R0 = {n: o.rotation for n, (_, o, _) in links.items()}
        self._t0 = {n: o.translation for n, (_, o, _) in links.items()}

    def _resolve_path(self, name: str) -> tuple[str, ...]:
        path = []
        seen = set()
        cur = name
        while cur != WORLD:
            if cur in seen:
                raise InvalidParameter(f"kinematic loop through {cur}")
            seen.add(cur)
            if cur not in self._links:
                raise InvalidParameter(f"link {cur} is not connected to the world")
            path.append(cur)
            cur = self._links[cur][0]
        return tuple(reversed(path))

    @property
    def dof(self) -> int:
        return len(self.joints)

    def joint_index(self, name: str) -> int:
        try:
            return self._joint_index[name]
        except KeyError:
            raise UnknownFrame(f"unknown joint {name}") from None

    def path(self, frame: str) -> tuple[str, ...]:
        if frame == WORLD:
            return ()
        try:
            return self._paths[frame]
        except KeyError:
            raise UnknownFrame(f"unknown frame {frame}") from None

    def path_joints(self, frame: str) -> tuple[int, ...]:
        return tuple(self._links[n][2] for n in self.path(frame) if self._links[n][2] >= 0)

    def link_parent(self, frame: str) -> str:
        return self._links[frame][0]

    def joint_of(self, frame: str) -> int:
        return self._links[frame][2]

    @property
    def link_names(self) -> tuple[str, ...]:
        return tuple(self._links)

    def zero(self) -> np.ndarray:
        return np.clip(np.zeros(self.dof), self.lower, self.upper)

    def check_state(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.dof,):
            raise DimensionMismatch(f"expected {self.dof} joint values, got {q.shape}")
        return q

    # -- serialisation -------------------------------------------------
    @classmethod
    def from_dict(cls, d: dict) -> "KinematicModel":
        joints = []
        for j in d["joints"]:
            kind = JointKind(j["kind"])
            lo, hi = j["limits"]
            joints.append(JointSpec(j["name"], kind, j["parent"], j["child"], _pose_from_dict(j.get("origin")),
                                    float(lo), float(hi), float(j["velocity_limit"]), j.get("group", "arm"),
                                    None if "axis" not in j else np.asarray(j["axis"], float)))
        frames = [FixedFrame(f["name"], f["parent"], _pose_from_dict(f.get("origin"))) for f in d.get("frames", [])]
        return cls(joints, frames, d["gripper_frames"], d["base_frame"], d.get("fingers"), d.get("name", "robot"))

    @classmethod
    def load(cls, path) -> "KinematicModel":
        return cls.from_dict(json.loads(Path(path).read_text()))

    # -- kinematics ----------------------------------------------------
    def _chain(self, q: np.ndarray, frames: Sequence[str], want_axes: bool = False):
        """World rotation/translation of every link on the paths to ``frames``.

        With ``want_axes``, also returns per-joint (world axis, world origin).
        """
        cache: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        axes: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        links = self._links
        for frame in frames:
            R = np.eye(3)
            t = np.zeros(3)
            for name in self.path(frame):
                if name in cache:
                    R, t = cache[name]
                    continue
                t = R @ self._t0[name] + t
                R = R @ self._R0[name]
                ji = links[name][2]
                if ji >= 0:
                    joint = self.joints[ji]
                    a = R @ joint.axis
                    if want_axes:
                        axes[ji] = (a, t)
                    if joint.kind.prismatic:
                        t = t + a * q[ji]
                    else:
                        R = R @ axis_angle_matrix(joint.axis, q[ji])
                cache[name] = (R, t)
        return cache, axes


def forward_kinematics(model: KinematicModel, state, frame: str) -> Pose:
    q = model.check_state(state)
    if frame == WORLD:
        return Pose()
    cache, _ = model._chain(q, [frame])
    R, t = cache[frame]
    return Pose(R, t)


def _frame_jacobian(model: KinematicModel, q, frame, cache, axes) -> np.ndarray:
    J = np.zeros((6, model.dof))
    p = cache[frame][1]
    for ji in model.path_joints(frame):
        a, o = axes[ji]
        if model.joints[ji].kind.prismatic:
            J[:3, ji] = a
        else:
            J[:3, ji] = np.cross(a, p - o)
            J[3:, ji] = a
    return J


def jacobian(model: KinematicModel, state, frame: str) -> np.ndarray:
    """6 x DOF geometric Jacobian: linear rows then angular rows, world frame."""
    q = model.check_state(state)
    if frame == WORLD:
        return np.zeros((6, model.dof))
    cache, axes = model._chain(q, [frame], want_axes=True)
    return _frame_jacobian(model, q, frame, cache, axes)


def clamp_to_limits(model: KinematicModel, state) -> np.ndarray:
    q = model.check_state(state)
    return np.minimum(np.maximum(q, model.lower), model.upper)


def within_limits(model: KinematicModel, state, tol: float = 0.0) -> bool:
    q = model.check_state(state)
    return bool(np.all(q >= model.lower - tol) and np.all(q <= model.upper + tol))


@dataclass(frozen=True, eq=False)
class IkTarget:
    frame: str
    pose: Pose
    position_weight: float = 1.0
    orientation_weight: float = 1.0


@dataclass(frozen=True, eq=False)
class IkRequest:
    targets: tuple[IkTarget, ...]
    seed: np.ndarray
    base_min_distance: Optional[float] = None
    max_iterations: int = 100
    tolerance_pos: float = 1e-4
    tolerance_rot: float = 1e-3
    # joints the solver may move; default is every joint on a target or base path
    active_joints: Optional[tuple[int, ...]] = None


@dataclass(frozen=True, eq=False)
class IkResult:
    q: np.ndarray
    achieved: bool
    residuals: tuple[tuple[float, float], ...]
    iterations: int
    base_distances: tuple[float, ...] = ()

    def __iter__(self):
        # allows ``q, achieved, residuals = solve_ik(...)``
        return iter((self.q, self.achieved, self.residuals))


@dataclass(frozen=True)
class IkConfig:
    damping: float = 1e-2
    damping_up: float = 10.0
    damping_down: float = 2.0
    damping_max: float = 1e8
    base_penalty_weight: float = 10.0
    # the penalty aims this far inside the feasible side of the constraint
    base_margin: float = 1e-4
    max_step_pos: float = 0.3
    max_step_rot: float = 0.6


def _validate_request(model: KinematicModel, request: IkRequest) -> np.ndarray:
    seed = np.asarray(request.seed, dtype=float)
    if seed.shape != (model.dof,):
        raise DimensionMismatch(f"seed has shape {seed.shape}, model has {model.dof} DOF")
    if not request.targets:
        raise InvalidParameter("IK request needs at least one target")
    if len(request.targets) > len(model.gripper_frames):
        raise InvalidParameter("more targets than gripper frames")
    if request.tolerance_pos <= 0 or request.tolerance_rot <= 0:
        raise InvalidParameter("tolerances must be positive")
    for t in request.targets:
        model.path(t.frame)
        if not (np.all(np.isfinite(t.pose.rotation)) and np.all(np.isfinite(t.pose.translation))):
            raise NonFiniteTarget(f"target for {t.frame} is not finite")
        if not (math.isfinite(t.position_weight) and math.isfinite(t.orientation_weight)):
            raise NonFiniteTarget("target weights must be finite")
    if not np.all(np.isfinite(seed)):
        raise NonFiniteTarget("seed is not finite")
    if request.base_min_distance is not None and not math.isfinite(request.base_min_distance):
        raise NonFiniteTarget("base_min_distance is not finite")
    return seed


def solve_ik(model: KinematicModel, request: IkRequest, config: IkConfig = IkConfig()) -> IkResult:
    """Levenberg-Marquardt damped least squares over all stacked targets.

    Joint limits are enforced by clamping after every step. When
    ``base_min_distance`` is set, a quadratic penalty pushes the planar distance
    between the base frame origin and each target position above it; a
    solution only counts as achieved if that constraint holds exactly.
    """
    seed = _validate_request(model, request)
    targets = request.targets
    frames = [t.frame for t in targets]
    dmin = request.base_min_distance
    use_base = dmin is not None
    chain_frames = frames + ([model.base_frame] if use_base else [])
    if request.active_joints is None:
        act = sorted({j for f in chain_frames for j in model.path_joints(f)})
    else:
        act = sorted(set(request.active_joints))
    act = np.array(act, dtype=int)
    n_t = len(targets)
    w_pen = math.sqrt(config.base_penalty_weight)
    tp = [t.pose.translation for t in targets]
    tR = [t.pose.rotation for t in targets]
    wp = [t.position_weight for t in targets]
    wo = [t.orientation_weight for t in targets]

    def evaluate(q, want_jac):
        cache, axes = model._chain(q, chain_frames, want_axes=want_jac)
        e = np.zeros(6 * n_t + (n_t if use_base else 0))
        res = []
        dists = []
        J = np.zeros((len(e), model.dof)) if want_jac else None
        for k, f in enumerate(frames):
            R, p = cache[f]
            ep = tp[k] - p
            er = rotation_log(tR[k] @ R.T)
            e[6 * k:6 * k + 3] = wp[k] * ep
            e[6 * k + 3:6 * k + 6] = wo[k] * er
            res.append((float(np.linalg.norm(ep)), float(np.linalg.norm(er))))
            if want_jac:
                Jf = _frame_jacobian(model, q, f, cache, axes)
                J[6 * k:6 * k + 3] = wp[k] * Jf[:3]
                J[6 * k + 3:6 * k + 6] = wo[k] * Jf[3:]
        if use_base:
            pb = cache[model.base_frame][1]
            Jb = _frame_jacobian(model, q, model.base_frame, cache, axes) if want_jac else None
            for k in range(n_t):
                diff = tp[k][:2] - pb[:2]
                d = float(np.hypot(diff[0], diff[1]))
                dists.append(d)
                goal = dmin + config.base_margin
                if d < goal:
                    row = 6 * n_t + k
                    e[row] = w_pen * (goal - d)
                    if want_jac and d > 1e-12:
                        J[row] = w_pen * (-(diff / d) @ Jb[:2])
        return e, res, dists, J

    def achieved(res, dists):
        # a zero orientation weight means the target constrains position only
        ok = all(p < request.tolerance_pos and (r < request.tolerance_rot or w == 0.0)
                 for (p, r), w in zip(res, wo))
        if use_base:
            ok = ok and all(d >= dmin for d in dists)
        return ok

    q = clamp_to_limits(model, seed)
    e, res, dists, J = evaluate(q, True)
    cost = float(e @ e)
    lam = config.damping
    it = 0
    eye = np.eye(len(act))
    while it < request.max_iterations and not achieved(res, dists):
        it += 1
        step_e = e.copy()
        for k in range(n_t):
            for sl, cap in ((slice(6 * k, 6 * k + 3), config.max_step_pos),
                            (slice(6 * k + 3, 6 * k + 6), config.max_step_rot)):
                n = np.linalg.norm(step_e[sl])
                if n > cap:
                    step_e[sl] *= cap / n
        Ja = J[:, act]
        H = Ja.T @ Ja
        g = Ja.T @ step_e
        at_lo = q[act] <= model.lower[act]
        at_hi = q[act] >= model.upper[act]
        improved = False
        while lam <= config.damping_max:
            dq = np.linalg.solve(H + lam * eye, g)
            # joints pinned at a limit and pushed outward drop out of this step
            for _ in range(3):
                blocked = (at_lo & (dq < 0)) | (at_hi & (dq > 0))
                if not blocked.any():
                    break
                free = ~blocked
                dq = np.zeros(len(act))
                dq[free] = np.linalg.solve(H[np.ix_(free, free)] + lam * eye[np.ix_(free, free)], g[free])
            q_new = q.copy()
            q_new[act] += dq
            q_new = np.minimum(np.maximum(q_new, model.lower), model.upper)
            e_new, res_new, d_new, _ = evaluate(q_new, False)
            c_new = float(e_new @ e_new)
            if c_new < cost:
                improved = True
                lam = max(lam / config.damping_down, 1e-12)
                break
            lam *= config.damping_up
        if not improved:
            break
        q = q_new
        e, res, dists, J = evaluate(q, True)
        cost = float(e @ e)
    return IkResult(q, achieved(res, dists), tuple(res), it, tuple(dists))


@lru_cache(maxsize=None)
def load_stock_model(name: str) -> KinematicModel:
    """``name`` is ``"single_arm"`` (13 DOF) or ``"dual_arm"`` (22 DOF)."""
    text = resources.files("homemanip.models").joinpath(f"{name}.json").read_text()
    return KinematicModel.from_dict(json.loads(text))
