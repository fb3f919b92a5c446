"""Kinematics self-checks behind the ``ik-check`` command.

The FK oracle here multiplies homogeneous 4x4 transforms link by link and
shares no code with the model's chain walker.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .geometry import rotation_log
from .kinematics import (IkRequest, IkTarget, KinematicModel, forward_kinematics, jacobian, load_stock_model,
                         solve_ik, within_limits)


def _homogeneous(R, t) -> np.ndarray:
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = t
    return T


def _rodrigues(axis, angle: float) -> np.ndarray:
    x, y, z = axis
    c, s = math.cos(angle), math.sin(angle)
    C = 1 - c
    return np.array([[c + x * x * C, x * y * C - z * s, x * z * C + y * s],
                     [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
                     [z * x * C - y * s, z * y * C + x * s, c + z * z * C]])


def naive_fk(model: KinematicModel, q, frame: str) -> np.ndarray:
    """4x4 world transform of ``frame`` as a plain product of per-link transforms."""
    T = np.eye(4)
    for link in model.path(frame):
        parent_T = _homogeneous(model._R0[link], model._t0[link])
        T = T @ parent_T
        ji = model.joint_of(link)
        if ji >= 0:
            j = model.joints[ji]
            if j.kind.prismatic:
                T = T @ _homogeneous(np.eye(3), j.axis * q[ji])
            else:
                T = T @ _homogeneous(_rodrigues(j.axis, q[ji]), np.zeros(3))
    return T


def fd_jacobian(model: KinematicModel, q, frame: str, h: float = 1e-6) -> np.ndarray:
    """Central differences: linear rows from positions, angular rows from ``log(R+ R-^T)``."""
    J = np.zeros((6, model.dof))
    for i in range(model.dof):
        qp, qm = q.copy(), q.copy()
        qp[i] += h
        qm[i] -= h
        Tp, Tm = naive_fk(model, qp, frame), naive_fk(model, qm, frame)
        J[:3, i] = (Tp[:3, 3] - Tm[:3, 3]) / (2 * h)
        J[3:, i] = rotation_log(Tp[:3, :3] @ Tm[:3, :3].T) / (2 * h)
    return J


def random_state(model: KinematicModel, rng, margin: float = 0.1) -> np.ndarray:
    lo = np.maximum(model.lower, -3.0)
    hi = np.minimum(model.upper, 3.0)
    # narrow joints (fingers) keep a quarter of their range as margin at most
    m = np.minimum(margin, 0.25 * (hi - lo))
    return rng.uniform(lo + m, hi - m)


@dataclass(frozen=True)
class CheckReport:
    name: str
    cases: int
    passed: int
    worst: float
    seconds: float

    @property
    def rate(self) -> float:
        return self.passed / self.cases if self.cases else 0.0

    def line(self) -> str:
        return f"{self.name:<28} {self.passed:>4}/{self.cases:<4} worst={self.worst:.3e}  {self.seconds:6.2f}s"


def check_fk(model: KinematicModel, n: int, seed: int, tol: float = 1e-12) -> CheckReport:
    rng = np.random.default_rng([seed, 1])
    t0 = time.perf_counter()
    worst, ok = 0.0, 0
    for _ in range(n):
        q = random_state(model, rng)
        err = 0.0
        for f in model.gripper_frames + ("head",):
            P = forward_kinematics(model, q, f)
            T = naive_fk(model, q, f)
            err = max(err, float(np.abs(P.matrix - T).max()))
        worst = max(worst, err)
        ok += err <= tol
    return CheckReport(f"fk[{model.name}]", n, ok, worst, time.perf_counter() - t0)


def check_jacobian(model: KinematicModel, n: int, seed: int, tol: float = 1e-4) -> CheckReport:
    rng = np.random.default_rng([seed, 2])
    t0 = time.perf_counter()
    worst, ok = 0.0, 0
    for _ in range(n):
        q = random_state(model, rng)
        err = 0.0
        for f in model.gripper_frames:
            err = max(err, float(np.abs(jacobian(model, q, f) - fd_jacobian(model, q, f)).max()))
        worst = max(worst, err)
        ok += err <= tol
    return CheckReport(f"jacobian[{model.name}]", n, ok, worst, time.perf_counter() - t0)


def near_seed_request(model: KinematicModel, rng, frames, spread: float = 0.1,
                      base_min_distance=None) -> tuple[IkRequest, np.ndarray]:
    q_true = random_state(model, rng, margin=0.2)
    for i in model.finger_joints:
        q_true[i] = model.lower[i]
    seed = np.clip(q_true + rng.uniform(-spread, spread, model.dof), model.lower, model.upper)
    seed[list(model.finger_joints)] = q_true[list(model.finger_joints)]
    targets = tuple(IkTarget(f, forward_kinematics(model, q_true, f)) for f in frames)
    return IkRequest(targets, seed, base_min_distance=base_min_distance), q_true


def pose_errors(model: KinematicModel, q, targets) -> tuple[float, float]:
    pos, rot = 0.0, 0.0
    for t in targets:
        P = forward_kinematics(model, q, t.frame)
        pos = max(pos, float(np.linalg.norm(P.translation - t.pose.translation)))
        rot = max(rot, float(np.linalg.norm(rotation_log(t.pose.rotation.T @ P.rotation))))
    return pos, rot


def check_ik(model: KinematicModel, n: int, seed: int, dual: bool = False,
             pos_tol: float = 1e-3, rot_tol_deg: float = 0.5) -> CheckReport:
    rng = np.random.default_rng([seed, 3 + int(dual)])
    frames = model.gripper_frames if dual else model.gripper_frames[:1]
    t0 = time.perf_counter()
    ok, worst = 0, 0.0
    for _ in range(n):
        req, _ = near_seed_request(model, rng, frames)
        res = solve_ik(model, req)
        pos, rot = pose_errors(model, res.q, req.targets)
        good = (res.achieved and pos < pos_tol and math.degrees(rot) < rot_tol_deg
                and within_limits(model, res.q))
        ok += good
        worst = max(worst, pos)
    label = "ik-dual" if dual else "ik"
    return CheckReport(f"{label}[{model.name}]", n, ok, worst, time.perf_counter() - t0)


def ik_check(seed: int = 0, n_fk: int = 200, n_ik: int = 500) -> list[CheckReport]:
    out = []
    for name in ("single_arm", "dual_arm"):
        m = load_stock_model(name)
        out.append(check_fk(m, n_fk, seed))
        out.append(check_jacobian(m, n_fk, seed))
        out.append(check_ik(m, n_ik, seed))
    out.append(check_ik(load_stock_model("dual_arm"), n_ik, seed, dual=True))
    return out


__all__ = ["naive_fk", "fd_jacobian", "random_state", "CheckReport", "check_fk", "check_jacobian", "check_ik",
           "near_seed_request", "pose_errors", "ik_check"]
