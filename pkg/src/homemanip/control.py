"""Joint-space velocity control: grouped PID, output low-pass, action scaling."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidParameter


class JointGroup(Enum):
    BASE_TRANSLATION = "base_translation"
    BASE_ROTATION = "base_rotation"
    BASE_HEIGHT = "base_height"
    ARM = "arm"
    GRIPPER = "gripper"


@dataclass(frozen=True)
class PidGains:
    kp: float
    ki: float
    kd: float = 0.0

    def __post_init__(self):
        for v in (self.kp, self.ki, self.kd):
            if not math.isfinite(v) or v < 0:
                raise InvalidParameter("PID gains must be finite and nonnegative")


DEFAULT_GAINS: dict[JointGroup, PidGains] = {
    JointGroup.BASE_TRANSLATION: PidGains(20.0, 0.5, 0.0),
    JointGroup.BASE_HEIGHT: PidGains(20.0, 0.5, 0.0),
    JointGroup.ARM: PidGains(10.0, 2.0, 0.0),
    JointGroup.BASE_ROTATION: PidGains(0.5, 0.2, 0.0),
    JointGroup.GRIPPER: PidGains(10.0, 2.0, 0.0),
}


def lowpass_alpha(dt: float, cutoff_hz: float) -> float:
    if dt <= 0:
        raise InvalidParameter("dt must be positive")
    if not 0 < cutoff_hz < 1.0 / (2.0 * dt):
        raise InvalidParameter("cutoff must lie strictly between 0 and the Nyquist frequency")
    return dt / (1.0 / (2.0 * math.pi * cutoff_hz) + dt)


def lowpass_step(state, x, dt: float, cutoff_hz: float):
    """First-order IIR; returns ``(new_state, output)`` with ``new_state == output``."""
    alpha = lowpass_alpha(dt, cutoff_hz)
    out = state + alpha * (x - state)
    return out, out


@dataclass(frozen=True, eq=False)
class ControllerBank:
    """Per-joint PID state; treat as a value and thread it through the loop."""

    groups: tuple[JointGroup, ...]
    gains: Mapping[JointGroup, PidGains] = field(default_factory=lambda: dict(DEFAULT_GAINS))
    integral: Optional[np.ndarray] = None
    prev_error: Optional[np.ndarray] = None
    filter_state: Optional[np.ndarray] = None
    dt: float = 0.01
    cutoff_hz: float = 40.0
    integral_cap: float = 1.0

    def __post_init__(self):
        n = len(self.groups)
        lowpass_alpha(self.dt, self.cutoff_hz)
        missing = {g for g in self.groups if g not in self.gains}
        if missing:
            raise InvalidParameter(f"no gains for groups {sorted(m.value for m in missing)}")
        for name in ("integral", "prev_error", "filter_state"):
            v = getattr(self, name)
            v = np.zeros(n) if v is None else np.array(v, dtype=float)
            if v.shape != (n,):
                raise DimensionMismatch(f"{name} must have {n} entries")
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        kp = np.array([self.gains[g].kp for g in self.groups])
        ki = np.array([self.gains[g].ki for g in self.groups])
        kd = np.array([self.gains[g].kd for g in self.groups])
        object.__setattr__(self, "_k", (kp, ki, kd))

    @classmethod
    def for_groups(cls, groups: Sequence[str | JointGroup], **kw) -> "ControllerBank":
        return cls(tuple(JointGroup(g) for g in groups), **kw)

    @property
    def alpha(self) -> float:
        return lowpass_alpha(self.dt, self.cutoff_hz)

    def reset(self) -> "ControllerBank":
        return replace(self, integral=None, prev_error=None, filter_state=None)


def pid_step(bank: ControllerBank, q_desired, q_current) -> tuple[ControllerBank, np.ndarray]:
    qd = np.asarray(q_desired, dtype=float)
    qc = np.asarray(q_current, dtype=float)
    n = len(bank.groups)
    if qd.shape != (n,) or qc.shape != (n,):
        raise DimensionMismatch(f"controller expects {n} joints")
    kp, ki, kd = bank._k
    e = qd - qc
    integral = np.clip(bank.integral + e * bank.dt, -bank.integral_cap, bank.integral_cap)
    raw = kp * e + ki * integral + kd * (e - bank.prev_error) / bank.dt
    filt, out = lowpass_step(bank.filter_state, raw, bank.dt, bank.cutoff_hz)
    return replace(bank, integral=integral, prev_error=e, filter_state=filt), out


def _limits(velocity_limits) -> tuple[np.ndarray, np.ndarray]:
    lim = np.asarray(velocity_limits, dtype=float)
    if lim.ndim == 1:
        lo, hi = -lim, lim
    else:
        lo, hi = lim[:, 0], lim[:, 1]
    if np.any(hi - lo <= 0):
        raise InvalidParameter("velocity limits must satisfy lower < upper")
    return lo, hi


def velocity_to_action(v, velocity_limits) -> np.ndarray:
    """Normalise joint velocities into [-1, 1] (inverse of the evaluator scaling, clipped).

    ``velocity_limits`` is ``(N, 2)`` lower/upper pairs or ``(N,)`` symmetric magnitudes.
    """
    lo, hi = _limits(velocity_limits)
    v = np.asarray(v, dtype=float)
    if v.shape != lo.shape:
        raise DimensionMismatch("velocity and limit vectors differ in length")
    return np.clip((2.0 * v - (hi + lo)) / (hi - lo), -1.0, 1.0)


def saturated_joints(v, velocity_limits) -> np.ndarray:
    lo, hi = _limits(velocity_limits)
    v = np.asarray(v, dtype=float)
    return (v < lo) | (v > hi)


def action_to_velocity(a, velocity_limits) -> np.ndarray:
    """``v = (upper - lower) / 2 * a + (upper + lower) / 2``."""
    lo, hi = _limits(velocity_limits)
    a = np.asarray(a, dtype=float)
    if a.shape != lo.shape:
        raise DimensionMismatch("action and limit vectors differ in length")
    if np.any(np.abs(a) > 1.0 + 1e-12) or not np.all(np.isfinite(a)):
        raise InvalidParameter("actions must lie in [-1, 1]")
    return (hi - lo) / 2.0 * a + (hi + lo) / 2.0


def gains_from_dict(d: Mapping[str, Mapping[str, float]]) -> dict[JointGroup, PidGains]:
    gains = dict(DEFAULT_GAINS)
    for k, v in d.items():
        gains[JointGroup(k)] = PidGains(float(v["kp"]), float(v["ki"]), float(v.get("kd", 0.0)))
    return gains
