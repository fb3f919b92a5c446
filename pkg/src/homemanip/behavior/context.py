"""Per-episode task context threaded through the behavior tree as a value."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from types import MappingProxyType
from typing import Any, Mapping, Optional

import numpy as np

from ..geometry import PointCloud
from ..kinematics import KinematicModel
from ..perception import GraspCandidate, HandleAccumulator, PerceptionConfig, RimEstimate
from ..task import Task, TaskInfo


class Branch(Enum):
    PREHENSILE = "prehensile"
    HUG = "hug"


_EMPTY: Mapping[str, Any] = MappingProxyType({})


@dataclass(frozen=True, eq=False)
class TaskContext:
    task: Task
    model: KinematicModel
    info: TaskInfo
    perception: PerceptionConfig = field(default_factory=PerceptionConfig)
    accumulator: HandleAccumulator = field(default_factory=HandleAccumulator)
    ready: bool = False
    initial_panel: Optional[PointCloud] = None
    grasp: Optional[GraspCandidate] = None
    rim: Optional[RimEstimate] = None
    branch: Optional[Branch] = None
    chair_center: Optional[np.ndarray] = None
    chair_extent: Optional[float] = None
    desired: Optional[np.ndarray] = None  # last joint setpoint, copied for joints a target leaves alone
    ik_failures: int = 0
    notes: Mapping[str, Any] = _EMPTY  # node-to-node scratch values (hinge, radii, offsets)
    estimates: Mapping[str, Any] = _EMPTY  # latest perception outputs, for the trajectory log

    @classmethod
    def initial(cls, task: Task, model: KinematicModel, info: TaskInfo,
                perception: Optional[PerceptionConfig] = None) -> "TaskContext":
        return cls(task, model, info, perception or PerceptionConfig())

    def note(self, **kw) -> "TaskContext":
        return replace(self, notes=MappingProxyType({**self.notes, **kw}))

    def estimate(self, **kw) -> "TaskContext":
        return replace(self, estimates=MappingProxyType({**self.estimates, **kw}))

    def with_(self, **kw) -> "TaskContext":
        if "branch" in kw and kw["branch"] is not None and self.task is not Task.MOVE_BUCKET:
            raise ValueError("a branch only applies to the bucket task")
        return replace(self, **kw)
