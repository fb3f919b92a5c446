"""Task identifiers and the scenario facts a policy is allowed to see."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np


class Task(Enum):
    OPEN_DRAWER = "open_drawer"
    OPEN_DOOR = "open_door"
    MOVE_BUCKET = "move_bucket"
    PUSH_CHAIR = "push_chair"

    @classmethod
    def parse(cls, s) -> "Task":
        if isinstance(s, Task):
            return s
        aliases = {"drawer": cls.OPEN_DRAWER, "door": cls.OPEN_DOOR,
                   "bucket": cls.MOVE_BUCKET, "chair": cls.PUSH_CHAIR}
        return aliases.get(s) or cls(s)

    @property
    def short(self) -> str:
        return {Task.OPEN_DRAWER: "drawer", Task.OPEN_DOOR: "door",
                Task.MOVE_BUCKET: "bucket", Task.PUSH_CHAIR: "chair"}[self]

    @property
    def robot(self) -> str:
        return "single_arm" if self in (Task.OPEN_DRAWER, Task.OPEN_DOOR) else "dual_arm"


@dataclass(frozen=True, eq=False)
class TaskInfo:
    """Ground-truth facts handed to the policy alongside observations.

    Door handedness and the cabinet's outward axis come from here rather than
    from perception.
    """

    task: Task
    outward: Optional[np.ndarray] = None  # cabinet facing axis, planar unit
    hinge_side: Optional[str] = None  # "left" | "right" as seen facing the cabinet
    joint_range: Optional[float] = None
    target_center: Optional[np.ndarray] = None
    target_radius: Optional[float] = None
    max_jaw_width: float = 0.08

    @property
    def left(self) -> np.ndarray:
        """Lateral axis pointing to the left of someone facing the cabinet."""
        n = self.outward
        return np.array([n[1], -n[0], 0.0])

    @property
    def closed_direction(self) -> np.ndarray:
        """From the hinge along the closed door toward its free edge."""
        return self.left if self.hinge_side == "right" else -self.left
