"""Action type shared by the simulator, the episode store and the policy."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import IDENTITY_QUAT, normalize_quat


@dataclass
class GripperAction:
    """A keyframe action: target pose, gripper open flag and collision mode.

    ``a_position`` always equals ``contact + a_move``. ``a_collide`` True means the
    move may make contact (no collision check); False means the straight-line
    sweep is collision-checked and stops before the first obstacle.
    """

    a_position: np.ndarray
    a_rot: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())
    a_open: bool = True
    a_collide: bool = False
    a_move: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @classmethod
    def from_contact(cls, contact, a_move, a_rot, a_open, a_collide) -> "GripperAction":
        contact = np.asarray(contact, dtype=np.float64)
        a_move = np.asarray(a_move, dtype=np.float64)
        return cls(
            a_position=contact + a_move,
            a_rot=normalize_quat(a_rot),
            a_open=bool(a_open),
            a_collide=bool(a_collide),
            a_move=a_move,
        )

    @property
    def a_pose(self) -> tuple[np.ndarray, np.ndarray]:
        return self.a_position, self.a_rot

    def to_vector(self) -> np.ndarray:
        """Flatten as (position 3, quaternion 4, open 1, collide 1)."""
        return np.concatenate([self.a_position, self.a_rot, [float(self.a_open), float(self.a_collide)]])

    def to_json(self) -> dict:
        return {
            "position": [float(v) for v in self.a_position],
            "quaternion": [float(v) for v in self.a_rot],
            "open": bool(self.a_open),
            "collide": bool(self.a_collide),
        }

    @classmethod
    def from_json(cls, d: dict) -> "GripperAction":
        return cls(
            a_position=np.asarray(d["position"], dtype=np.float64),
            a_rot=np.asarray(d["quaternion"], dtype=np.float64),
            a_open=bool(d["open"]),
            a_collide=bool(d["collide"]),
        )
