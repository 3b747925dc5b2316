"""Scripted expert: executes a task's waypoints as a dense, pausing trajectory."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DemoFailureError
from ..types import GripperAction
from .tasks import TaskSpec, resolve_contact, resolve_target, waypoint_rotation
from .world import OUTCOME_BLOCKED, check_success, render_point_cloud, reset_task, step_gripper

DT = 0.05
MIN_SEGMENT_FRAMES = 5
MAX_SEGMENT_FRAMES = 20
FRAME_SPACING = 0.02  # target metres per interpolated frame
DEFAULT_N_POINTS = 1024


@dataclass
class Trajectory:
    """Dense demonstration, one entry per frame.

    ``velocity[i]`` is the gripper displacement magnitude into frame i in m/frame;
    frame 0 uses the displacement to frame 1. ``contacts[i]`` is the world contact
    location of the waypoint segment that frame i belongs to, resolved when that
    segment started.
    """

    clouds: np.ndarray  # F × n × 3
    agent_states: np.ndarray  # F × 4 (open, x, y, z)
    poses: np.ndarray  # F × 7 (position, quaternion wxyz)
    velocity: np.ndarray  # F
    open: np.ndarray  # F bool
    collide: np.ndarray  # F bool
    verbs: list[str]
    nouns: list[str]
    noun_phrases: list[str]
    contacts: np.ndarray  # F × 3
    waypoint_frames: list[int] = field(default_factory=list)
    dt: float = DT

    def __post_init__(self):
        if len(self.velocity) < 2:
            from ..errors import TooShortError

            raise TooShortError("a trajectory needs at least 2 frames")

    def __len__(self) -> int:
        return len(self.velocity)

    def action_at(self, i: int) -> GripperAction:
        return GripperAction(
            a_position=self.poses[i, :3].copy(),
            a_rot=self.poses[i, 3:].copy(),
            a_open=bool(self.open[i]),
            a_collide=bool(self.collide[i]),
        )


def segment_frames(length: float) -> int:
    return int(min(max(math.ceil(length / FRAME_SPACING), MIN_SEGMENT_FRAMES), MAX_SEGMENT_FRAMES))


def _nlerp(q0, q1, s):
    q1 = q1 if float(np.dot(q0, q1)) >= 0 else -q1
    q = (1 - s) * q0 + s * q1
    return q / np.linalg.norm(q)


def script_expert_demo(spec: TaskSpec, seed: int, n_points: int = DEFAULT_N_POINTS,
                       return_states: bool = False):
    """Run the task's waypoints through ``step_gripper`` and record every frame.

    Each waypoint is reached by a straight segment of at least five frames, then
    one pause frame where the open flag changes. The pause frames are the
    waypoint frames.
    """
    state = reset_task(spec, seed)
    states = [state]
    meta = [(spec.expert_waypoints[0], None)]
    collide = [bool(spec.expert_waypoints[0]["collide"])]
    waypoint_frames = []
    contact_log = [None]
    for k, wp in enumerate(spec.expert_waypoints):
        contact = resolve_contact(state, wp)
        target = resolve_target(state, wp)
        rot = waypoint_rotation(wp)
        start, q0 = state.gripper.position.copy(), state.gripper.rotation.copy()
        length = float(np.linalg.norm(target - start))
        if length < 0.01:
            raise DemoFailureError(f"{spec.name}: waypoint {k} moves less than 1 cm")
        m = segment_frames(length)
        for j in range(1, m + 2):
            s = min(j, m) / m
            final = j == m + 1  # pause frame: same pose, apply the open flag
            action = GripperAction(
                a_position=start + s * (target - start),
                a_rot=_nlerp(q0, rot, s),
                a_open=bool(wp["open"]) if final else state.gripper.open,
                a_collide=bool(wp["collide"]),
            )
            state, outcome = step_gripper(state, action)
            if outcome == OUTCOME_BLOCKED:
                raise DemoFailureError(f"{spec.name} seed {seed}: expert blocked on waypoint {k}")
            states.append(state)
            meta.append((wp, k))
            collide.append(bool(wp["collide"]))
            contact_log.append(contact)
        waypoint_frames.append(len(states) - 1)
    if not check_success(state, spec):
        raise DemoFailureError(f"{spec.name} seed {seed}: expert did not reach success")

    contact_log[0] = contact_log[1]
    pos = np.array([s.gripper.position for s in states])
    vel = np.zeros(len(states))
    vel[1:] = np.linalg.norm(np.diff(pos, axis=0), axis=1)
    vel[0] = vel[1]
    clouds = np.stack([render_point_cloud(s, n_points)[0] for s in states])
    traj = Trajectory(
        clouds=clouds,
        agent_states=np.array([s.gripper.agent_state for s in states]),
        poses=np.array([np.concatenate([s.gripper.position, s.gripper.rotation]) for s in states]),
        velocity=vel,
        open=np.array([s.gripper.open for s in states]),
        collide=np.array(collide),
        verbs=[wp["verb"] for wp, _ in meta],
        nouns=[wp["noun"] for wp, _ in meta],
        noun_phrases=[wp.get("noun_phrase", wp["noun"]) for wp, _ in meta],
        contacts=np.array(contact_log),
        waypoint_frames=waypoint_frames,
    )
    return (traj, states) if return_states else traj
