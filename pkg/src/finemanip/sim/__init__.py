"""Deterministic kinematic tabletop world and scripted expert."""
from .expert import Trajectory, script_expert_demo
from .tasks import ALL_TASKS, NOVEL_TASKS, TRAIN_TASKS, TaskSpec, load_task
from .world import (
    ArticulatedJoint,
    GripperState,
    SceneObject,
    WorldState,
    check_success,
    render_point_cloud,
    reset_task,
    step_gripper,
)

__all__ = [
    "ALL_TASKS", "NOVEL_TASKS", "TRAIN_TASKS", "ArticulatedJoint", "GripperState", "SceneObject",
    "TaskSpec", "Trajectory", "WorldState", "check_success", "load_task", "render_point_cloud",
    "reset_task", "script_expert_demo", "step_gripper",
]
