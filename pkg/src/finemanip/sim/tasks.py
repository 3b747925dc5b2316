"""Task specifications: JSON loading, validation and waypoint resolution."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ..errors import TaskSpecError
from ..geometry import normalize_quat
from ..language import check_verb_noun
from .world import WorldState, rotate_about

TRAIN_TASKS = (
    "reach-target",
    "press-button",
    "slide-drawer-open",
    "close-lid",
    "lift-block",
    "push-block-to-target",
    "pull-lever",
    "stack-two-blocks",
)
NOVEL_TASKS = ("close-drawer", "open-lid", "press-two-buttons", "fetch-drawer-item")
ALL_TASKS = TRAIN_TASKS + NOVEL_TASKS

SUCCESS_KINDS = ("joint-value-threshold", "object-position-within-radius", "grasp-held", "all-of")


@dataclass
class TaskSpec:
    name: str
    variation: int
    objects: list[dict]
    success: dict
    high_level_template: str
    expert_waypoints: list[dict]
    joints: list[dict] = field(default_factory=list)
    table_half: tuple[float, float, float] = (0.35, 0.35, 0.01)
    variations: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.expert_waypoints:
            raise TaskSpecError(f"task {self.name!r} needs at least one waypoint")
        ids = [o["id"] for o in self.objects]
        if len(set(ids)) != len(ids) or "table" in ids:
            raise TaskSpecError(f"task {self.name!r}: duplicate or reserved object ids")
        for wp in self.expert_waypoints:
            check_verb_noun(wp["verb"], wp["noun"])
            phrase = wp.get("noun_phrase", wp["noun"])
            if wp["noun"] not in phrase.split():
                raise TaskSpecError(f"noun phrase {phrase!r} must contain {wp['noun']!r}")
        if self.success.get("kind") not in SUCCESS_KINDS:
            raise TaskSpecError(f"unknown success kind {self.success.get('kind')!r}")
        if self.variations and not 0 <= self.variation < len(self.variations):
            raise TaskSpecError(f"variation {self.variation} out of range")

    def with_variation(self, variation: int) -> "TaskSpec":
        spec = copy.deepcopy(self)
        spec.variation = int(variation) % max(1, len(self.variations))
        spec.validate()
        return spec

    def object_templates(self) -> list[dict]:
        """Object templates with the active variation's overrides applied."""
        out = copy.deepcopy(self.objects)
        if self.variations:
            overrides = self.variations[self.variation]
            for t in out:
                t.update(overrides.get(t["id"], {}))
        return out

    def joint_templates(self) -> list[dict]:
        return self.joints

    @property
    def high_level(self) -> str:
        return self.high_level_template

    @classmethod
    def from_json(cls, d: dict) -> "TaskSpec":
        return cls(
            name=d["name"],
            variation=int(d.get("variation", 0)),
            objects=d["objects"],
            joints=d.get("joints", []),
            success=d["success"],
            high_level_template=d["high_level"],
            expert_waypoints=d["waypoints"],
            table_half=tuple(d.get("table_half", (0.35, 0.35, 0.01))),
            variations=d.get("variations", []),
        )

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "variation": self.variation,
            "high_level": self.high_level_template,
            "table_half": list(self.table_half),
            "objects": self.objects,
            "joints": self.joints,
            "success": self.success,
            "waypoints": self.expert_waypoints,
            "variations": self.variations,
        }


def load_task(name_or_path: str | Path) -> TaskSpec:
    """Load a shipped task by name, or any task JSON by path."""
    p = Path(name_or_path)
    if p.suffix == ".json" and p.exists():
        return TaskSpec.from_json(json.loads(p.read_text()))
    res = resources.files("finemanip.sim") / "tasks" / f"{name_or_path}.json"
    if not res.is_file():
        raise TaskSpecError(f"unknown task {name_or_path!r}")
    return TaskSpec.from_json(json.loads(res.read_text()))


# ---------------------------------------------------------------- waypoints


def resolve_target(state: WorldState, wp: dict) -> np.ndarray:
    tgt = wp["target"]
    if "arc" in tgt:
        arc = tgt["arc"]
        joint = state.joint(arc["joint"])
        p = rotate_about(state.object(arc["object"]).position, joint.origin, joint.axis, float(arc["angle"]))
        return p + np.asarray(arc.get("offset", [0, 0, 0]), dtype=np.float64)
    ref = tgt["relative_to"]
    base = state.gripper.position if ref == "gripper" else state.object(ref).position
    return base + np.asarray(tgt.get("offset", [0, 0, 0]), dtype=np.float64)


def resolve_contact(state: WorldState, wp: dict) -> np.ndarray:
    """World location the step interacts with (peak of the affordance target)."""
    c = wp.get("contact")
    if c is None:
        ref = wp["target"].get("relative_to") or wp["target"]["arc"]["object"]
        return state.object(ref).position.copy()
    return state.object(c["object"]).position + np.asarray(c.get("offset", [0, 0, 0]), dtype=np.float64)


def waypoint_rotation(wp: dict) -> np.ndarray:
    return normalize_quat(wp.get("rotation", [1.0, 0.0, 0.0, 0.0]))
