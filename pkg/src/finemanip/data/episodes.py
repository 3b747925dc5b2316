"""Keyframe extraction, templated instructions and episode recording."""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from ..errors import TooShortError, VocabularyError
from ..geometry import canonical_quat
from ..language import TEMPLATES, check_verb_noun
from ..sim.expert import DEFAULT_N_POINTS, Trajectory, script_expert_demo
from ..sim.tasks import TaskSpec
from ..types import GripperAction

DEFAULT_EPS_VEL = 1e-3
LOCAL_MIN_WINDOW = 2
DEBOUNCE_FRAMES = 3


@dataclass
class Keyframe:
    frame_index: int
    action: GripperAction
    verb: str
    noun: str
    noun_phrase: str = ""

    def __post_init__(self):
        check_verb_noun(self.verb, self.noun)
        if not self.noun_phrase:
            self.noun_phrase = self.noun


@dataclass
class InstructionSet:
    high_level: str
    fine_grained: list[str]
    template_ids: list[int]


@dataclass
class Step:
    observation: np.ndarray  # n × 3 float32
    agent_state: np.ndarray  # 4 float32
    action: GripperAction
    instruction: str
    verb: str
    noun: str
    contact: np.ndarray  # 3, world location the step acts on


@dataclass
class Episode:
    episode_id: str
    task: str
    variation: int
    seed: int
    steps: list[Step]
    instruction_set: InstructionSet
    meta: dict = field(default_factory=dict)

    @property
    def n_points(self) -> int:
        return int(self.steps[0].observation.shape[0])


def keyframe_indices(velocity, open_flags, eps_vel: float = DEFAULT_EPS_VEL) -> list[int]:
    """Indices of keyframes in a velocity / open-flag profile.

    Frame i is a keyframe when its velocity is below ``eps_vel``, is the minimum
    of the surrounding ±2 frames and lies at least 3 frames after the previous
    keyframe; or when the open flag changed at i. The last frame always is one.
    """
    if eps_vel <= 0:
        raise ValueError("eps_vel must be positive")
    v = np.asarray(velocity, dtype=np.float64)
    flags = np.asarray(open_flags)
    n = len(v)
    if n < 2:
        raise TooShortError("a trajectory needs at least 2 frames")
    out: list[int] = []
    for i in range(n):
        lo, hi = max(0, i - LOCAL_MIN_WINDOW), min(n, i + LOCAL_MIN_WINDOW + 1)
        stopped = v[i] < eps_vel and v[i] <= v[lo:hi].min() and (not out or i - out[-1] >= DEBOUNCE_FRAMES)
        flipped = i > 0 and bool(flags[i]) != bool(flags[i - 1])
        if stopped or flipped or i == n - 1:
            out.append(i)
    return out


def extract_keyframes(traj: Trajectory, eps_vel: float = DEFAULT_EPS_VEL) -> list[Keyframe]:
    """Keyframes of a demonstration with the action recorded at each frame."""
    idx = keyframe_indices(traj.velocity, traj.open, eps_vel)
    out = []
    for i in idx:
        action = traj.action_at(i)
        action.a_rot = canonical_quat(action.a_rot)
        out.append(Keyframe(i, action, traj.verbs[i], traj.nouns[i], traj.noun_phrases[i]))
    return out


def _template_rng(task_name: str, template_seed: int):
    return np.random.default_rng([int(template_seed), zlib.crc32(task_name.encode())])


def generate_instructions(keyframes: list[Keyframe], task: TaskSpec, template_seed: int) -> InstructionSet:
    """Pick one paraphrase template per keyframe and fill in its noun phrase."""
    if not keyframes:
        raise ValueError("at least one keyframe is required")
    rng = _template_rng(task.name, template_seed)
    texts, ids = [], []
    for kf in keyframes:
        family = TEMPLATES.get(kf.verb)
        if not family:
            raise VocabularyError(f"no template family for verb {kf.verb!r}")
        tid = int(rng.integers(len(family)))
        texts.append(family[tid].format(obj=kf.noun_phrase))
        ids.append(tid)
    return InstructionSet(task.high_level, texts, ids)


def episode_id(task: str, variation: int, seed: int) -> str:
    return f"{task}-v{variation}-s{seed}"


def record_episode(spec: TaskSpec, seed: int, eps_vel: float = DEFAULT_EPS_VEL,
                   template_seed: int | None = None, n_points: int = DEFAULT_N_POINTS) -> Episode:
    """Demonstrate, cut into keyframe steps and annotate one episode.

    The observation of step k is the cloud and agent state at keyframe k-1
    (frame 0 for the first step).
    """
    traj = script_expert_demo(spec, seed, n_points=n_points)
    kfs = extract_keyframes(traj, eps_vel)
    instr = generate_instructions(kfs, spec, seed if template_seed is None else template_seed)
    steps = []
    prev = 0
    for kf, text in zip(kfs, instr.fine_grained):
        steps.append(
            Step(
                observation=traj.clouds[prev].astype(np.float32),
                agent_state=traj.agent_states[prev].astype(np.float32),
                action=kf.action,
                instruction=text,
                verb=kf.verb,
                noun=kf.noun,
                contact=traj.contacts[kf.frame_index].copy(),
            )
        )
        prev = kf.frame_index
    return Episode(episode_id(spec.name, spec.variation, seed), spec.name, spec.variation, int(seed), steps, instr)
