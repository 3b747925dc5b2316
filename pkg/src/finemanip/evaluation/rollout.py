"""Closed-loop rollouts with the 25-step cap."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import torch

from ..data.episodes import Episode, InstructionSet
from ..errors import FinemanipError, MissingKeyError
from ..models.network import FineManipNet, GroupingCache, stream_seed
from ..prompts import PromptBase, retrieve_action_prompt, retrieve_perception_prompt
from ..sim.expert import DEFAULT_N_POINTS
from ..sim.tasks import TaskSpec, load_task
from ..sim.world import check_success, render_point_cloud, reset_task, step_gripper
from ..types import GripperAction

MAX_STEPS = 25
log = logging.getLogger(__name__)


@dataclass
class StepRecord:
    selected_index: int | None
    gt_index: int | None
    action: dict | None
    outcome: str


@dataclass
class RolloutResult:
    task: str
    variation: int
    seed: int
    success: bool
    steps_taken: int
    steps: list[StepRecord] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "task": self.task,
            "variation": self.variation,
            "seed": self.seed,
            "success": self.success,
            "steps_taken": self.steps_taken,
            "steps": [s.__dict__ for s in self.steps],
        }


class PromptFeatureCache:
    """Frozen-weight prompt features keyed by verb / noun for inference.

    A key missing from the bases gets a zero feature.
    """

    def __init__(self, net: FineManipNet, base: PromptBase | None, seed: int = 0):
        self.net, self.base, self.seed = net, base, seed
        self.cache = GroupingCache(net.cfg)
        self._aff: dict = {}
        self._act: dict = {}

    @torch.no_grad()
    def __call__(self, verb: str, noun: str):
        D = self.net.cfg.feature_dim
        if self.base is None:
            raise MissingKeyError("the prompt module is enabled but no prompt base was given")
        if noun not in self._aff:
            try:
                e = retrieve_perception_prompt(self.base, noun, None, stream_seed(self.seed, "noun", noun))
                f_noun, f_aff, _ = self.net.perception_prompt_features([e], [self.cache.get(e.ref, e.cloud)])
                self._aff[noun] = torch.cat([f_noun[0], f_aff[0]])
            except MissingKeyError:
                log.warning("no perception prompt for noun %r; using zeros", noun)
                self._aff[noun] = torch.zeros(2 * D, dtype=self.net.dtype)
        if verb not in self._act:
            try:
                e = retrieve_action_prompt(self.base, verb, None, stream_seed(self.seed, "verb", verb))
                f_verb, f_vision, f_action = self.net.action_prompt_features([e], [self.cache.get(e.ref, e.cloud)])
                self._act[verb] = torch.cat([f_verb[0], f_vision[0], f_action[0]])
            except MissingKeyError:
                log.warning("no action prompt for verb %r; using zeros", verb)
                self._act[verb] = torch.zeros(3 * D, dtype=self.net.dtype)
        return self._aff[noun], self._act[verb]


def rollout_policy(policy, spec: TaskSpec, seed: int, n_points: int = DEFAULT_N_POINTS,
                   max_steps: int = MAX_STEPS, n_gt: int | None = None) -> RolloutResult:
    """Generic loop: ``policy(cloud, agent_state, t)`` → (GripperAction, selected index or None).

    Environment errors count as a failed step and the loop continues.
    """
    state = reset_task(spec, seed)
    records: list[StepRecord] = []
    success = False
    for t in range(max_steps):
        cloud, _ = render_point_cloud(state, n_points)
        action, sel = policy(cloud, state.gripper.agent_state, t)
        gt = t if n_gt is None or t < n_gt else None
        try:
            state, outcome = step_gripper(state, action)
        except FinemanipError as e:
            outcome = f"error: {type(e).__name__}"
            state = state.copy()
            state.step_count += 1
        records.append(StepRecord(sel, gt, action.to_json() if action is not None else None, outcome))
        if check_success(state, spec):
            success = True
            break
    return RolloutResult(spec.name, spec.variation, int(seed), success, len(records), records)


def rollout_episode(net: FineManipNet, spec: TaskSpec, seed: int, instruction_set: InstructionSet,
                    prompts: PromptFeatureCache | None = None, n_points: int = DEFAULT_N_POINTS,
                    max_steps: int = MAX_STEPS) -> RolloutResult:
    """Roll out the trained networks: select → affordance → contact → actor → step."""
    net.eval()
    instr = list(instruction_set.fine_grained)

    def policy(cloud, agent_state, t):
        action, sel, _ = net.act(cloud, agent_state, instr, instruction_set.high_level, prompts)
        return action, sel

    return rollout_policy(policy, spec, seed, n_points, max_steps, n_gt=len(instr))


def replay_episode(ep: Episode, spec: TaskSpec | None = None, n_points: int = 64,
                   max_steps: int = MAX_STEPS) -> RolloutResult:
    """Upper-bound sanity rollout that executes the recorded keyframe actions."""
    spec = spec or load_task(ep.task).with_variation(ep.variation)
    actions = [s.action for s in ep.steps]

    def policy(cloud, agent_state, t):
        a = actions[t] if t < len(actions) else GripperAction(np.asarray(agent_state[1:], dtype=np.float64),
                                                            a_open=bool(agent_state[0]))
        return a, min(t, len(actions) - 1)

    return rollout_policy(policy, spec, ep.seed, n_points, max_steps, n_gt=len(actions))


def episode_spec(ep: Episode) -> TaskSpec:
    return load_task(ep.task).with_variation(ep.variation)
