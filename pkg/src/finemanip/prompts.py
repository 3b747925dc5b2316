"""Perception (noun) and action (verb) prompt bases built from training steps."""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data.episodes import Episode
from .errors import MissingKeyError, SplitLeakageError
from .language import NOUNS, VERBS, parse_verb_noun
from .models.losses import gaussian_affordance_target
from .types import GripperAction

DEFAULT_SIGMA = 0.02


@dataclass
class PromptEntry:
    """A training step as seen by either base."""

    key: str
    instruction: str
    episode_id: str
    step: int
    cloud: np.ndarray
    agent_state: np.ndarray
    high_level: str
    action: GripperAction
    contact: np.ndarray

    @property
    def ref(self) -> tuple[str, int]:
        return self.episode_id, self.step


@dataclass
class PerceptionPromptEntry(PromptEntry):
    gt_affordance: np.ndarray | None = None

    @property
    def noun(self) -> str:
        return self.key


@dataclass
class ActionPromptEntry(PromptEntry):
    @property
    def verb(self) -> str:
        return self.key


@dataclass
class PromptBase:
    perception: dict[str, list[PerceptionPromptEntry]]
    action: dict[str, list[ActionPromptEntry]]

    def episode_ids(self) -> set[str]:
        out = set()
        for table in (self.perception, self.action):
            for entries in table.values():
                out.update(e.episode_id for e in entries)
        return out

    def index_json(self) -> dict:
        return {
            "perception": {k: [list(e.ref) for e in v] for k, v in sorted(self.perception.items())},
            "action": {k: [list(e.ref) for e in v] for k, v in sorted(self.action.items())},
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.index_json(), indent=1))


def build_prompt_bases(episodes: list[Episode], split=None, sigma: float = DEFAULT_SIGMA) -> PromptBase:
    """One perception entry and one action entry per training step.

    With ``split`` given, every episode must belong to its train list.
    """
    if split is not None:
        allowed = set(split.train)
        bad = sorted(ep.episode_id for ep in episodes if ep.episode_id not in allowed)
        if bad:
            raise SplitLeakageError(f"non-training episodes passed to the prompt bases: {bad[:5]}")
    perception: dict[str, list] = defaultdict(list)
    action: dict[str, list] = defaultdict(list)
    for ep in sorted(episodes, key=lambda e: e.episode_id):
        for k, st in enumerate(ep.steps):
            verb, noun = parse_verb_noun(st.instruction)
            common = dict(
                instruction=st.instruction,
                episode_id=ep.episode_id,
                step=k,
                cloud=st.observation,
                agent_state=st.agent_state,
                high_level=ep.instruction_set.high_level,
                action=st.action,
                contact=st.contact,
            )
            target = gaussian_affordance_target(st.observation, st.contact, sigma).astype(np.float32)
            perception[noun].append(PerceptionPromptEntry(key=noun, gt_affordance=target, **common))
            action[verb].append(ActionPromptEntry(key=verb, **common))
    return PromptBase(dict(perception), dict(action))


def load_prompt_bases(path, episodes: dict[str, Episode] | list[Episode], sigma: float = DEFAULT_SIGMA) -> PromptBase:
    """Resolve a saved index against an episode store."""
    if not isinstance(episodes, dict):
        episodes = {ep.episode_id: ep for ep in episodes}
    idx = json.loads(Path(path).read_text())
    refs = {(eid, int(k)) for table in ("perception", "action") for v in idx[table].values() for eid, k in v}
    missing = sorted({eid for eid, _ in refs} - set(episodes))
    if missing:
        raise MissingKeyError(f"prompt index references unknown episodes: {missing[:5]}")
    wanted = sorted({eid for eid, _ in refs})
    base = build_prompt_bases([episodes[e] for e in wanted], sigma=sigma)
    # keep only the indexed steps (an index may be a subset)
    base.perception = {k: [e for e in v if e.ref in refs] for k, v in base.perception.items()}
    base.action = {k: [e for e in v if e.ref in refs] for k, v in base.action.items()}
    return base


def _retrieve(table: dict, key: str, vocab, exclude_episode, seed: int):
    if key not in vocab or key not in table or not table[key]:
        raise MissingKeyError(f"no prompt entries for {key!r}")
    if exclude_episode is None:
        excluded = set()
    elif isinstance(exclude_episode, str):
        excluded = {exclude_episode}
    else:
        excluded = set(exclude_episode)
    entries = table[key]
    pool = [e for e in entries if e.episode_id not in excluded] or entries
    return pool[int(np.random.default_rng(seed).integers(len(pool)))]


def retrieve_perception_prompt(base: PromptBase, noun: str, exclude_episode=None, seed: int = 0):
    """Seeded uniform pick among the noun's entries from other episodes."""
    return _retrieve(base.perception, noun, NOUNS, exclude_episode, seed)


def retrieve_action_prompt(base: PromptBase, verb: str, exclude_episode=None, seed: int = 0):
    return _retrieve(base.action, verb, VERBS, exclude_episode, seed)


def _pair_up(keys: list[str], episodes: list[str], table: dict, retrieve, seed: int, partners):
    groups: dict[str, list[int]] = defaultdict(list)
    for i, k in enumerate(keys):
        groups[k].append(i)
    pairs = []
    for k in sorted(groups):
        idx = groups[k]
        for a in range(0, len(idx) - 1, 2):
            pairs.append((idx[a], idx[a + 1]))
        if len(idx) % 2 and len(table.get(k, ())) > 1:
            i = idx[-1]
            partner = partners.get(k) if partners else None
            pairs.append((i, partner if partner is not None else retrieve(k, episodes[i], seed + i)))
    return pairs


def sample_consistency_pairs(steps, base: PromptBase, seed: int, verb_partners=None, noun_partners=None):
    """Verb pairs and noun pairs for a batch.

    ``steps`` are objects with ``verb``, ``noun`` and ``episode_id``. Steps sharing a
    key are paired in order; a leftover step whose key has several base entries is
    paired with a retrieved entry (or the given partner entry for that key); a pair
    is ``(i, j)`` or ``(i, PromptEntry)``.
    """
    steps = list(steps)
    eps = [s.episode_id for s in steps]
    verb_pairs = _pair_up(
        [s.verb for s in steps], eps, base.action, lambda k, e, sd: retrieve_action_prompt(base, k, e, sd), seed,
        verb_partners,
    )
    noun_pairs = _pair_up(
        [s.noun for s in steps], eps, base.perception,
        lambda k, e, sd: retrieve_perception_prompt(base, k, e, sd), seed, noun_partners,
    )
    return verb_pairs, noun_pairs
