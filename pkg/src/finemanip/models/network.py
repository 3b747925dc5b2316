"""The full policy: encoders, three-stage pipeline and prompt feature paths."""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..data.episodes import Episode
from ..language import parse_verb_noun
from ..types import GripperAction
from .config import ModelConfig
from .encoders import CloudGrouping, PointCloudEncoder, StateEncoder, TextEncoder, build_grouping, check_cloud, mlp
from .losses import gaussian_affordance_target
from .policy import ActorNet, AffordanceMap, AffordanceNet, InstructionSelector, select_contact_point
from .vocab import Vocabulary


@dataclass
class PreparedStep:
    """One (episode, step) pair with everything the networks and losses need."""

    episode_id: str
    step: int
    cloud: np.ndarray  # n × 3 float32
    grouping: CloudGrouping
    agent_state: np.ndarray
    instructions: list[str]
    high_level: str
    action: GripperAction
    contact: np.ndarray
    contact_index: int
    verb: str
    noun: str

    @property
    def gt_index(self) -> int:
        return self.step


class GroupingCache:
    """Memoizes cloud groupings keyed by (episode_id, step)."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        self._cache: dict = {}

    def get(self, key, cloud) -> CloudGrouping:
        g = self._cache.get(key)
        if g is None:
            g = build_grouping(cloud, self.cfg)
            self._cache[key] = g
        return g

    def __len__(self) -> int:
        return len(self._cache)


def prepare_steps(episodes: list[Episode], cache: GroupingCache) -> list[PreparedStep]:
    out = []
    for ep in episodes:
        texts = [s.instruction for s in ep.steps]
        for k, s in enumerate(ep.steps):
            cloud = np.asarray(s.observation, dtype=np.float32)
            d = ((cloud.astype(np.float64) - s.contact) ** 2).sum(1)
            out.append(
                PreparedStep(
                    episode_id=ep.episode_id,
                    step=k,
                    cloud=cloud,
                    grouping=cache.get((ep.episode_id, k), cloud),
                    agent_state=np.asarray(s.agent_state, dtype=np.float32),
                    instructions=texts,
                    high_level=ep.instruction_set.high_level,
                    action=s.action,
                    contact=np.asarray(s.contact, dtype=np.float64),
                    contact_index=int(np.argmin(d)),
                    verb=s.verb,
                    noun=s.noun,
                )
            )
    return out


def action_vector(action: GripperAction) -> np.ndarray:
    return action.to_vector().astype(np.float32)


class FineManipNet(nn.Module):
    def __init__(self, cfg: ModelConfig, vocab: Vocabulary | None = None):
        super().__init__()
        self.cfg = cfg
        self.vocab = vocab or Vocabulary()
        D = cfg.feature_dim
        self.text = TextEncoder(cfg, self.vocab)
        self.points = PointCloudEncoder(cfg)
        self.state = StateEncoder(cfg)
        self.selector = InstructionSelector(cfg)
        self.affordance = AffordanceNet(cfg)
        self.actor = ActorNet(cfg)
        if cfg.prompt_enabled:
            self.action_mlp = mlp([9, cfg.hidden, D], final_act=False)
            self.mm_proj = nn.Linear(2 * D, D)

    @property
    def dtype(self):
        return self.selector.context[0].weight.dtype

    def _t(self, x) -> torch.Tensor:
        return torch.as_tensor(np.asarray(x), dtype=self.dtype)

    # ------------------------------------------------------------ encoders

    def encode_text(self, instruction: str, fine: bool = True) -> torch.Tensor:
        use = fine or self.cfg.soft_prompt_high_level
        return self.text([instruction], use_prompt=use)[0]

    def encode_texts(self, texts: list[str], fine: bool) -> dict[str, torch.Tensor]:
        uniq = sorted(set(texts))
        feats = self.text(uniq, use_prompt=fine or self.cfg.soft_prompt_high_level)
        return {t: feats[i] for i, t in enumerate(uniq)}

    def encode_pointcloud(self, cloud, grouping: CloudGrouping | None = None):
        pts = check_cloud(cloud)
        g = grouping or build_grouping(pts, self.cfg)
        per_point, glob = self.points(self._t(pts).unsqueeze(0), [g])
        return per_point[0], glob[0]

    def encode_state(self, agent_state) -> torch.Tensor:
        return self.state(self._t(agent_state).reshape(1, 4))[0]

    def encode_clouds(self, clouds, groupings, extra=None, with_points=True):
        xyz = self._t(np.stack(clouds))
        return self.points(xyz, groupings, extra=extra, with_points=with_points)

    # ------------------------------------------------------------ prompt features

    def perception_prompt_features(self, entries, groupings) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """(f_pr_noun, f_pr_aff, predicted scores) for a list of perception entries."""
        instr = self.encode_texts([e.instruction for e in entries], fine=True)
        high = self.encode_texts([e.high_level for e in entries], fine=False)
        f_noun = torch.stack([instr[e.instruction] for e in entries])
        f_L = torch.stack([high[e.high_level] for e in entries])
        clouds = [e.cloud for e in entries]
        per_point, _ = self.encode_clouds(clouds, groupings)
        f_s = self.state(self._t(np.stack([e.agent_state for e in entries])))
        zeros = per_point.new_zeros(len(entries), self.affordance.prompt_dim) if self.cfg.prompt_enabled else None
        scores = self.affordance(per_point, f_s, f_noun, f_L, zeros)
        _, f_aff = self.encode_clouds(clouds, groupings, extra=scores, with_points=False)
        return f_noun, f_aff, scores

    def action_prompt_features(self, entries, groupings) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """(f_pr_verb, f_pr_vision, f_pr_action) for a list of action entries."""
        instr = self.encode_texts([e.instruction for e in entries], fine=True)
        f_verb = torch.stack([instr[e.instruction] for e in entries])
        _, f_vision = self.encode_clouds([e.cloud for e in entries], groupings, with_points=False)
        f_action = self.action_mlp(self._t(np.stack([action_vector(e.action) for e in entries])))
        return f_verb, f_vision, f_action

    def alignment_anchor(self, f_action: torch.Tensor, f_vision: torch.Tensor) -> torch.Tensor:
        return F.normalize(self.mm_proj(torch.cat([f_action, f_vision], dim=-1)), dim=-1)

    # ------------------------------------------------------------ three-stage pass

    def forward_steps(self, steps: list[PreparedStep], prompt_aff=None, prompt_act=None, hard: bool = False,
                      contact_index=None) -> dict:
        """Run selection, affordance and actor on a batch of prepared steps.

        ``contact_index`` (B ints) fixes p' (teacher forcing); otherwise p' is
        chosen from the predicted affordance map.
        """
        B = len(steps)
        fine = self.encode_texts([t for s in steps for t in s.instructions], fine=True)
        high = self.encode_texts([s.high_level for s in steps], fine=False)
        N = max(len(s.instructions) for s in steps)
        D = self.cfg.feature_dim
        mask = torch.zeros(B, N, dtype=torch.bool)
        rows = []
        for b, s in enumerate(steps):
            rows.append(torch.stack([fine[t] for t in s.instructions]))
            mask[b, : len(s.instructions)] = True
        f_li = torch.stack([torch.cat([r, r.new_zeros(N - r.shape[0], D)]) for r in rows])
        f_L = torch.stack([high[s.high_level] for s in steps])
        per_point, f_o = self.encode_clouds([s.cloud for s in steps], [s.grouping for s in steps])
        f_s = self.state(self._t(np.stack([s.agent_state for s in steps])))
        scores, f_l = self.selector(f_li, f_o, f_L, f_s, mask, hard=hard)
        aff = self.affordance(per_point, f_s, f_l, f_L, prompt_aff)
        if contact_index is None:
            contact_index = [select_contact_point(aff[b].detach(), steps[b].cloud)[1] for b in range(B)]
        ci = torch.as_tensor(contact_index, dtype=torch.long)
        f_c = per_point[torch.arange(B), ci]
        heads = self.actor(f_c, f_s, f_l, f_L, prompt_act)
        p_contact = self._t(np.stack([s.cloud[i] for s, i in zip(steps, ci.tolist())]))
        return {
            "scores": scores,
            "f_li": f_li,
            "mask": mask,
            "f_l": f_l,
            "f_L": f_L,
            "f_o": f_o,
            "f_s": f_s,
            "per_point": per_point,
            "affordance": aff,
            "contact_index": ci,
            "p_contact": p_contact,
            "heads": heads,
            "fine_text": fine,
        }

    @torch.no_grad()
    def select_indices(self, steps: list[PreparedStep]) -> list[int]:
        """Hard instruction choice for each recorded step (no affordance/actor pass)."""
        fine = self.encode_texts([t for s in steps for t in s.instructions], fine=True)
        high = self.encode_texts([s.high_level for s in steps], fine=False)
        N, D = max(len(s.instructions) for s in steps), self.cfg.feature_dim
        mask = torch.zeros(len(steps), N, dtype=torch.bool)
        rows = []
        for b, s in enumerate(steps):
            r = torch.stack([fine[t] for t in s.instructions])
            rows.append(torch.cat([r, r.new_zeros(N - r.shape[0], D)]))
            mask[b, : len(s.instructions)] = True
        _, f_o = self.encode_clouds([s.cloud for s in steps], [s.grouping for s in steps], with_points=False)
        f_s = self.state(self._t(np.stack([s.agent_state for s in steps])))
        f_L = torch.stack([high[s.high_level] for s in steps])
        scores, _ = self.selector(torch.stack(rows), f_o, f_L, f_s, mask, hard=True)
        return [int(i) for i in scores.selected_index]

    def gaussian_targets(self, steps: list[PreparedStep], sigma: float) -> torch.Tensor:
        return self._t(np.stack([gaussian_affordance_target(s.cloud, s.contact, sigma) for s in steps]))

    # ------------------------------------------------------------ inference

    @torch.no_grad()
    def act(self, cloud, agent_state, instructions: list[str], high_level: str, prompts=None,
            grouping: CloudGrouping | None = None):
        """Closed-loop inference for one observation.

        ``prompts`` is a callable (verb, noun) → (aff_feature, act_feature) when the
        prompt module is enabled. Returns (GripperAction, selected index, AffordanceMap).
        """
        pts = check_cloud(cloud)
        g = grouping or build_grouping(pts, self.cfg)
        fine = self.encode_texts(list(instructions), fine=True)
        f_li = torch.stack([fine[t] for t in instructions])
        f_L = self.encode_text(high_level, fine=False)
        per_point, f_o = self.points(self._t(pts).unsqueeze(0), [g])
        f_s = self.encode_state(agent_state)
        scores, f_l = self.selector(f_li[None], f_o, f_L[None], f_s[None], hard=True)
        sel = int(scores.selected_index[0])
        p_aff = p_act = None
        if self.cfg.prompt_enabled:
            verb, noun = parse_verb_noun(instructions[sel])
            p_aff, p_act = prompts(verb, noun)
            p_aff, p_act = p_aff[None], p_act[None]
        aff = self.affordance(per_point, f_s[None], f_l, f_L[None], p_aff)[0]
        p_prime, idx = select_contact_point(aff, pts)
        heads = self.actor(per_point[0, idx][None], f_s[None], f_l, f_L[None], p_act)
        a_move = heads["a_move"][0].double().numpy()
        action = GripperAction.from_contact(
            p_prime,
            a_move,
            heads["a_rot"][0].double().numpy(),
            bool(heads["open_logits"][0].argmax() == 1),
            bool(heads["collide_logits"][0].argmax() == 1),
        )
        amap = AffordanceMap(aff.double().numpy(), p_prime, idx)
        return action, sel, amap


def stream_seed(*parts) -> int:
    """Stable 32-bit seed from strings and integers."""
    return zlib.crc32("|".join(str(p) for p in parts).encode())
