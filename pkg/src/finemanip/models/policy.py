"""Instruction selection, affordance prediction and the actor heads."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..errors import NoInstructionError, ShapeError
from ..geometry import IDENTITY_QUAT
from .config import ModelConfig
from .encoders import mlp

CONTACT_KEEP_FRACTION = 0.5
ROT_NORM_GUARD = 1e-8


@dataclass
class SimilarityScores:
    logits: torch.Tensor  # n (or B × n, masked entries −inf)
    weights: torch.Tensor
    selected_index: torch.Tensor | int


@dataclass
class AffordanceMap:
    scores: np.ndarray
    contact_point: np.ndarray
    contact_index: int


def _check_dim(name: str, t: torch.Tensor, D: int):
    if t.shape[-1] != D:
        raise ShapeError(f"{name} has width {t.shape[-1]}, expected {D}")


class InstructionSelector(nn.Module):
    """Scores each fine-grained instruction against a scene/state context vector."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        D = cfg.feature_dim
        self.D = D
        self.tau = cfg.tau_sel
        self.context = mlp([3 * D, cfg.hidden, D], final_act=False)

    def forward(self, f_li: torch.Tensor, f_o: torch.Tensor, f_L: torch.Tensor, f_s: torch.Tensor,
                mask: torch.Tensor | None = None, hard: bool = False):
        """f_li: B × N × D (mask B × N, True = real). Returns (SimilarityScores, f_l B × D)."""
        if f_li.shape[-2] == 0:
            raise NoInstructionError("no fine-grained instructions to select from")
        for name, t in (("f_li", f_li), ("f_o", f_o), ("f_L", f_L), ("f_s", f_s)):
            _check_dim(name, t, self.D)
        c = F.normalize(self.context(torch.cat([f_o, f_L, f_s], dim=-1)), dim=-1)
        logits = (f_li @ c.unsqueeze(-1)).squeeze(-1) / self.tau
        if mask is not None:
            if not bool(mask.any(dim=-1).all()):
                raise NoInstructionError("a row has no instructions")
            logits = logits.masked_fill(~mask, float("-inf"))
        weights = torch.softmax(logits, dim=-1)
        selected = weights.argmax(dim=-1)  # first maximum on ties
        if hard:
            f_l = f_li.gather(-2, selected.view(*selected.shape, 1, 1).expand(*selected.shape, 1, self.D)).squeeze(-2)
        else:
            f_l = (weights.unsqueeze(-1) * f_li).sum(-2)
        return SimilarityScores(logits, weights, selected), f_l


def select_instruction(selector: InstructionSelector, f_li, f_o, f_L, f_s, hard: bool = True):
    """Single-sample convenience wrapper: f_li n × D, others D."""
    scores, f_l = selector(f_li.unsqueeze(0), f_o.unsqueeze(0), f_L.unsqueeze(0), f_s.unsqueeze(0), hard=hard)
    return SimilarityScores(scores.logits[0], scores.weights[0], int(scores.selected_index[0])), f_l[0]


class AffordanceNet(nn.Module):
    """Per-point MLP over [f_p, f_s, f_l, f_L, (noun prompt feature)] → score in (0, 1)."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        D = cfg.feature_dim
        self.D = D
        self.prompt_enabled = cfg.prompt_enabled
        self.prompt_dim = 2 * D if cfg.prompt_enabled else 0
        self.net = mlp([4 * D + self.prompt_dim, cfg.hidden, cfg.hidden // 2 or 1, 1], final_act=False)

    def forward(self, f_p, f_s, f_l, f_L, prompt_feature=None) -> torch.Tensor:
        """f_p: B × n × D, the rest B × ·. Returns B × n scores."""
        _check_dim("f_p", f_p, self.D)
        cond = [f_s, f_l, f_L]
        if prompt_feature is not None:
            if not self.prompt_enabled:
                raise ShapeError("prompt feature supplied but the prompt module is disabled")
            _check_dim("prompt_feature", prompt_feature, self.prompt_dim)
            cond.append(prompt_feature)
        elif self.prompt_enabled:
            raise ShapeError("prompt module enabled but no prompt feature supplied")
        for t in cond[:3]:
            _check_dim("conditioning feature", t, self.D)
        c = torch.cat(cond, dim=-1).unsqueeze(-2).expand(*f_p.shape[:-1], -1)
        return torch.sigmoid(self.net(torch.cat([f_p, c], dim=-1)).squeeze(-1))


def select_contact_point(scores, cloud, sample: bool = False, seed: int | None = None) -> tuple[np.ndarray, int]:
    """Drop points below half the best score, then take the argmax (lowest index on ties)
    or, with ``sample``, draw a survivor with probability proportional to its score."""
    s = np.asarray(scores.detach().cpu() if isinstance(scores, torch.Tensor) else scores, dtype=np.float64)
    cloud = np.asarray(cloud.detach().cpu() if isinstance(cloud, torch.Tensor) else cloud, dtype=np.float64)
    if s.ndim != 1 or s.shape[0] == 0 or cloud.shape[0] != s.shape[0]:
        raise ShapeError("scores must be a nonempty n-vector aligned to the cloud")
    if not sample:
        idx = int(np.argmax(s))
    else:
        keep = np.flatnonzero(s >= CONTACT_KEEP_FRACTION * s.max())
        w = s[keep]
        p = w / w.sum() if w.sum() > 0 else np.full(len(keep), 1.0 / len(keep))
        idx = int(np.random.default_rng(seed).choice(keep, p=p))
    return cloud[idx].copy(), idx


class ActorNet(nn.Module):
    """Shared encoder over [f_p', f_s, f_l, f_L, (verb prompt features)] and four decoders."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        D, H = cfg.feature_dim, cfg.hidden
        self.D = D
        self.prompt_enabled = cfg.prompt_enabled
        self.prompt_dim = 3 * D if cfg.prompt_enabled else 0
        self.encoder = mlp([4 * D + self.prompt_dim, H, H])
        half = max(H // 2, 2)
        self.move = mlp([H, half, 3], final_act=False)
        self.rot = mlp([H, half, 4], final_act=False)
        self.open = mlp([H, half, 2], final_act=False)
        self.collide = mlp([H, half, 2], final_act=False)

    def forward(self, f_contact, f_s, f_l, f_L, prompt_features=None) -> dict:
        inputs = [f_contact, f_s, f_l, f_L]
        for t in inputs:
            _check_dim("actor input", t, self.D)
        if prompt_features is not None:
            if not self.prompt_enabled:
                raise ShapeError("prompt features supplied but the prompt module is disabled")
            _check_dim("prompt_features", prompt_features, self.prompt_dim)
            inputs.append(prompt_features)
        elif self.prompt_enabled:
            raise ShapeError("prompt module enabled but no prompt features supplied")
        h = self.encoder(torch.cat(inputs, dim=-1))
        raw_rot = self.rot(h)
        return {
            "a_move": self.move(h),
            "raw_rot": raw_rot,
            "a_rot": normalize_rotation(raw_rot),
            "open_logits": self.open(h),
            "collide_logits": self.collide(h),
        }


def normalize_rotation(raw: torch.Tensor) -> torch.Tensor:
    """Unit quaternion from raw head output; near-zero outputs map to identity."""
    n = raw.norm(dim=-1, keepdim=True)
    ident = torch.as_tensor(IDENTITY_QUAT, dtype=raw.dtype, device=raw.device).expand_as(raw)
    safe = raw / n.clamp_min(ROT_NORM_GUARD)
    return torch.where(n < ROT_NORM_GUARD, ident, safe)
