"""Text, point-cloud and agent-state encoders producing the f_* features."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .. import kernels
from ..errors import EmptyTextError, InvalidInputError, InvalidStateError, ShapeError
from ..sim.world import WORKSPACE_HI, WORKSPACE_LO
from .config import ModelConfig
from .vocab import Vocabulary


def mlp(sizes, final_act: bool = True) -> nn.Sequential:
    layers: list[nn.Module] = []
    for i in range(len(sizes) - 1):
        layers.append(nn.Linear(sizes[i], sizes[i + 1]))
        if i < len(sizes) - 2 or final_act:
            layers.append(nn.ReLU())
    return nn.Sequential(*layers)


# ---------------------------------------------------------------- text


class TextEncoder(nn.Module):
    """Token embedding + positions + self-attention, mean-pooled to a unit D-vector.

    A shared 20-token soft prompt is prepended to fine-grained instructions.
    """

    def __init__(self, cfg: ModelConfig, vocab: Vocabulary):
        super().__init__()
        self.vocab = vocab
        E = cfg.token_dim
        self.max_tokens = cfg.max_tokens
        self.embed = nn.Embedding(len(vocab), E, padding_idx=vocab.pad_index)
        self.pos = nn.Parameter(torch.randn(cfg.prompt_length + cfg.max_tokens, E) * 0.02)
        self.soft_prompt = nn.Parameter(torch.randn(cfg.prompt_length, E) * 0.02)
        layer = nn.TransformerEncoderLayer(E, cfg.text_heads, 2 * E, dropout=0.0, batch_first=True, norm_first=True)
        self.layers = nn.TransformerEncoder(layer, cfg.text_layers, enable_nested_tensor=False)
        self.out = nn.Linear(E, cfg.feature_dim)

    def forward(self, texts: list[str], use_prompt: bool) -> torch.Tensor:
        if not texts:
            raise EmptyTextError("no texts to encode")
        for t in texts:
            if not t or not t.strip():
                raise EmptyTextError("instruction text is empty")
        ids, pad = self.vocab.batch(texts, self.max_tokens)
        ids, pad = ids.to(self.pos.device), pad.to(self.pos.device)
        x = self.embed(ids)
        if use_prompt:
            B, P = x.shape[0], self.soft_prompt.shape[0]
            x = torch.cat([self.soft_prompt.unsqueeze(0).expand(B, -1, -1), x], dim=1)
            pad = torch.cat([torch.zeros(B, P, dtype=torch.bool, device=pad.device), pad], dim=1)
        x = x + self.pos[: x.shape[1]]
        h = self.layers(x, src_key_padding_mask=pad)
        keep = (~pad).unsqueeze(-1).to(h.dtype)
        pooled = (h * keep).sum(1) / keep.sum(1)
        return F.normalize(self.out(pooled), dim=-1)


# ---------------------------------------------------------------- point cloud


@dataclass
class CloudGrouping:
    """Index structure of the two-level hierarchy; depends only on coordinates."""

    fps1: np.ndarray  # m1 indices into points
    group1: np.ndarray  # m1 × k1 indices into points
    fps2: np.ndarray  # m2 indices into level-1 centers
    group2: np.ndarray  # m2 × k2 indices into level-1 centers
    nn1: np.ndarray  # m1 × 3 indices into level-2 centers
    w1: np.ndarray  # m1 × 3 interpolation weights
    nn0: np.ndarray  # n × 3 indices into level-1 centers
    w0: np.ndarray  # n × 3


def _idw(sqd: np.ndarray) -> np.ndarray:
    w = 1.0 / (np.sqrt(sqd) + 1e-8)
    return w / w.sum(axis=1, keepdims=True)


def check_cloud(cloud, min_points: int = 64) -> np.ndarray:
    pts = np.asarray(cloud, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ShapeError(f"cloud must be n × 3, got {pts.shape}")
    if pts.shape[0] < min_points:
        raise InvalidInputError(f"cloud needs at least {min_points} points, got {pts.shape[0]}")
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("cloud contains non-finite coordinates")
    return pts


def build_grouping(cloud, cfg: ModelConfig) -> CloudGrouping:
    pts = check_cloud(cloud, min_points=max(cfg.sa1_centers, 1))
    fps1 = kernels.farthest_point_sample(pts, cfg.sa1_centers)
    c1 = pts[fps1]
    group1 = kernels.ball_query(pts, c1, cfg.sa1_radius, cfg.sa1_nsample)
    fps2 = kernels.farthest_point_sample(c1, cfg.sa2_centers)
    c2 = c1[fps2]
    group2 = kernels.ball_query(c1, c2, cfg.sa2_radius, cfg.sa2_nsample)
    nn1, d1 = kernels.three_nn(c1, c2)
    nn0, d0 = kernels.three_nn(pts, c1)
    return CloudGrouping(fps1, group1, fps2, group2, nn1, _idw(d1), nn0, _idw(d0))


def _gather(x: torch.Tensor, idx: torch.Tensor) -> torch.Tensor:
    """x: B × N × C, idx: B × ... → B × ... × C"""
    B = x.shape[0]
    b = torch.arange(B, device=x.device).view(B, *([1] * (idx.dim() - 1)))
    return x[b, idx]


class PointCloudEncoder(nn.Module):
    """Two set-abstraction levels, a global max-pool head and feature propagation.

    Every point carries one extra scalar channel: zero for raw observations, the
    predicted affordance score for affordance-augmented clouds.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        D, H = cfg.feature_dim, cfg.hidden
        self.cfg = cfg
        h1, h2 = max(H // 4, 2), max(H // 2, 4)
        self.sa1 = mlp([3 + 1, h1, h1, h2])
        self.sa2 = mlp([3 + h2, h2, H])
        self.glob = mlp([3 + H, H])
        self.glob_out = nn.Linear(H, D)
        self.fp1 = mlp([H + h2, H])
        self.fp0 = mlp([H + 3 + 1, H, D], final_act=False)

    def forward(self, xyz: torch.Tensor, groupings: list[CloudGrouping], extra: torch.Tensor | None = None,
                with_points: bool = True):
        """xyz: B × n × 3; returns (per-point B × n × D or None, global B × D)."""
        if xyz.dim() != 3 or xyz.shape[-1] != 3:
            raise ShapeError(f"xyz must be B × n × 3, got {tuple(xyz.shape)}")
        if len(groupings) != xyz.shape[0]:
            raise ShapeError("one grouping per cloud is required")
        if not torch.isfinite(xyz).all():
            raise InvalidInputError("cloud contains non-finite coordinates")
        cfg = self.cfg
        dev = xyz.device

        def stack(name, dtype=torch.long):
            return torch.as_tensor(np.stack([getattr(g, name) for g in groupings]), dtype=dtype, device=dev)

        B, n, _ = xyz.shape
        if extra is None:
            extra = xyz.new_zeros(B, n, 1)
        elif extra.dim() == 2:
            extra = extra.unsqueeze(-1)
        fps1, group1, fps2, group2 = stack("fps1"), stack("group1"), stack("fps2"), stack("group2")
        nn1, nn0 = stack("nn1"), stack("nn0")
        w1, w0 = stack("w1", xyz.dtype), stack("w0", xyz.dtype)

        c1 = _gather(xyz, fps1)
        rel = (_gather(xyz, group1) - c1.unsqueeze(2)) / cfg.sa1_radius
        f1 = self.sa1(torch.cat([rel, _gather(extra, group1)], dim=-1)).amax(dim=2)
        c2 = _gather(c1, fps2)
        rel2 = (_gather(c1, group2) - c2.unsqueeze(2)) / cfg.sa2_radius
        f2 = self.sa2(torch.cat([rel2, _gather(f1, group2)], dim=-1)).amax(dim=2)
        g = self.glob_out(self.glob(torch.cat([c2, f2], dim=-1)).amax(dim=1))

        if not with_points:
            return None, g
        up1 = (_gather(f2, nn1) * w1.unsqueeze(-1)).sum(2)
        g1 = self.fp1(torch.cat([up1, f1], dim=-1))
        up0 = (_gather(g1, nn0) * w0.unsqueeze(-1)).sum(2)
        per_point = self.fp0(torch.cat([up0, xyz, extra], dim=-1))
        return per_point, g


# ---------------------------------------------------------------- agent state


def check_agent_state(state) -> np.ndarray:
    s = np.asarray(state, dtype=np.float64).reshape(-1, 4)
    if not np.all(np.isfinite(s)):
        raise InvalidStateError("agent state is not finite")
    if not np.all((s[:, 0] == 0.0) | (s[:, 0] == 1.0)):
        raise InvalidStateError("open component must be 0 or 1")
    pos = s[:, 1:]
    if np.any(pos < WORKSPACE_LO - 1e-6) or np.any(pos > WORKSPACE_HI + 1e-6):
        raise InvalidStateError("gripper position outside the workspace")
    return s


class StateEncoder(nn.Module):
    """4 → 64 → D MLP over (open, x, y, z)."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.net = mlp([4, cfg.state_hidden, cfg.feature_dim], final_act=False)

    def forward(self, state: torch.Tensor) -> torch.Tensor:
        check_agent_state(state.detach().cpu().numpy())
        return self.net(state)
