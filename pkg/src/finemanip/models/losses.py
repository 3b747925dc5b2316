"""Supervised and alignment loss terms (all mean-reduced)."""
from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import EmptyBatchError, InvalidQuaternionError, ShapeError

NLL_FLOOR = 1e-12
BCE_CLAMP = 1e-7


def instruction_nll_loss(weights: torch.Tensor, gt_index) -> torch.Tensor:
    """−log weights[gt]; ``weights`` is n or B × n, ``gt_index`` int or B-vector."""
    w = weights if weights.dim() == 2 else weights.unsqueeze(0)
    gt = torch.as_tensor(gt_index, dtype=torch.long, device=w.device).reshape(-1)
    if gt.shape[0] != w.shape[0]:
        raise ShapeError("one ground-truth index per row is required")
    if bool((gt < 0).any()) or bool((gt >= w.shape[1]).any()):
        raise IndexError(f"ground-truth index out of range for {w.shape[1]} instructions")
    picked = w.gather(1, gt.unsqueeze(1)).squeeze(1)
    return -torch.log(picked.clamp_min(NLL_FLOOR)).mean()


def gaussian_affordance_target(cloud, p_star, sigma: float):
    """exp(−‖p − p*‖² / 2σ²) per point; works on numpy arrays or tensors."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if isinstance(cloud, torch.Tensor):
        p = torch.as_tensor(p_star, dtype=cloud.dtype, device=cloud.device)
        d2 = ((cloud - p.unsqueeze(-2)) ** 2).sum(-1)
        return torch.exp(-d2 / (2 * sigma * sigma))
    cloud = np.asarray(cloud, dtype=np.float64)
    d2 = ((cloud - np.asarray(p_star, dtype=np.float64)) ** 2).sum(-1)
    return np.exp(-d2 / (2 * sigma * sigma))


def affordance_bce_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {tuple(pred.shape)} and target {tuple(target.shape)} differ")
    p = pred.clamp(BCE_CLAMP, 1 - BCE_CLAMP)
    return -(target * torch.log(p) + (1 - target) * torch.log(1 - p)).mean()


def _unit(q: torch.Tensor) -> torch.Tensor:
    n = q.norm(dim=-1, keepdim=True)
    if bool((n < 1e-12).any()):
        raise InvalidQuaternionError("zero-norm quaternion")
    return q / n


def quaternion_distance_loss(q_pred: torch.Tensor, q_gt: torch.Tensor) -> torch.Tensor:
    """1 − ⟨q_pred, q_gt⟩ after renormalization; mean over a leading batch axis."""
    if q_pred.shape != q_gt.shape or q_pred.shape[-1] != 4:
        raise ShapeError("quaternions must have matching shapes ending in 4")
    return (1 - (_unit(q_pred) * _unit(q_gt)).sum(-1)).mean()


def move_l1_loss(a_move: torch.Tensor, gt_position: torch.Tensor, contact: torch.Tensor) -> torch.Tensor:
    return (a_move - (gt_position - contact)).abs().mean()


def binary_ce_loss(logits: torch.Tensor, gt) -> torch.Tensor:
    """Two-class cross-entropy on ``logits`` (… × 2) against boolean labels."""
    gt = torch.as_tensor(gt, device=logits.device).reshape(-1).long()
    return F.cross_entropy(logits.reshape(-1, 2), gt)


def action_losses(pred: dict, gt_position, gt_rot, gt_open, gt_collide, contact):
    """(L_move, L_rot, L_open, L_collide) for predicted heads against a keyframe action."""
    return (
        move_l1_loss(pred["a_move"], gt_position, contact),
        quaternion_distance_loss(pred["a_rot"], gt_rot),
        binary_ce_loss(pred["open_logits"], gt_open),
        binary_ce_loss(pred["collide_logits"], gt_collide),
    )


def infonce_alignment_loss(anchor: torch.Tensor, positive: torch.Tensor, negatives: torch.Tensor | None,
                           tau: float) -> torch.Tensor:
    """−log(exp(s₊/τ) / Σ exp(s_i/τ)) with the positive inside the denominator."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    cands = positive.unsqueeze(0)
    if negatives is not None and negatives.numel():
        cands = torch.cat([cands, negatives.reshape(-1, positive.shape[-1])], dim=0)
    if cands.shape[0] == 0:
        raise EmptyBatchError("no candidates")
    logits = cands @ anchor / tau
    return -(logits[0] - torch.logsumexp(logits, dim=0))


def infonce_batch_loss(anchors: torch.Tensor, texts: torch.Tensor, labels, tau: float) -> torch.Tensor:
    """Mean InfoNCE where row i's positive is texts[i] and its negatives are the
    texts whose label differs from labels[i]."""
    K = anchors.shape[0]
    if K == 0:
        raise EmptyBatchError("empty alignment batch")
    if tau <= 0:
        raise ValueError("tau must be positive")
    lab = list(labels)
    logits = anchors @ texts.T / tau
    same = torch.tensor([[lab[i] == lab[j] and i != j for j in range(K)] for i in range(K)], device=anchors.device)
    logits = logits.masked_fill(same, float("-inf"))
    return -(logits.diagonal() - torch.logsumexp(logits, dim=1)).mean()


def consistency_l1_loss(f1: torch.Tensor, f2: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference; used for the verb, noun and affordance terms."""
    if f1.shape != f2.shape:
        raise ShapeError(f"feature shapes {tuple(f1.shape)} and {tuple(f2.shape)} differ")
    return (f1 - f2).abs().mean()


verb_consistency_loss = consistency_l1_loss
noun_consistency_loss = consistency_l1_loss
affordance_consistency_loss = consistency_l1_loss
