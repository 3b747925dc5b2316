"""Central finite-difference checks for the ten loss terms.

Each probe feeds random float64 inputs (D = 8, n = 32 points) through the head
that produces the term, so the check covers the loss and its immediate
network wiring.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from ..models import losses as L
from ..models.config import ModelConfig
from ..models.policy import ActorNet, AffordanceNet, InstructionSelector
from .config import LOSS_TERMS

D = 8
N_POINTS = 32
BATCH = 3
STEP = 1e-5


@dataclass
class GradcheckResult:
    term: str
    max_rel_error: float
    n_inputs: int
    seconds: float

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol


def _cfg() -> ModelConfig:
    return ModelConfig.tiny(feature_dim=D, hidden=8, prompt_enabled=True)


def _probe(term: str, g: torch.Generator):
    """(loss function of the inputs, list of input tensors) for one term."""
    cfg = _cfg()
    randn = lambda *s: torch.randn(*s, generator=g, dtype=torch.float64)  # noqa: E731
    torch.manual_seed(int(torch.randint(0, 2**31 - 1, (1,), generator=g)))
    if term == "sel":
        sel = InstructionSelector(cfg).double()
        mask = torch.ones(BATCH, 4, dtype=torch.bool)
        mask[0, 3] = False
        gt = [1, 3, 0]
        ctx = [randn(BATCH, D) for _ in range(3)]

        def fn(f_li, f_o):
            scores, _ = sel(F.normalize(f_li, dim=-1), f_o, ctx[1], ctx[2], mask)
            return L.instruction_nll_loss(scores.weights, gt)

        return fn, [randn(BATCH, 4, D), randn(BATCH, D)]
    if term == "bce":
        aff = AffordanceNet(cfg).double()
        cond = [randn(BATCH, D) for _ in range(3)]
        cloud = torch.rand(BATCH, N_POINTS, 3, generator=g, dtype=torch.float64)
        target = L.gaussian_affordance_target(cloud, cloud[:, 0], 0.3)

        def fn(f_p, prompt):
            return L.affordance_bce_loss(aff(f_p, *cond, prompt), target)

        return fn, [randn(BATCH, N_POINTS, D), randn(BATCH, 2 * D)]
    if term in ("move", "rot", "open", "collide"):
        actor = ActorNet(cfg).double()
        cond = [randn(BATCH, D) for _ in range(3)]
        gt_pos, contact = randn(BATCH, 3), randn(BATCH, 3)
        gt_rot = F.normalize(randn(BATCH, 4), dim=-1)
        gt_open, gt_collide = [True, False, True], [False, False, True]
        k = ("move", "rot", "open", "collide").index(term)

        def fn(f_c, prompt):
            heads = actor(f_c, *cond, prompt)
            return L.action_losses(heads, gt_pos, gt_rot, gt_open, gt_collide, contact)[k]

        return fn, [randn(BATCH, D), randn(BATCH, 3 * D)]
    if term == "mm":
        proj = torch.nn.Linear(2 * D, D).double()
        labels = ["grasp", "pull", "grasp", "press"]

        def fn(f_action, f_text):
            anchors = F.normalize(proj(f_action), dim=-1)
            return L.infonce_batch_loss(anchors, F.normalize(f_text, dim=-1), labels, 0.07)

        return fn, [randn(4, 2 * D), randn(4, D)]
    if term in ("verb", "noun", "aff"):
        loss = {"verb": L.verb_consistency_loss, "noun": L.noun_consistency_loss,
                "aff": L.affordance_consistency_loss}[term]

        def fn(f1, f2):
            return loss(F.normalize(f1, dim=-1), F.normalize(f2, dim=-1))

        return fn, [randn(BATCH, D), randn(BATCH, D)]
    raise KeyError(f"unknown loss term {term!r}")


def finite_diff_gradcheck(term: str, seed: int = 0, h: float = STEP) -> GradcheckResult:
    """max |g_analytic − g_fd| / max |g_analytic| over every input element."""
    t0 = time.time()
    g = torch.Generator().manual_seed(seed)
    fn, inputs = _probe(term, g)
    xs = [x.clone().requires_grad_(True) for x in inputs]
    grads = torch.autograd.grad(fn(*xs), xs)
    err, scale, count = 0.0, 0.0, 0
    with torch.no_grad():
        for x, ga in zip(xs, grads):
            flat = x.view(-1)
            gflat = ga.reshape(-1)
            for i in range(flat.numel()):
                old = float(flat[i])
                flat[i] = old + h
                up = float(fn(*xs))
                flat[i] = old - h
                down = float(fn(*xs))
                flat[i] = old
                fd = (up - down) / (2 * h)
                err = max(err, abs(fd - float(gflat[i])))
                scale = max(scale, abs(float(gflat[i])))
                count += 1
    rel = err / scale if scale > 0 else err
    return GradcheckResult(term, rel, count, time.time() - t0)


def gradcheck_all(seed: int = 0) -> list[GradcheckResult]:
    return [finite_diff_gradcheck(t, seed) for t in LOSS_TERMS]
