"""Weighted sum of the ten loss terms for one batch of steps."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
import torch

from ..models import losses as L
from ..models.network import FineManipNet, PreparedStep, stream_seed
from ..prompts import PromptBase, retrieve_action_prompt, retrieve_perception_prompt, sample_consistency_pairs
from .config import LOSS_TERMS, TrainConfig


@dataclass
class LossReport:
    terms: dict[str, float]
    weights: dict[str, float]
    total: float

    def check(self, tol: float = 1e-6) -> bool:
        s = sum(self.weights[t] * self.terms[t] for t in LOSS_TERMS)
        return abs(s - self.total) <= tol * max(1.0, abs(self.total))

    def to_json(self) -> dict:
        return {"terms": dict(self.terms), "weights": dict(self.weights), "total": self.total}


@dataclass
class PromptFeatures:
    aff: torch.Tensor  # B × 2D
    act: torch.Tensor  # B × 3D
    noun_entries: dict
    verb_entries: dict
    f_noun: dict
    f_aff: dict
    f_verb: dict
    anchors: torch.Tensor
    anchor_texts: torch.Tensor
    anchor_labels: list[str]


def batch_prompt_features(net: FineManipNet, steps: list[PreparedStep], base: PromptBase, seed: int,
                          grouping_cache, use_gt: bool = True, detach: bool = False) -> PromptFeatures:
    """Retrieve one perception entry per noun and one action entry per verb in the batch
    (excluding the batch's own episodes) and encode them."""
    by_noun, by_verb = defaultdict(set), defaultdict(set)
    for s in steps:
        by_noun[s.noun].add(s.episode_id)
        by_verb[s.verb].add(s.episode_id)
    nouns, verbs = sorted(by_noun), sorted(by_verb)
    noun_entries = {n: retrieve_perception_prompt(base, n, by_noun[n], stream_seed(seed, "noun", n)) for n in nouns}
    verb_entries = {v: retrieve_action_prompt(base, v, by_verb[v], stream_seed(seed, "verb", v)) for v in verbs}
    pe = [noun_entries[n] for n in nouns]
    ae = [verb_entries[v] for v in verbs]
    f_noun, f_aff, _ = net.perception_prompt_features(pe, [grouping_cache.get(e.ref, e.cloud) for e in pe])
    f_verb, f_vision, f_action = net.action_prompt_features(ae, [grouping_cache.get(e.ref, e.cloud) for e in ae])
    anchors = net.alignment_anchor(f_action, f_vision)
    noun_row = {n: i for i, n in enumerate(nouns)}
    verb_row = {v: i for i, v in enumerate(verbs)}
    aff = torch.cat([f_noun, f_aff], dim=-1)
    act = torch.cat([f_verb, f_vision, f_action], dim=-1)
    if detach:
        aff, act = aff.detach(), act.detach()
    return PromptFeatures(
        aff=aff[[noun_row[s.noun] for s in steps]],
        act=act[[verb_row[s.verb] for s in steps]],
        noun_entries=noun_entries,
        verb_entries=verb_entries,
        f_noun={n: f_noun[i] for n, i in noun_row.items()},
        f_aff={n: f_aff[i] for n, i in noun_row.items()},
        f_verb={v: f_verb[i] for v, i in verb_row.items()},
        anchors=anchors,
        anchor_texts=f_verb,
        anchor_labels=verbs,
    )


def _mean(terms: list[torch.Tensor], like: torch.Tensor) -> torch.Tensor:
    return torch.stack(terms).mean() if terms else like.new_zeros(())


def total_loss(net: FineManipNet, steps: list[PreparedStep], base: PromptBase | None, cfg: TrainConfig, seed: int,
               grouping_cache) -> tuple[torch.Tensor, LossReport, dict]:
    """All ten terms, the weighted total and a LossReport.

    Prompt terms are skipped (reported as 0) when the prompt module is off.
    """
    use_prompts = cfg.prompt_enabled and base is not None
    pf = None
    if use_prompts:
        pf = batch_prompt_features(net, steps, base, seed, grouping_cache, detach=cfg.detach_prompts)
    out = net.forward_steps(
        steps,
        prompt_aff=pf.aff if pf else None,
        prompt_act=pf.act if pf else None,
        hard=False,
        contact_index=[s.contact_index for s in steps],
    )
    t = net._t
    gt_pos = t(np.stack([s.action.a_position for s in steps]))
    gt_rot = t(np.stack([s.action.a_rot for s in steps]))
    heads = out["heads"]
    target = net.gaussian_targets(steps, cfg.sigma)
    terms: dict[str, torch.Tensor] = {
        "sel": L.instruction_nll_loss(out["scores"].weights, [s.gt_index for s in steps]),
        "bce": L.affordance_bce_loss(out["affordance"], target),
    }
    terms["move"], terms["rot"], terms["open"], terms["collide"] = L.action_losses(
        heads, gt_pos, gt_rot, [s.action.a_open for s in steps], [s.action.a_collide for s in steps], out["p_contact"]
    )
    zero = terms["sel"].new_zeros(())
    for name in ("mm", "verb", "noun", "aff"):
        terms[name] = zero
    if use_prompts:
        if len(pf.anchor_labels) > 1:
            terms["mm"] = L.infonce_batch_loss(pf.anchors, pf.anchor_texts, pf.anchor_labels, cfg.tau)
        verb_pairs, noun_pairs = sample_consistency_pairs(
            steps, base, seed, verb_partners=pf.verb_entries, noun_partners=pf.noun_entries
        )
        fine = out["fine_text"]
        own = [fine[s.instructions[s.step]] for s in steps]

        def partner_text(p, table, feats):
            if isinstance(p, int):
                return own[p]
            if table.get(p.key) is p:
                return feats[p.key]
            return net.encode_text(p.instruction, fine=True)

        terms["verb"] = _mean(
            [L.verb_consistency_loss(own[i], partner_text(p, pf.verb_entries, pf.f_verb)) for i, p in verb_pairs], zero
        )
        terms["noun"] = _mean(
            [L.noun_consistency_loss(own[i], partner_text(p, pf.noun_entries, pf.f_noun)) for i, p in noun_pairs], zero
        )
        if cfg.lambda_aff > 0 and noun_pairs:
            involved = sorted({i for i, _ in noun_pairs} | {p for _, p in noun_pairs if isinstance(p, int)})
            _, f_aff_batch = net.encode_clouds(
                [steps[i].cloud for i in involved],
                [steps[i].grouping for i in involved],
                extra=out["affordance"][involved],
                with_points=False,
            )
            row = {i: r for r, i in enumerate(involved)}
            aff_terms = []
            for i, p in noun_pairs:
                other = f_aff_batch[row[p]] if isinstance(p, int) else (
                    pf.f_aff[p.key] if pf.noun_entries.get(p.key) is p else None
                )
                if other is not None:
                    aff_terms.append(L.affordance_consistency_loss(f_aff_batch[row[i]], other))
            terms["aff"] = _mean(aff_terms, zero)
    weights = cfg.term_weights()
    total = sum(weights[k] * terms[k] for k in LOSS_TERMS)
    values = {k: float(v.detach()) for k, v in terms.items()}
    report = LossReport(values, weights, float(total.detach()))
    return total, report, {"terms": terms, "outputs": out}


def first_nonfinite(report: LossReport) -> str | None:
    for k in LOSS_TERMS:
        if not math.isfinite(report.terms[k]):
            return k
    return None
