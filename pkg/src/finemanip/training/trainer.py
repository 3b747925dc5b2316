"""End-to-end optimization loop, checkpoints and reproducibility controls."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..data.episodes import Episode
from ..errors import NonFiniteLossError
from ..models.checkpoint import save_checkpoint
from ..models.network import FineManipNet, GroupingCache, PreparedStep, prepare_steps, stream_seed
from ..prompts import PromptBase
from .config import TrainConfig
from .objective import LossReport, first_nonfinite, total_loss

log = logging.getLogger(__name__)


def set_deterministic(seed: int) -> None:
    """Single-threaded, deterministic kernels, seeded torch RNG."""
    torch.set_num_threads(1)
    torch.use_deterministic_algorithms(True)
    torch.manual_seed(seed)


def build_network(cfg: TrainConfig) -> FineManipNet:
    torch.manual_seed(cfg.seed)
    return FineManipNet(cfg.model_config())


def make_optimizer(net: FineManipNet, cfg: TrainConfig) -> torch.optim.Optimizer:
    return torch.optim.AdamW(net.parameters(), lr=cfg.learning_rate, weight_decay=cfg.weight_decay)


def train_step(net: FineManipNet, opt: torch.optim.Optimizer, steps: list[PreparedStep], base: PromptBase | None,
               cfg: TrainConfig, seed: int, cache: GroupingCache) -> LossReport:
    """One clipped AdamW update. Raises NonFiniteLossError naming the first bad term."""
    net.train()
    opt.zero_grad(set_to_none=True)
    total, report, _ = total_loss(net, steps, base, cfg, seed, cache)
    bad = first_nonfinite(report)
    if bad is not None or not math.isfinite(report.total):
        raise NonFiniteLossError(bad or "total", f"seed {seed}, episodes {sorted({s.episode_id for s in steps})[:4]}")
    total.backward()
    torch.nn.utils.clip_grad_norm_(net.parameters(), cfg.grad_clip)
    opt.step()
    return report


@torch.no_grad()
def validation_loss(net: FineManipNet, steps: list[PreparedStep], cfg: TrainConfig, cache: GroupingCache,
                    base: PromptBase | None = None, batch_size: int = 32) -> float:
    """Mean supervised total over ``steps`` (prompt terms excluded)."""
    if not steps:
        return float("nan")
    net.eval()
    sup = cfg.replace(lambda_mm=0.0, lambda_verb=0.0, lambda_noun=0.0, lambda_aff=0.0)
    acc, n = 0.0, 0
    for i in range(0, len(steps), batch_size):
        chunk = steps[i : i + batch_size]
        # prompt features are still needed as inputs when the module is on
        _, rep, _ = total_loss(net, chunk, base, sup, stream_seed("val", i), cache)
        acc += rep.total * len(chunk)
        n += len(chunk)
    return acc / n


@dataclass
class TrainResult:
    net: FineManipNet
    history: list[dict] = field(default_factory=list)
    step_reports: list[LossReport] = field(default_factory=list)
    best_epoch: int = -1
    best_val: float = math.inf


def batches(n: int, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    order = np.random.default_rng([seed, epoch]).permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def train(cfg: TrainConfig, train_episodes: list[Episode], base: PromptBase | None = None,
          val_episodes: list[Episode] | None = None, out_dir=None, max_steps: int | None = None,
          checkpoint_every_epoch: bool = True, extra_manifest: dict | None = None) -> TrainResult:
    """Train from scratch; writes per-epoch checkpoints and ``best/`` under ``out_dir``."""
    set_deterministic(cfg.seed)
    net = build_network(cfg)
    opt = make_optimizer(net, cfg)
    cache = GroupingCache(net.cfg)
    steps = prepare_steps(sorted(train_episodes, key=lambda e: e.episode_id), cache)
    val_steps = prepare_steps(sorted(val_episodes or [], key=lambda e: e.episode_id), cache)
    base = base if cfg.prompt_enabled else None
    result = TrainResult(net)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        cfg.save(out / "config.json")
    n_done = 0
    for epoch in range(cfg.epochs):
        t0 = time.time()
        reports = []
        for bi, idx in enumerate(batches(len(steps), cfg.batch_size, cfg.seed, epoch)):
            rep = train_step(net, opt, [steps[i] for i in idx], base, cfg, stream_seed(cfg.seed, epoch, bi), cache)
            reports.append(rep)
            n_done += 1
            if max_steps is not None and n_done >= max_steps:
                break
        result.step_reports.extend(reports)
        val = validation_loss(net, val_steps, cfg, cache, base) if val_steps else float("nan")
        entry = {
            "epoch": epoch,
            "train_total": float(np.mean([r.total for r in reports])),
            "terms": {k: float(np.mean([r.terms[k] for r in reports])) for k in reports[0].terms},
            "val_total": val,
            "seconds": time.time() - t0,
        }
        result.history.append(entry)
        log.info("epoch %d train %.4f val %.4f (%.0fs)", epoch, entry["train_total"], val, entry["seconds"])
        improved = math.isfinite(val) and val < result.best_val
        if improved:
            result.best_val, result.best_epoch = val, epoch
        if out is not None:
            meta = {"epoch": epoch, "history": result.history, **(extra_manifest or {})}
            if checkpoint_every_epoch:
                save_checkpoint(net, out / f"epoch-{epoch:03d}", cfg.to_json(), meta)
            save_checkpoint(net, out / "last", cfg.to_json(), meta)
            if improved or not val_steps:
                save_checkpoint(net, out / "best", cfg.to_json(), meta)
            with open(out / "history.json", "w") as fh:
                json.dump(result.history, fh, indent=1)
        if max_steps is not None and n_done >= max_steps:
            break
    return result
