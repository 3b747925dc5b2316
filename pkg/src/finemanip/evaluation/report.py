"""Per-task metrics, checkpoint evaluation and the prompt ablation report."""
from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..data.episodes import Episode
from ..errors import IncompatibleAblationError
from ..models.checkpoint import load_checkpoint
from ..models.network import FineManipNet, GroupingCache, PreparedStep, prepare_steps
from ..prompts import PromptBase
from ..sim.tasks import NOVEL_TASKS, TRAIN_TASKS
from .metrics import success_rate
from .rollout import PromptFeatureCache, RolloutResult, episode_spec, rollout_episode

log = logging.getLogger(__name__)


@dataclass
class MetricsReport:
    success: dict[str, float]
    following: dict[str, float | None]
    n_episodes: dict[str, int]
    train_success: float | None = None
    train_following: float | None = None
    novel_success: float | None = None
    novel_following: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for v in list(self.success.values()) + [v for v in self.following.values() if v is not None]:
            if not 0.0 <= v <= 1.0:
                raise ValueError("rates must lie in [0, 1]")
        self.train_success, self.train_following = self._group(TRAIN_TASKS)
        self.novel_success, self.novel_following = self._group(NOVEL_TASKS)

    def _group(self, tasks):
        s = [self.success[t] for t in tasks if t in self.success]
        f = [self.following[t] for t in tasks if self.following.get(t) is not None]
        return (float(np.mean(s)) if s else None), (float(np.mean(f)) if f else None)

    def to_json(self) -> dict:
        return {
            "success": self.success,
            "following": self.following,
            "n_episodes": self.n_episodes,
            "train_success": self.train_success,
            "train_following": self.train_following,
            "novel_success": self.novel_success,
            "novel_following": self.novel_following,
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, d: dict) -> "MetricsReport":
        return cls(d["success"], d["following"], d["n_episodes"], meta=d.get("meta", {}))

    @classmethod
    def mean(cls, reports: list["MetricsReport"]) -> "MetricsReport":
        tasks = sorted(set().union(*(r.success for r in reports)))
        succ = {t: float(np.mean([r.success[t] for r in reports if t in r.success])) for t in tasks}
        foll = {}
        for t in tasks:
            vals = [r.following.get(t) for r in reports if r.following.get(t) is not None]
            foll[t] = float(np.mean(vals)) if vals else None
        n = {t: int(sum(r.n_episodes.get(t, 0) for r in reports)) for t in tasks}
        return cls(succ, foll, n, meta={"n_reports": len(reports)})


def accuracy(predicted, truth) -> float:
    predicted, truth = list(predicted), list(truth)
    if not truth or len(predicted) != len(truth):
        raise ValueError("need equally many predictions and ground-truth indices")
    return sum(int(p == g) for p, g in zip(predicted, truth)) / len(truth)


def instruction_following_accuracy(selector, episodes: list[Episode], batch_size: int = 32,
                                   cache: GroupingCache | None = None) -> float:
    """Fraction of recorded steps where the selector picks the step's own instruction.

    ``selector`` is a FineManipNet or a callable(PreparedStep) → index.
    """
    if isinstance(selector, FineManipNet):
        cache = cache or GroupingCache(selector.cfg)
        steps = prepare_steps(episodes, cache)
        selector.eval()
        pred = []
        for i in range(0, len(steps), batch_size):
            pred += selector.select_indices(steps[i : i + batch_size])
    else:
        steps = _light_steps(episodes)
        pred = [selector(s) for s in steps]
    return accuracy(pred, [s.gt_index for s in steps])


def _light_steps(episodes: list[Episode]) -> list[PreparedStep]:
    """PreparedStep stand-ins without groupings, for non-network selectors."""
    out = []
    for ep in episodes:
        texts = [s.instruction for s in ep.steps]
        for k, s in enumerate(ep.steps):
            out.append(PreparedStep(ep.episode_id, k, s.observation, None, s.agent_state, texts,
                                    ep.instruction_set.high_level, s.action, s.contact, -1, s.verb, s.noun))
    return out


def evaluate_network(net: FineManipNet, episodes: list[Episode], base: PromptBase | None = None,
                     n_points: int | None = None, prompt_seed: int = 0) -> tuple[MetricsReport, list[RolloutResult]]:
    """Roll out every episode's (task, variation, seed) and score instruction following."""
    net.eval()
    prompts = PromptFeatureCache(net, base, prompt_seed) if net.cfg.prompt_enabled else None
    by_task: dict[str, list[Episode]] = defaultdict(list)
    for ep in episodes:
        by_task[ep.task].append(ep)
    results: list[RolloutResult] = []
    success, following, counts = {}, {}, {}
    cache = GroupingCache(net.cfg)
    with torch.no_grad():
        for task in sorted(by_task):
            eps = sorted(by_task[task], key=lambda e: e.episode_id)
            task_results = []
            for ep in eps:
                r = rollout_episode(net, episode_spec(ep), ep.seed, ep.instruction_set, prompts,
                                    n_points=n_points or ep.n_points)
                task_results.append(r)
            results += task_results
            success[task] = success_rate([r.success for r in task_results])
            following[task] = instruction_following_accuracy(net, eps, cache=cache)
            counts[task] = len(eps)
            log.info("%s: success %.2f following %.2f", task, success[task], following[task])
    report = MetricsReport(success, following, counts, meta={"prompt_enabled": net.cfg.prompt_enabled})
    return report, results


def evaluate_checkpoint(ckpt_dir, episodes: list[Episode], base: PromptBase | None = None, **kw):
    net, manifest = load_checkpoint(ckpt_dir)
    report, results = evaluate_network(net, episodes, base, **kw)
    report.meta.update({"checkpoint": str(ckpt_dir), "config_hash": manifest.get("config_hash")})
    return report, results


_ABLATION_FREE = {"prompt_enabled", "lambda_mm", "lambda_verb", "lambda_noun", "lambda_aff", "detach_prompts"}


def check_ablation_pair(cfg_full: dict, cfg_ablated: dict) -> None:
    """Two training configs may differ only in the prompt switch and prompt weights."""
    keys = (set(cfg_full) | set(cfg_ablated)) - _ABLATION_FREE
    diff = sorted(k for k in keys if cfg_full.get(k) != cfg_ablated.get(k))
    if diff:
        raise IncompatibleAblationError(f"configs differ beyond the prompt switch: {diff}")


def format_table(full: MetricsReport, ablated: MetricsReport, names=("full", "no prompt")) -> str:
    """Plain-text table in 'success / following' cells."""

    def cell(r, t):
        s = r.success.get(t)
        f = r.following.get(t)
        if s is None:
            return "-"
        return f"{s:.2f} / {f:.2f}" if f is not None else f"{s:.2f} / -"

    tasks = [t for t in TRAIN_TASKS + NOVEL_TASKS if t in full.success or t in ablated.success]
    w = max([len(t) for t in tasks] + [len("novel average")])
    lines = [f"{'task':<{w}}  {names[0]:>16}  {names[1]:>18}  {'delta success':>13}"]
    for t in tasks:
        d = (full.success.get(t, np.nan) - ablated.success.get(t, np.nan))
        lines.append(f"{t:<{w}}  {cell(full, t):>16}  {cell(ablated, t):>18}  {d:>+13.2f}")
    for label, a, b in (
        ("train average", (full.train_success, full.train_following), (ablated.train_success, ablated.train_following)),
        ("novel average", (full.novel_success, full.novel_following), (ablated.novel_success, ablated.novel_following)),
    ):
        if a[0] is None:
            continue
        fa = f"{a[0]:.2f} / {a[1]:.2f}" if a[1] is not None else f"{a[0]:.2f} / -"
        fb = f"{b[0]:.2f} / {b[1]:.2f}" if b[1] is not None else f"{b[0]:.2f} / -"
        lines.append(f"{label:<{w}}  {fa:>16}  {fb:>18}  {a[0] - b[0]:>+13.2f}")
    return "\n".join(lines)


def ablation_report(full_reports: list[MetricsReport], ablated_reports: list[MetricsReport],
                    full_configs: list[dict] | None = None, ablated_configs: list[dict] | None = None) -> dict:
    """Average each arm over its seeds and tabulate per-task deltas."""
    if not full_reports or not ablated_reports:
        raise ValueError("each arm needs at least one report")
    for a, b in zip(full_configs or [], ablated_configs or []):
        check_ablation_pair(a, b)
    full, abl = MetricsReport.mean(full_reports), MetricsReport.mean(ablated_reports)
    tasks = sorted(set(full.success) | set(abl.success))
    deltas = {
        t: {
            "success": full.success.get(t, np.nan) - abl.success.get(t, np.nan),
            "following": (
                full.following[t] - abl.following[t]
                if full.following.get(t) is not None and abl.following.get(t) is not None
                else None
            ),
        }
        for t in tasks
    }
    return {
        "full": full.to_json(),
        "no_prompt": abl.to_json(),
        "per_seed": {"full": [r.to_json() for r in full_reports], "no_prompt": [r.to_json() for r in ablated_reports]},
        "deltas": deltas,
        "average_delta": {
            "train_success": _sub(full.train_success, abl.train_success),
            "train_following": _sub(full.train_following, abl.train_following),
            "novel_success": _sub(full.novel_success, abl.novel_success),
            "novel_following": _sub(full.novel_following, abl.novel_following),
        },
        "table": format_table(full, abl),
        "meta": {"rouge_variant": "ROUGE-L F1", "seeds": len(full_reports)},
    }


def _sub(a, b):
    return None if a is None or b is None else a - b


def write_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=1))
