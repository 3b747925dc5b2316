"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 runtime error. Every command prints a
JSON summary on stdout when it succeeds.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

log = logging.getLogger("finemanip")

COMMANDS = ("gen-data", "build-prompts", "train", "eval", "metrics-text", "plot")
EVAL_SEED_BASE = 100_000


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- helpers


def _task_list(spec: str) -> list[str]:
    from .sim.tasks import ALL_TASKS, NOVEL_TASKS, TRAIN_TASKS

    groups = {"train": list(TRAIN_TASKS), "novel": list(NOVEL_TASKS), "all": list(ALL_TASKS)}
    out: list[str] = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        for t in groups.get(part, [part]):
            if t not in out:
                out.append(t)
    unknown = [t for t in out if t not in ALL_TASKS]
    if unknown:
        raise UsageError(f"unknown tasks: {unknown}")
    return out


def _record_one(job):
    from .data import record_episode, save_episode
    from .sim.tasks import load_task

    task, variation, seed, n_points, eps_vel, out = job
    spec = load_task(task).with_variation(variation)
    ep = record_episode(spec, seed, eps_vel=eps_vel, n_points=n_points)
    save_episode(ep, Path(out) / ep.episode_id)
    return ep.episode_id, ep.task, len(ep.steps)


def episode_jobs(tasks, per_task: int, seed: int, n_points: int, eps_vel: float, out) -> list[tuple]:
    from .sim.tasks import load_task

    jobs = []
    for task in tasks:
        n_var = max(1, len(load_task(task).variations))
        for i in range(per_task):
            jobs.append((task, i % n_var, seed * EVAL_SEED_BASE + i, n_points, eps_vel, str(out)))
    return jobs


def _load_split(data: Path, split_path=None):
    from .data import DatasetSplit

    p = Path(split_path) if split_path else data / "split.json"
    if not p.exists():
        raise FileNotFoundError(f"split file {p} not found (run gen-data first)")
    return DatasetSplit.load(p)


def _resolve_runs(ckpt: Path, n: int | None, which: str) -> list[Path]:
    """A checkpoint dir, a run dir (holding last/ and best/), or a parent of seed-* runs."""
    if (ckpt / "manifest.json").exists():
        return [ckpt]
    if (ckpt / which / "manifest.json").exists():
        return [ckpt / which]
    runs = sorted(p for p in ckpt.glob("seed-*") if (p / which / "manifest.json").exists())
    if not runs:
        raise FileNotFoundError(f"no checkpoint found under {ckpt}")
    return [r / which for r in runs[: n or len(runs)]]


def _prompt_base_for(ckpt: Path, manifest: dict, prompt_data=None):
    """Prompt base saved next to a checkpoint, resolved against its training data."""
    from .data import load_dataset
    from .prompts import load_prompt_bases

    if not manifest["model_config"].get("prompt_enabled", False):
        return None
    index = None
    for p in (ckpt / "prompts.json", ckpt.parent / "prompts.json"):
        if p.exists():
            index = p
            break
    if index is None:
        raise FileNotFoundError(f"no prompts.json next to {ckpt}")
    data = Path(prompt_data or manifest.get("data_dir", ""))
    return load_prompt_bases(index, load_dataset(data))


def _eval_run(job):
    from .data import load_dataset
    from .evaluation import evaluate_network
    from .models import load_checkpoint
    from .training.trainer import set_deterministic

    ckpt, data, per_task, prompt_data = job
    set_deterministic(0)
    net, manifest = load_checkpoint(ckpt)
    eps = _select_eval_episodes(load_dataset(data), per_task)
    base = _prompt_base_for(Path(ckpt), manifest, prompt_data)
    report, results = evaluate_network(net, eps, base)
    report.meta.update({"checkpoint": str(ckpt), "config_hash": manifest.get("config_hash")})
    return report.to_json(), manifest.get("train_config"), [r.to_json() for r in results]


def _select_eval_episodes(episodes, per_task: int | None):
    by_task: dict = {}
    for ep in sorted(episodes, key=lambda e: (e.task, e.seed)):
        by_task.setdefault(ep.task, []).append(ep)
    out = []
    for task in sorted(by_task):
        out += by_task[task][: per_task or None]
    return out


# ---------------------------------------------------------------- commands


def cmd_gen_data(args) -> dict:
    from .data import make_splits
    from .sim.tasks import NOVEL_TASKS

    tasks = _task_list(args.tasks)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    jobs = episode_jobs(tasks, args.episodes_per_task, args.seed, args.n_points, args.eps_vel, out)
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            done = list(pool.map(_record_one, jobs, chunksize=4))
    else:
        done = [_record_one(j) for j in jobs]
    summary = {"command": "gen-data", "out": str(out), "episodes": len(done), "steps": sum(d[2] for d in done)}
    novel = {t for t in tasks if t in NOVEL_TASKS}
    if not args.no_split:
        split = make_splits([(d[0], d[1]) for d in done], novel, args.seed)
        split.save(out / "split.json")
        summary.update({"train": len(split.train), "val": len(split.val), "test": len(split.test)})
    return summary


def cmd_build_prompts(args) -> dict:
    from .data import load_dataset
    from .prompts import build_prompt_bases

    data = Path(args.data)
    split = _load_split(data, args.split)
    train_ids = set(split.train)
    eps = [ep for ep in load_dataset(data) if ep.episode_id in train_ids]
    base = build_prompt_bases(eps, split)
    base.save(args.out)
    return {
        "command": "build-prompts",
        "out": str(args.out),
        "episodes": len(eps),
        "nouns": {k: len(v) for k, v in sorted(base.perception.items())},
        "verbs": {k: len(v) for k, v in sorted(base.action.items())},
    }


def cmd_train(args) -> dict:
    from .data import load_dataset
    from .errors import SplitLeakageError
    from .prompts import load_prompt_bases
    from .training import TrainConfig, train

    cfg = TrainConfig.load(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if overrides:
        cfg = TrainConfig.from_json({**cfg.to_json(), **overrides})
    if args.no_prompt:
        cfg = cfg.with_prompts(False)
    data = Path(args.data).resolve()
    split = _load_split(data, args.split)
    episodes = {ep.episode_id: ep for ep in load_dataset(data)}
    train_eps = [episodes[i] for i in split.train]
    val_eps = [episodes[i] for i in split.val if episodes[i].task not in split.novel_tasks]
    base = None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.prompt_enabled:
        if not args.prompts:
            raise FileNotFoundError("--prompts is required unless --no-prompt is given")
        base = load_prompt_bases(args.prompts, episodes)
        leaked = base.episode_ids() - set(split.train)
        if leaked:
            raise SplitLeakageError(f"prompt base references non-training episodes: {sorted(leaked)[:5]}")
        base.save(out / "prompts.json")
    result = train(
        cfg, train_eps, base, val_eps, out_dir=out, checkpoint_every_epoch=not args.no_epoch_checkpoints,
        extra_manifest={"data_dir": str(data)},
    )
    return {
        "command": "train",
        "out": str(out),
        "epochs": len(result.history),
        "final_train_total": result.history[-1]["train_total"],
        "best_epoch": result.best_epoch,
        "best_val": result.best_val if result.best_epoch >= 0 else None,
        "prompt_enabled": cfg.prompt_enabled,
    }


def _run_evals(ckpt: Path, args) -> list:
    runs = _resolve_runs(ckpt, args.seeds, args.which)
    jobs = [(str(r), args.data, args.episodes_per_task, args.prompt_data) for r in runs]
    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(min(args.workers, len(jobs))) as pool:
            return list(pool.map(_eval_run, jobs))
    return [_eval_run(j) for j in jobs]


def cmd_eval(args) -> dict:
    from .evaluation import MetricsReport, ablation_report

    full = _run_evals(Path(args.ckpt), args)
    reports = [MetricsReport.from_json(r[0]) for r in full]
    if args.compare:
        other = _run_evals(Path(args.compare), args)
        rep = ablation_report(
            reports, [MetricsReport.from_json(r[0]) for r in other], [r[1] for r in full], [r[1] for r in other]
        )
        rep["meta"]["runs"] = {
            arm: [{k: (r[1] or {}).get(k) for k in ("seed", "epochs", "prompt_enabled")} for r in results]
            for arm, results in (("full", full), ("no_prompt", other))
        }
    else:
        mean = MetricsReport.mean(reports)
        rep = {"report": mean.to_json(), "per_seed": [r.to_json() for r in reports]}
    if args.rollouts:
        rep["rollouts"] = [r[2] for r in full]
    Path(args.out).write_text(json.dumps(rep, indent=1))
    summary = {"command": "eval", "out": str(args.out), "runs": len(full)}
    if args.compare:
        summary.update(
            {
                "full_train_success": rep["full"]["train_success"],
                "no_prompt_train_success": rep["no_prompt"]["train_success"],
                "full_train_following": rep["full"]["train_following"],
            }
        )
        print(rep["table"], file=sys.stderr)
    else:
        summary.update({"train_success": rep["report"]["train_success"], "train_following": rep["report"]["train_following"]})
    return summary


def cmd_metrics_text(args) -> dict:
    from .evaluation import corpus_text_metrics

    cands = Path(args.candidates).read_text().splitlines()
    refs = Path(args.references).read_text().splitlines()
    out = corpus_text_metrics(cands, refs)
    out["command"] = "metrics-text"
    return out


def cmd_plot(args) -> dict:
    import torch

    from .data import load_episode
    from .evaluation.rollout import PromptFeatureCache
    from .language import parse_verb_noun
    from .models import GroupingCache, load_checkpoint, prepare_steps
    from .models.policy import select_contact_point
    from .plotting import plot_affordance_heatmap

    ckpt = _resolve_runs(Path(args.ckpt), 1, args.which)[0]
    net, manifest = load_checkpoint(ckpt)
    ep = load_episode(args.episode)
    if not 0 <= args.step < len(ep.steps):
        raise IndexError(f"episode has {len(ep.steps)} steps")
    step = prepare_steps([ep], GroupingCache(net.cfg))[args.step]
    p_aff = p_act = None
    if net.cfg.prompt_enabled:
        cache = PromptFeatureCache(net, _prompt_base_for(ckpt, manifest, args.prompt_data))
        verb, noun = parse_verb_noun(step.instructions[step.step])
        a, b = cache(verb, noun)
        p_aff, p_act = a[None], b[None]
    with torch.no_grad():
        out = net.forward_steps([step], p_aff, p_act, hard=True, contact_index=[step.contact_index])
    scores = out["affordance"][0].double().numpy()
    _, idx = select_contact_point(scores, step.cloud)
    path = plot_affordance_heatmap(step.cloud, scores, args.out, contact_index=idx)
    return {"command": "plot", "out": str(path), "contact_index": idx, "max_score": float(scores.max())}


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--config", default=None, help="training config JSON (default: shipped config)")
    common.add_argument("--log-level", default="WARNING", help="logging level")

    p = _Parser(prog="finemanip", description="Language-conditioned keyframe manipulation pipeline.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen-data", parents=[common], help="record expert episodes")
    g.add_argument("--tasks", default="all", help="comma list of task names or train/novel/all")
    g.add_argument("--episodes-per-task", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--n-points", type=int, default=1024)
    g.add_argument("--eps-vel", type=float, default=1e-3)
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--no-split", action="store_true", help="do not write split.json")

    b = sub.add_parser("build-prompts", parents=[common], help="build the prompt bases from the train split")
    b.add_argument("--data", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--split", default=None)

    t = sub.add_parser("train", parents=[common], help="train a policy")
    t.add_argument("--data", required=True)
    t.add_argument("--prompts", default=None)
    t.add_argument("--out", required=True)
    t.add_argument("--no-prompt", action="store_true", help="train the ablation without prompts")
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--split", default=None)
    t.add_argument("--no-epoch-checkpoints", action="store_true")

    e = sub.add_parser("eval", parents=[common], help="closed-loop evaluation")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True, help="directory of evaluation episodes")
    e.add_argument("--episodes-per-task", type=int, default=25)
    e.add_argument("--seeds", type=int, default=3, help="number of seed-* runs to average")
    e.add_argument("--out", required=True)
    e.add_argument("--compare", default=None, help="ablation checkpoint(s) to compare against")
    e.add_argument("--which", default="last", choices=("last", "best"))
    e.add_argument("--prompt-data", default=None, help="training data directory for prompt entries")
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--rollouts", action="store_true", help="include per-step rollout records")

    m = sub.add_parser("metrics-text", parents=[common], help="BLEU / ROUGE-L of line-aligned files")
    m.add_argument("--candidates", required=True)
    m.add_argument("--references", required=True)

    pl = sub.add_parser("plot", parents=[common], help="affordance heatmap PNG for one episode step")
    pl.add_argument("--ckpt", required=True)
    pl.add_argument("--episode", required=True, help="episode directory")
    pl.add_argument("--step", type=int, default=0)
    pl.add_argument("--out", required=True)
    pl.add_argument("--which", default="last", choices=("last", "best"))
    pl.add_argument("--prompt-data", default=None)
    return p


HANDLERS = {
    "gen-data": cmd_gen_data,
    "build-prompts": cmd_build_prompts,
    "train": cmd_train,
    "eval": cmd_eval,
    "metrics-text": cmd_metrics_text,
    "plot": cmd_plot,
}


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return int(e.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "gen-data" and args.seed is None:
        args.seed = 0
    try:
        summary = HANDLERS[args.command](args)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return 1
    except Exception as e:  # runtime failure: report and exit 2
        print(f"finemanip {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    print(json.dumps(summary, sort_keys=True))
    return 0


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
