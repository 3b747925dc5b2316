"""Per-task train/val/test splits with held-out novel tasks."""
from __future__ import annotations

import json
import zlib
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import InsufficientDataError

RATIO = (10, 1, 1)


@dataclass
class DatasetSplit:
    train: list[str]
    val: list[str]
    test: list[str]
    novel_tasks: set[str] = field(default_factory=set)

    def __post_init__(self):
        a, b, c = set(self.train), set(self.val), set(self.test)
        if a & b or a & c or b & c:
            raise ValueError("splits must be disjoint")

    def to_json(self) -> dict:
        return {"train": self.train, "val": self.val, "test": self.test, "novel_tasks": sorted(self.novel_tasks)}

    @classmethod
    def from_json(cls, d: dict) -> "DatasetSplit":
        return cls(list(d["train"]), list(d["val"]), list(d["test"]), set(d.get("novel_tasks", [])))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path) -> "DatasetSplit":
        return cls.from_json(json.loads(Path(path).read_text()))


def _ids_and_task(ep):
    if isinstance(ep, tuple):
        return ep
    return ep.episode_id, ep.task


def make_splits(episodes, novel_tasks, seed: int) -> DatasetSplit:
    """Split episodes (objects or ``(episode_id, task)`` pairs).

    Each non-novel task is shuffled with its own seeded stream and divided
    10:1:1; novel-task episodes go half to validation and half to test.
    """
    novel = set(novel_tasks)
    by_task: dict[str, list[str]] = defaultdict(list)
    for ep in episodes:
        eid, task = _ids_and_task(ep)
        by_task[task].append(eid)
    missing = novel - set(by_task)
    if missing:
        raise InsufficientDataError(f"novel tasks without episodes: {sorted(missing)}")
    train, val, test = [], [], []
    for task in sorted(by_task):
        ids = sorted(by_task[task])
        order = np.random.default_rng([int(seed), zlib.crc32(task.encode())]).permutation(len(ids))
        ids = [ids[i] for i in order]
        if task in novel:
            half = (len(ids) + 1) // 2
            val += ids[:half]
            test += ids[half:]
            continue
        if len(ids) < sum(RATIO):
            raise InsufficientDataError(f"task {task!r} has {len(ids)} episodes, need at least {sum(RATIO)}")
        k = len(ids) // sum(RATIO)
        n_val, n_test = k * RATIO[1], k * RATIO[2]
        n_train = len(ids) - n_val - n_test
        train += ids[:n_train]
        val += ids[n_train : n_train + n_val]
        test += ids[n_train + n_val :]
    return DatasetSplit(train, val, test, novel)
