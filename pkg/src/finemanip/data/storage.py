"""Episode directories: ``meta.json`` header plus a raw ``frames.bin`` payload."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from ..errors import ChecksumMismatchError, CorruptHeaderError, TruncatedDataError
from ..types import GripperAction
from .episodes import Episode, InstructionSet, Step

META_NAME = "meta.json"
FRAMES_NAME = "frames.bin"
FORMAT_VERSION = 1
_REQUIRED = ("episode_id", "task", "variation", "seed", "n_points", "n_steps", "high_level", "steps", "sha256", "n_bytes")
_DTYPE = np.dtype("<f4")


def _step_floats(n_points: int) -> int:
    return n_points * 3 + 4


def save_episode(ep: Episode, directory) -> Path:
    """Write ``ep`` to ``directory`` (created if needed) and return the path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    n = ep.n_points
    chunks = []
    for s in ep.steps:
        if s.observation.shape != (n, 3):
            raise ValueError("all step observations must share n_points")
        chunks.append(np.asarray(s.observation, dtype=_DTYPE).ravel())
        chunks.append(np.asarray(s.agent_state, dtype=_DTYPE).ravel())
    payload = np.concatenate(chunks).astype(_DTYPE).tobytes()
    meta = {
        "format_version": FORMAT_VERSION,
        "episode_id": ep.episode_id,
        "task": ep.task,
        "variation": int(ep.variation),
        "seed": int(ep.seed),
        "n_points": n,
        "n_steps": len(ep.steps),
        "high_level": ep.instruction_set.high_level,
        "template_ids": [int(t) for t in ep.instruction_set.template_ids],
        "steps": [
            {
                "instruction": s.instruction,
                "action": s.action.to_json(),
                "verb": s.verb,
                "noun": s.noun,
                "contact": [float(v) for v in s.contact],
            }
            for s in ep.steps
        ],
        "n_bytes": len(payload),
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    (d / FRAMES_NAME).write_bytes(payload)
    (d / META_NAME).write_text(json.dumps(meta, indent=1))
    return d


def _read_meta(d: Path) -> dict:
    try:
        meta = json.loads((d / META_NAME).read_text())
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptHeaderError(f"{d / META_NAME}: unreadable header ({e})") from e
    if not isinstance(meta, dict) or any(k not in meta for k in _REQUIRED):
        raise CorruptHeaderError(f"{d / META_NAME}: missing header fields")
    if len(meta["steps"]) != meta["n_steps"]:
        raise CorruptHeaderError(f"{d / META_NAME}: n_steps disagrees with the step list")
    return meta


def load_episode(directory) -> Episode:
    """Inverse of :func:`save_episode`.

    Raises CorruptHeaderError for an unreadable or incomplete header,
    TruncatedDataError when ``frames.bin`` is shorter or longer than recorded, and
    ChecksumMismatchError when the payload hash or its layout does not match.
    """
    d = Path(directory)
    meta = _read_meta(d)
    try:
        payload = (d / FRAMES_NAME).read_bytes()
    except OSError as e:
        raise TruncatedDataError(f"{d / FRAMES_NAME}: missing payload") from e
    if len(payload) != meta["n_bytes"]:
        raise TruncatedDataError(f"{d / FRAMES_NAME}: {len(payload)} bytes, header records {meta['n_bytes']}")
    if hashlib.sha256(payload).hexdigest() != meta["sha256"]:
        raise ChecksumMismatchError(f"{d / FRAMES_NAME}: sha256 mismatch")
    n, k = int(meta["n_points"]), int(meta["n_steps"])
    if k * _step_floats(n) * _DTYPE.itemsize != len(payload):
        raise ChecksumMismatchError(f"{d}: n_points={n}, n_steps={k} inconsistent with payload length")
    flat = np.frombuffer(payload, dtype=_DTYPE).reshape(k, _step_floats(n))
    steps = []
    for row, sm in zip(flat, meta["steps"]):
        steps.append(
            Step(
                observation=row[: n * 3].reshape(n, 3).astype(np.float32),
                agent_state=row[n * 3 :].astype(np.float32),
                action=GripperAction.from_json(sm["action"]),
                instruction=sm["instruction"],
                verb=sm["verb"],
                noun=sm["noun"],
                contact=np.asarray(sm.get("contact", sm["action"]["position"]), dtype=np.float64),
            )
        )
    instr = InstructionSet(meta["high_level"], [s.instruction for s in steps], list(meta.get("template_ids", [])))
    return Episode(meta["episode_id"], meta["task"], int(meta["variation"]), int(meta["seed"]), steps, instr)


def save_dataset(episodes, root) -> list[Path]:
    root = Path(root)
    return [save_episode(ep, root / ep.episode_id) for ep in episodes]


def load_dataset(root) -> list[Episode]:
    """Load every episode directory under ``root`` in sorted order."""
    root = Path(root)
    return [load_episode(p.parent) for p in sorted(root.glob(f"*/{META_NAME}"))]
