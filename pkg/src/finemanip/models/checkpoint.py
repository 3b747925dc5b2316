"""Checkpoint container: named little-endian float32 arrays plus a JSON manifest."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import torch

from ..errors import CheckpointError
from .config import ModelConfig
from .network import FineManipNet
from .vocab import Vocabulary

WEIGHTS_NAME = "weights.npz"
MANIFEST_NAME = "manifest.json"
FORMAT_VERSION = 1


def _config_hash(d: dict) -> str:
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def save_checkpoint(net: FineManipNet, directory, train_config: dict | None = None, extra: dict | None = None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    arrays = {k: v.detach().cpu().numpy().astype("<f4") for k, v in net.state_dict().items()}
    with open(d / WEIGHTS_NAME, "wb") as fh:
        np.savez(fh, **arrays)
    model_cfg = net.cfg.to_json()
    manifest = {
        "format_version": FORMAT_VERSION,
        "dims": {"feature_dim": net.cfg.feature_dim, "token_dim": net.cfg.token_dim, "vocab_size": len(net.vocab)},
        "vocab": net.vocab.itos,
        "vocab_hash": net.vocab.digest(),
        "model_config": model_cfg,
        "config_hash": _config_hash(train_config or model_cfg),
        "train_config": train_config,
        "parameters": {k: list(v.shape) for k, v in arrays.items()},
    }
    if extra:
        manifest.update(extra)
    (d / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1))
    return d


def read_manifest(directory) -> dict:
    path = Path(directory) / MANIFEST_NAME
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"cannot read checkpoint manifest {path}: {e}") from e


def load_checkpoint(directory) -> tuple[FineManipNet, dict]:
    d = Path(directory)
    manifest = read_manifest(d)
    vocab = Vocabulary(manifest["vocab"])
    if vocab.digest() != manifest["vocab_hash"]:
        raise CheckpointError("vocabulary hash mismatch")
    net = FineManipNet(ModelConfig.from_json(manifest["model_config"]), vocab)
    try:
        with np.load(d / WEIGHTS_NAME) as z:
            state = {k: torch.from_numpy(z[k].astype(np.float32)) for k in z.files}
    except OSError as e:
        raise CheckpointError(f"cannot read weights in {d}: {e}") from e
    missing = set(net.state_dict()) ^ set(state)
    if missing:
        raise CheckpointError(f"parameter names differ from the architecture: {sorted(missing)[:5]}")
    net.load_state_dict(state)
    net.eval()
    return net, manifest
