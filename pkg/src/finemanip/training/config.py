"""Versioned training configuration."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

from ..models.config import ModelConfig

CONFIG_VERSION = 1
SUPERVISED_TERMS = ("sel", "bce", "move", "rot", "open", "collide")
PROMPT_TERMS = ("mm", "verb", "noun", "aff")
LOSS_TERMS = SUPERVISED_TERMS + PROMPT_TERMS


@dataclass
class TrainConfig:
    seed: int = 0
    feature_dim: int = 128
    batch_size: int = 16
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    grad_clip: float = 1.0
    epochs: int = 40
    w_sel: float = 1.0
    w_bce: float = 1.0
    w_move: float = 1.0
    w_rot: float = 1.0
    w_open: float = 1.0
    w_collide: float = 1.0
    lambda_mm: float = 0.1
    lambda_verb: float = 0.1
    lambda_noun: float = 0.1
    lambda_aff: float = 0.1
    sigma: float = 0.02
    tau: float = 0.07
    tau_sel: float = 0.1
    eps_vel: float = 1e-3
    prompt_enabled: bool = True
    detach_prompts: bool = False
    model: dict = field(default_factory=dict)  # remaining ModelConfig fields
    version: int = CONFIG_VERSION

    def __post_init__(self):
        for name in self.weight_names():
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not self.prompt_enabled:
            for t in PROMPT_TERMS:
                setattr(self, f"lambda_{t}", 0.0)

    @staticmethod
    def weight_names() -> list[str]:
        return [f"w_{t}" for t in SUPERVISED_TERMS] + [f"lambda_{t}" for t in PROMPT_TERMS]

    def term_weights(self) -> dict[str, float]:
        out = {t: getattr(self, f"w_{t}") for t in SUPERVISED_TERMS}
        out.update({t: getattr(self, f"lambda_{t}") for t in PROMPT_TERMS})
        return out

    def model_config(self) -> ModelConfig:
        return ModelConfig.from_json(
            {**self.model, "feature_dim": self.feature_dim, "tau_sel": self.tau_sel, "prompt_enabled": self.prompt_enabled}
        )

    def with_prompts(self, enabled: bool) -> "TrainConfig":
        d = self.to_json()
        d["prompt_enabled"] = enabled
        if enabled:
            default = TrainConfig()
            for t in PROMPT_TERMS:
                d[f"lambda_{t}"] = getattr(default, f"lambda_{t}") if d[f"lambda_{t}"] == 0 else d[f"lambda_{t}"]
        return TrainConfig.from_json(d)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path=None) -> "TrainConfig":
        if path is None:
            text = (resources.files("finemanip") / "configs" / "default.json").read_text()
        else:
            text = Path(path).read_text()
        return cls.from_json(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()[:16]

    def replace(self, **kw) -> "TrainConfig":
        return replace(self, **kw)
