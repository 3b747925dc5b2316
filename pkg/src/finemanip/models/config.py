"""Architecture hyperparameters shared by every network."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields


@dataclass
class ModelConfig:
    feature_dim: int = 128
    token_dim: int = 64
    prompt_length: int = 20
    text_layers: int = 2
    text_heads: int = 4
    max_tokens: int = 32
    state_hidden: int = 64
    # set abstraction: (centers, radius m, neighbours)
    sa1_centers: int = 512
    sa1_radius: float = 0.08
    sa1_nsample: int = 16
    sa2_centers: int = 128
    sa2_radius: float = 0.2
    sa2_nsample: int = 32
    hidden: int = 128
    tau_sel: float = 0.1
    soft_prompt_high_level: bool = False  # route high-level text through the soft prompt too
    prompt_enabled: bool = True

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def tiny(cls, **kw) -> "ModelConfig":
        """Small model for gradient checks and fast tests."""
        base = dict(
            feature_dim=8, token_dim=8, prompt_length=20, text_layers=1, text_heads=2, state_hidden=8,
            sa1_centers=16, sa1_radius=0.3, sa1_nsample=4, sa2_centers=8, sa2_radius=0.6, sa2_nsample=4, hidden=8,
        )
        base.update(kw)
        return cls(**base)
