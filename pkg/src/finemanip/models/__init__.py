from .checkpoint import load_checkpoint, save_checkpoint
from .config import ModelConfig
from .network import FineManipNet, GroupingCache, PreparedStep, prepare_steps
from .vocab import Vocabulary

__all__ = [
    "load_checkpoint",
    "save_checkpoint",
    "ModelConfig",
    "FineManipNet",
    "GroupingCache",
    "PreparedStep",
    "prepare_steps",
    "Vocabulary",
]
