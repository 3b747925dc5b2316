from .config import LOSS_TERMS, PROMPT_TERMS, SUPERVISED_TERMS, TrainConfig
from .objective import LossReport, total_loss
from .trainer import TrainResult, build_network, make_optimizer, set_deterministic, train, train_step

__all__ = [
    "LOSS_TERMS",
    "PROMPT_TERMS",
    "SUPERVISED_TERMS",
    "TrainConfig",
    "LossReport",
    "total_loss",
    "TrainResult",
    "build_network",
    "make_optimizer",
    "set_deterministic",
    "train",
    "train_step",
]
