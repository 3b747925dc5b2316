from .episodes import (
    DEFAULT_EPS_VEL,
    Episode,
    InstructionSet,
    Keyframe,
    Step,
    episode_id,
    extract_keyframes,
    generate_instructions,
    keyframe_indices,
    record_episode,
)
from .splits import DatasetSplit, make_splits
from .storage import load_dataset, load_episode, save_dataset, save_episode

__all__ = [
    "DEFAULT_EPS_VEL",
    "Episode",
    "InstructionSet",
    "Keyframe",
    "Step",
    "episode_id",
    "extract_keyframes",
    "generate_instructions",
    "keyframe_indices",
    "record_episode",
    "DatasetSplit",
    "make_splits",
    "load_dataset",
    "load_episode",
    "save_dataset",
    "save_episode",
]
