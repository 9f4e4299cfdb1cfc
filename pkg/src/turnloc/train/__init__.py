from .augment import AugmentConfig, augment
from .optim import AdamW
from .loop import DialogAugmentConfig, TrainConfig, TrainResult, train
from .sweep import AXES, SweepRow, sweep, sweep_text

__all__ = [
    "AugmentConfig",
    "augment",
    "AdamW",
    "DialogAugmentConfig",
    "TrainConfig",
    "TrainResult",
    "train",
    "AXES",
    "SweepRow",
    "sweep",
    "sweep_text",
]
