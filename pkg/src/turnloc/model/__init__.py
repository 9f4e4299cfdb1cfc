from .config import VARIANTS, ModelConfig
from .layers import Module
from .localizer import BeliefState, Localizer, predict_location
from .baseline import ConvBaseline, build_model
from .checkpoint import CheckpointError, load_model, read_checkpoint, save_checkpoint

__all__ = [
    "VARIANTS",
    "ModelConfig",
    "Module",
    "BeliefState",
    "Localizer",
    "predict_location",
    "ConvBaseline",
    "build_model",
    "CheckpointError",
    "load_model",
    "read_checkpoint",
    "save_checkpoint",
]
