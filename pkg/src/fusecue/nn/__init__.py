from .checkpoint import latest_checkpoint, load_checkpoint, save_checkpoint
from .model import (
    DEFAULT_WIDTHS,
    RGB_ONLY,
    Detector,
    InputAssembly,
    TinyBackbone,
    assemble_input,
    assembled_param_delta,
    count_params,
)
from .optim import AdamConfig, AdamState, adam_step, bce_loss
from .train import FrameSet, TrainConfig, predict, train

__all__ = [
    "DEFAULT_WIDTHS",
    "RGB_ONLY",
    "AdamConfig",
    "AdamState",
    "Detector",
    "FrameSet",
    "InputAssembly",
    "TinyBackbone",
    "TrainConfig",
    "adam_step",
    "assemble_input",
    "assembled_param_delta",
    "bce_loss",
    "count_params",
    "latest_checkpoint",
    "load_checkpoint",
    "predict",
    "save_checkpoint",
    "train",
]
