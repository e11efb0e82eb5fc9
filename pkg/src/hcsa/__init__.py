"""Hierarchical convolutional self-attention encoder-decoder for long-form video QA."""

from .config import HCSAConfig, RunConfig, SyntheticTaskConfig, TrainConfig
from .model import HCSA, count_params
from .params import ModelParams
from .tensor import Tensor, backward, no_grad

__all__ = [
    "HCSA",
    "HCSAConfig",
    "ModelParams",
    "RunConfig",
    "SyntheticTaskConfig",
    "Tensor",
    "TrainConfig",
    "backward",
    "count_params",
    "no_grad",
]

__version__ = "0.1.0"
