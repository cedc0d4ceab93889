"""From-scratch GRU forecaster: cell math, BPTT, Adam and the training loop."""

from .cell import backprop_window, cell_forward, forward_window, loss_mse
from .kernels import BACKEND
from .params import PARAM_NAMES, GruParams, init_params
from .training import (
    AdamState,
    GruModel,
    TrainConfig,
    TrainHistory,
    adam_step,
    load_model,
    save_model,
    train,
)

__all__ = [
    "AdamState", "BACKEND", "GruModel", "GruParams", "PARAM_NAMES", "TrainConfig",
    "TrainHistory", "adam_step", "backprop_window", "cell_forward", "forward_window",
    "init_params", "load_model", "loss_mse", "save_model", "train",
]
