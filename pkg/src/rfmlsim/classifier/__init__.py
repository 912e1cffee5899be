from .network import (
    ModelConfig,
    ModelParams,
    forward,
    init_params,
    input_gradient,
    input_gradient_sign_batches,
    loss,
    loss_and_input_gradient,
    loss_and_param_gradients,
    predict_top1,
)
from .persist import load_params, save_params
from .training import Adam, TrainConfig, evaluate, train

__all__ = [
    "Adam",
    "ModelConfig",
    "ModelParams",
    "TrainConfig",
    "evaluate",
    "forward",
    "init_params",
    "input_gradient",
    "input_gradient_sign_batches",
    "load_params",
    "loss",
    "loss_and_input_gradient",
    "loss_and_param_gradients",
    "predict_top1",
    "save_params",
    "train",
]
