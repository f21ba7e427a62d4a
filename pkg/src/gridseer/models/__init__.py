"""From-scratch regression and forecasting models."""

from .lstm import LstmParams, init_lstm, lstm_forward, lstm_loss_grad, lstm_predict, make_windows
from .metrics import Metrics, evaluate, mae, mse, r2
from .mlp import MlpParams, init_mlp, mlp_forward, mlp_loss_grad, mlp_predict
from .normalize import NormStats, denormalize, normalize_apply, normalize_fit
from .training import MomentumGD, Params, PlainGD, TrainConfig, grad_check, loss_grad, predict, train

__all__ = [
    "LstmParams",
    "Metrics",
    "MlpParams",
    "MomentumGD",
    "NormStats",
    "Params",
    "PlainGD",
    "TrainConfig",
    "denormalize",
    "evaluate",
    "grad_check",
    "init_lstm",
    "init_mlp",
    "loss_grad",
    "lstm_forward",
    "lstm_loss_grad",
    "lstm_predict",
    "mae",
    "make_windows",
    "mlp_forward",
    "mlp_loss_grad",
    "mlp_predict",
    "mse",
    "normalize_apply",
    "normalize_fit",
    "predict",
    "r2",
    "train",
]
