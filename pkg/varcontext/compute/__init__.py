"""Differentiable compute core: tensors, operations, parameters, optimizer."""
from .tensor import Tensor
from .ops import (fc, exp, log, tanh, sigmoid, log_sigmoid, clamp_min, max_select, concat, stack,
                  softmax, log_softmax, l2norm, dropout, lstm_step, EPS)
from .parameters import Parameter, ParameterStore, xavier_uniform
from .optim import SGDMomentum, sgd_momentum_step, clip_grad_norm, global_grad_norm
from .schedule import lr_at, scaled_decay_interval
from .gradcheck import GradReport, grad_check

__all__ = [
    "Tensor", "Parameter", "ParameterStore", "xavier_uniform",
    "fc", "exp", "log", "tanh", "sigmoid", "log_sigmoid", "clamp_min", "max_select",
    "concat", "stack", "softmax", "log_softmax", "l2norm", "dropout", "lstm_step", "EPS",
    "SGDMomentum", "sgd_momentum_step", "clip_grad_norm", "global_grad_norm", "lr_at", "scaled_decay_interval",
    "GradReport", "grad_check",
]
