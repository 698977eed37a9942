"""Minimal reverse-mode differentiation engine."""

from .ops import (
    BatchNormState,
    DftBasis,
    batchnorm1d,
    bce_logit_loss,
    concat_channels,
    conv1d,
    conv_transpose1d,
    flatten,
    framed_band_energy,
    leaky_relu,
    linear,
    make_dft_basis,
    mse_loss,
    prelu,
    tanh,
)
from .optim import RmspropState, rmsprop_step
from .tensor import Tape, Tensor, active_tape, backward, is_grad_enabled, no_grad, record

__all__ = [
    "BatchNormState",
    "DftBasis",
    "Tape",
    "Tensor",
    "RmspropState",
    "active_tape",
    "backward",
    "batchnorm1d",
    "bce_logit_loss",
    "concat_channels",
    "conv1d",
    "conv_transpose1d",
    "flatten",
    "framed_band_energy",
    "is_grad_enabled",
    "leaky_relu",
    "linear",
    "make_dft_basis",
    "mse_loss",
    "no_grad",
    "prelu",
    "record",
    "rmsprop_step",
    "tanh",
]
