"""RMSprop parameter updates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatchError
from .tensor import Tensor


@dataclass
class RmspropState:
    """Per-parameter running mean-square accumulators plus step size."""

    lr: float
    rho: float = 0.99
    eps: float = 1e-8
    square_avg: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[Tensor], lr: float, rho: float = 0.99, eps: float = 1e-8):
        return cls(lr=lr, rho=rho, eps=eps, square_avg=[np.zeros_like(p.data) for p in params])


def rmsprop_step(
    params: list[Tensor], grads: list[np.ndarray | None], state: RmspropState
) -> None:
    """acc <- rho*acc + (1-rho)*g^2;  p <- p - lr*g/(sqrt(acc) + eps).

    A None gradient decays its accumulator and leaves the parameter alone.
    Updates happen in place on the parameter tensors and the state.
    """
    if len(params) != len(grads) or len(params) != len(state.square_avg):
        raise ShapeMismatchError(
            f"got {len(params)} params, {len(grads)} grads, {len(state.square_avg)} accumulators"
        )
    for p, g, acc in zip(params, grads, state.square_avg):
        if acc.shape != p.data.shape:
            raise ShapeMismatchError(f"accumulator {acc.shape} does not match param {p.shape}")
        acc *= state.rho
        if g is None:
            continue
        if g.shape != p.data.shape:
            raise ShapeMismatchError(f"gradient {g.shape} does not match param {p.shape}")
        acc += (1.0 - state.rho) * g * g
        p.data -= state.lr * g / (np.sqrt(acc) + state.eps)
