"""Shared numerical helpers for gradient checking."""

import numpy as np
import pytest

from rirlab.autodiff import active_tape


@pytest.fixture(autouse=True)
def clean_tape():
    """Tests that forward through grad-bearing tensors without calling
    backward would otherwise leak records onto the global tape."""
    active_tape().clear()
    yield
    active_tape().clear()


def numeric_grad(f, arr, h=1e-5):
    """Central finite differences of scalar f() wrt arr, perturbing in place."""
    grad = np.zeros_like(arr)
    flat, gflat = arr.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(analytic, numeric):
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return np.linalg.norm(analytic - numeric) / denom
