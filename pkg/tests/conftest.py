"""Shared test helpers: finite-difference oracles and record builders."""

import numpy as np
import pytest

from polyvox.tensor import Tensor, backward, record


def finite_difference(f, tensor: Tensor, step: float) -> np.ndarray:
    """Central finite differences of the scalar f() w.r.t. tensor elements.

    Independent of the autodiff path: f is re-evaluated forward-only with
    perturbed entries.
    """
    fd = np.zeros_like(tensor.data)
    it = np.nditer(tensor.data, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = tensor.data[idx]
        tensor.data[idx] = orig + step
        f_plus = float(f().data)
        tensor.data[idx] = orig - step
        f_minus = float(f().data)
        tensor.data[idx] = orig
        fd[idx] = (f_plus - f_minus) / (2.0 * step)
    return fd


def analytic_grads(f, tensors):
    with record() as tape:
        loss = f()
    return backward(loss, tape, tensors)


def max_rel_error(a: np.ndarray, b: np.ndarray, floor: float) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def check_gradients(f, tensors, step=1e-6, floor=1e-6, tol=1e-6):
    """Assert every tensor's analytic gradient matches central differences."""
    grads = analytic_grads(f, tensors)
    for t in tensors:
        fd = finite_difference(f, t, step)
        err = max_rel_error(fd, grads[t], floor)
        assert err < tol, f"gradient mismatch for {t.name or t.shape}: rel err {err:.3e}"


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
