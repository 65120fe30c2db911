"""Shared test helpers: finite-difference gradients and tolerances."""

from __future__ import annotations

import numpy as np
import pytest

from molgrow.nn import Tensor


def fd_grad(loss_fn, tensors: dict[str, Tensor], h: float = 1e-4) -> dict[str, np.ndarray]:
    """Central finite differences of a scalar loss w.r.t. the given tensors.

    ``loss_fn`` must recompute the loss from the tensors' current ``data``;
    entries are perturbed in place and restored.
    """
    grads: dict[str, np.ndarray] = {}
    for name, t in tensors.items():
        g = np.zeros_like(t.data)
        flat = t.data.ravel()
        gf = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = loss_fn()
            flat[i] = orig - h
            fm = loss_fn()
            flat[i] = orig
            gf[i] = (fp - fm) / (2.0 * h)
        grads[name] = g
    return grads


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Max absolute difference scaled by the larger magnitude present."""
    denom = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-8)
    return float(np.abs(a - b).max(initial=0.0) / denom)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
