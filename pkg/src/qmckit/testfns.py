"""Test integrands on the unit cube with known integral 1."""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .cbc import bernoulli2


def bernoulli_product(gammas: Sequence[float]) -> Callable[[np.ndarray], np.ndarray]:
    """``prod_j (1 + gamma_j B2(y_j))``; each factor integrates to 1."""
    g = np.asarray(gammas, dtype=float)

    def f(u: np.ndarray) -> np.ndarray:
        u = np.atleast_2d(u)
        return np.prod(1.0 + g[: u.shape[1]] * bernoulli2(u), axis=1)

    return f


def exponential_product(gammas: Sequence[float]) -> Callable[[np.ndarray], np.ndarray]:
    """``prod_j (1 + gamma_j (exp(y_j) - (e - 1)))``: smooth but not periodic."""
    g = np.asarray(gammas, dtype=float)

    def f(u: np.ndarray) -> np.ndarray:
        u = np.atleast_2d(u)
        return np.prod(1.0 + g[: u.shape[1]] * (np.exp(u) - (math.e - 1.0)), axis=1)

    return f


SMOOTH_TESTS = {"bernoulli": bernoulli_product, "exponential": exponential_product}
