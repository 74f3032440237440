"""Arithmetic-average Asian call under Black-Scholes dynamics.

Brownian paths on ``t_j = j T / s`` have covariance ``(T/s) min(i, j)``; the
three factorisations of that matrix are applied implicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import special

from .estimate import Estimate, shifted_lattice_estimate
from .points import GeneratingVector
from .transforms import map_points

METHODS = ("standard", "brownian_bridge", "pca")


@dataclass(frozen=True)
class AsianOption:
    T: float = 1.0
    s: int = 16
    K: float = 100.0
    S0: float = 100.0
    r: float = 0.1
    sigma: float = 0.2

    def __post_init__(self):
        if self.T <= 0 or self.s < 1 or self.K < 0 or self.S0 <= 0 or self.sigma <= 0:
            raise ValueError("invalid option parameters")

    @property
    def times(self) -> np.ndarray:
        return self.T * np.arange(1, self.s + 1) / self.s

    @property
    def discount(self) -> float:
        return math.exp(-self.r * self.T)


def path_covariance(s: int, T: float) -> np.ndarray:
    i = np.arange(1, s + 1)
    return (T / s) * np.minimum.outer(i, i)


def _bridge_schedule(s: int):
    """Breadth-first bisection order: (index, left, right, w_left, w_right, sd) per variable."""
    h = 1.0 / s  # times in units of T
    sched = [(s, 0, -1, 0.0, 0.0, 1.0)]
    queue = [(0, s)]
    while queue:
        nxt = []
        for l, r in queue:
            if r - l < 2:
                continue
            mid = l + (r - l) // 2
            tl, tm, tr = l * h, mid * h, r * h
            sched.append((mid, l, r, (tr - tm) / (tr - tl), (tm - tl) / (tr - tl),
                          math.sqrt((tm - tl) * (tr - tm) / (tr - tl))))
            nxt.extend([(l, mid), (mid, r)])
        queue = nxt
    return sched


@dataclass(frozen=True)
class CovarianceOperator:
    """Implicit factor ``A`` with ``A A^T = (T/s) min(i, j)``."""

    method: str
    s: int
    T: float = 1.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")

    @cached_property
    def _schedule(self):
        return _bridge_schedule(self.s)

    @cached_property
    def pca_eigenvalues(self) -> np.ndarray:
        k = np.arange(1, self.s + 1)
        return (self.T / self.s) / (4.0 * np.sin((2 * k - 1) * math.pi / (2 * (2 * self.s + 1))) ** 2)

    @cached_property
    def first_column(self) -> np.ndarray:
        return self.matvec(np.eye(self.s)[:1])[0]

    def matvec(self, y: np.ndarray) -> np.ndarray:
        """Rows of ``y`` (shape ``(N, s)`` or ``(s,)``) mapped to paths ``A y``."""
        y = np.asarray(y, dtype=float)
        single = y.ndim == 1
        y = np.atleast_2d(y)
        if y.shape[1] != self.s:
            raise ValueError(f"expected {self.s} coordinates, got {y.shape[1]}")
        if self.method == "standard":
            out = math.sqrt(self.T / self.s) * np.cumsum(y, axis=1)
        elif self.method == "brownian_bridge":
            out = self._bridge(y)
        else:
            out = self._pca(y)
        return out[0] if single else out

    def _bridge(self, y: np.ndarray) -> np.ndarray:
        s, sqT = self.s, math.sqrt(self.T)
        W = np.zeros((y.shape[0], s + 1))
        for k, (idx, l, r, wl, wr, sd) in enumerate(self._schedule):
            if r < 0:
                W[:, idx] = sqT * y[:, k]
            else:
                W[:, idx] = wl * W[:, l] + wr * W[:, r] + sqT * sd * y[:, k]
        return W[:, 1:]

    def _pca(self, y: np.ndarray) -> np.ndarray:
        # A[i, k] = 2/sqrt(2s+1) sin((2k-1) i pi/(2s+1)) sqrt(lambda_k), i, k = 1..s
        s = self.s
        N = 2 * s + 1
        c = np.zeros((y.shape[0], N), dtype=complex)
        c[:, 1 : s + 1] = y * np.sqrt(self.pca_eigenvalues) * (2.0 / math.sqrt(N))
        i = np.arange(1, s + 1)
        spec = np.fft.ifft(c, axis=1)[:, 1 : s + 1] * N
        return np.imag(spec * np.exp(-1j * math.pi * i / N))

    def matrix(self) -> np.ndarray:
        return self.matvec(np.eye(self.s)).T


def dense_pca_factor(s: int, T: float) -> np.ndarray:
    """Dense eigen-decomposition fallback; columns ordered by decreasing eigenvalue."""
    lam, vec = np.linalg.eigh(path_covariance(s, T))
    order = np.argsort(lam)[::-1]
    vec = vec[:, order] * np.sign(vec[:, order].sum(axis=0))
    return vec * np.sqrt(lam[order])


def asset_paths(opt: AsianOption, W: np.ndarray) -> np.ndarray:
    drift = (opt.r - 0.5 * opt.sigma**2) * opt.times
    return opt.S0 * np.exp(drift + opt.sigma * W)


def payoff(opt: AsianOption, cov: CovarianceOperator, y: np.ndarray) -> np.ndarray:
    """Discounted ``max(mean_j S_tj - K, 0)`` for normal inputs ``y`` (batch rows)."""
    W = cov.matvec(y)
    mu = asset_paths(opt, W).mean(axis=-1) - opt.K
    return opt.discount * np.maximum(mu, 0.0)


def _smoothed_from_weights(wts: np.ndarray, b: np.ndarray, K: float) -> np.ndarray:
    """``E[max(mean_j w_j exp(b_j Z) - K, 0)]`` for standard normal Z, per row of ``wts``."""
    s = wts.shape[1]
    full = (wts * np.exp(0.5 * b * b)).sum(axis=1) / s
    if K == 0:
        return full
    # root of the convex increasing mu(z) = mean_j w_j e^{b_j z} - K, Newton from above
    z = np.full(wts.shape[0], 12.0)
    mu_top = (wts * np.exp(b * 12.0)).sum(axis=1) / s - K
    for _ in range(200):
        e = wts * np.exp(b * z[:, None])
        g = e.sum(axis=1) / s - K
        dg = (e * b).sum(axis=1) / s
        step = np.where(dg > 0, g / np.where(dg > 0, dg, 1.0), 0.0)
        z = z - step
        if np.all(np.abs(step) <= 1e-14 * (1.0 + np.abs(z))):
            break
    val = (wts * np.exp(0.5 * b * b) * special.ndtr(b - z[:, None])).sum(axis=1) / s \
        - K * special.ndtr(-z)
    return np.where(mu_top > 0, np.maximum(val, 0.0), 0.0)


def smoothed_payoff(opt: AsianOption, cov: CovarianceOperator, y_rest: np.ndarray) -> np.ndarray:
    """Payoff with the first principal-component variable integrated out exactly.

    ``y_rest`` holds the remaining ``s - 1`` normal variables per row."""
    if cov.method != "pca":
        raise ValueError("smoothing by preintegration needs the PCA construction")
    y_rest = np.atleast_2d(np.asarray(y_rest, dtype=float))
    y = np.zeros((y_rest.shape[0], opt.s))
    y[:, 1:] = y_rest
    W_rest = cov.matvec(y)
    wts = asset_paths(opt, W_rest)
    b = opt.sigma * cov.first_column
    return opt.discount * _smoothed_from_weights(wts, b, opt.K)


def kink_function(opt: AsianOption, cov: CovarianceOperator):
    """Inner smooth function ``mu(A y)`` whose zero set is the kink."""
    def mu(y):
        return asset_paths(opt, cov.matvec(y)).mean(axis=-1) - opt.K
    return mu


def option_integrand(opt: AsianOption, cov: CovarianceOperator, smoothed: bool):
    """Unit-cube integrand for the lattice estimator."""
    if smoothed:
        return lambda u: smoothed_payoff(opt, cov, map_points(u))
    return lambda u: payoff(opt, cov, map_points(u))


def price(opt: AsianOption, cov: CovarianceOperator, rule: GeneratingVector, shifts: int,
          smoothed: bool = False, seed: int = 0, threads: int = 1) -> Estimate:
    need = opt.s - 1 if smoothed else opt.s
    if rule.s != need:
        raise ValueError(f"rule dimension {rule.s} != {need}")
    est = shifted_lattice_estimate(option_integrand(opt, cov, smoothed), rule, shifts, seed, threads)
    est.meta.update(method=cov.method, smoothed=smoothed)
    return est


def mc_price(opt: AsianOption, samples: int, seed: int, batch: int = 200_000) -> tuple[float, float]:
    """Plain Monte Carlo reference (standard construction): (mean, standard error)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    cov = CovarianceOperator("standard", opt.s, opt.T)
    total = total2 = 0.0
    done = 0
    while done < samples:
        m = min(batch, samples - done)
        v = payoff(opt, cov, rng.standard_normal((m, opt.s)))
        total += v.sum()
        total2 += (v * v).sum()
        done += m
    mean = total / samples
    var = (total2 - samples * mean * mean) / (samples - 1)
    return mean, math.sqrt(var / samples)
