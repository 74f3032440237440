"""Poisson log-normal time-series likelihood with recentering and rescaling."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg, special

from .estimate import Estimate, shifted_lattice_estimate
from .points import GeneratingVector
from .transforms import MarginalDensity, map_points

EXP_LIMIT = 700.0


@dataclass(frozen=True)
class GlmmModel:
    beta: float
    tau: tuple[int, ...]
    sigma2: float
    kappa: float

    def __post_init__(self):
        object.__setattr__(self, "tau", tuple(int(t) for t in self.tau))
        if any(t < 0 for t in self.tau):
            raise ValueError("counts must be non-negative")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if not -1.0 < self.kappa < 1.0:
            raise ValueError("kappa must lie in (-1, 1)")
        if not self.tau:
            raise ValueError("need at least one count")

    @property
    def s(self) -> int:
        return len(self.tau)

    @classmethod
    def from_json(cls, text: str) -> "GlmmModel":
        d = json.loads(text)
        return cls(float(d["beta"]), tuple(d["tau"]), float(d["sigma2"]), float(d["kappa"]))

    def to_json(self) -> str:
        return json.dumps({"beta": self.beta, "tau": list(self.tau), "sigma2": self.sigma2,
                           "kappa": self.kappa})

    def covariance(self) -> np.ndarray:
        i = np.arange(self.s)
        return self.sigma2 * self.kappa ** np.abs(np.subtract.outer(i, i)) / (1.0 - self.kappa**2)

    @cached_property
    def precision_bands(self) -> tuple[np.ndarray, np.ndarray]:
        """(diagonal, off-diagonal) of the tridiagonal AR(1) precision matrix."""
        s, k = self.s, self.kappa
        if s == 1:
            diag = np.array([1.0 - k * k])
        else:
            diag = np.full(s, 1.0 + k * k)
            diag[0] = diag[-1] = 1.0
        return diag / self.sigma2, np.full(s - 1, -k / self.sigma2)

    def precision(self) -> np.ndarray:
        d, o = self.precision_bands
        return np.diag(d) + np.diag(o, 1) + np.diag(o, -1)

    def precision_times(self, y: np.ndarray) -> np.ndarray:
        """Rows of ``y`` multiplied by the precision matrix."""
        d, o = self.precision_bands
        out = y * d
        out[..., :-1] += o * y[..., 1:]
        out[..., 1:] += o * y[..., :-1]
        return out

    @cached_property
    def log_norm_const(self) -> float:
        """``sum log tau_j! + (1/2) log((2 pi)^s det Sigma)``."""
        logdet = self.s * math.log(self.sigma2) - math.log1p(-self.kappa**2)
        return float(sum(special.gammaln(t + 1.0) for t in self.tau)) + \
            0.5 * (self.s * math.log(2 * math.pi) + logdet)


def _rates(m: GlmmModel, y: np.ndarray) -> np.ndarray:
    eta = m.beta + y
    if np.any(eta > EXP_LIMIT):
        raise OverflowError("exponent beta + y exceeds the overflow guard")
    return np.exp(eta)


def log_T(m: GlmmModel, y: np.ndarray) -> np.ndarray:
    """Log of ``q(y) rho(y)`` for a point or a batch of rows."""
    y = np.asarray(y, dtype=float)
    tau = np.asarray(m.tau, dtype=float)
    lik = (tau * (m.beta + y) - _rates(m, y)).sum(axis=-1)
    quad = 0.5 * (y * m.precision_times(y)).sum(axis=-1)
    return lik - quad - m.log_norm_const


def grad_T(m: GlmmModel, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return np.asarray(m.tau, dtype=float) - _rates(m, y) - m.precision_times(y)


def hess_T(m: GlmmModel, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return -np.diag(_rates(m, y)) - m.precision()


def stationary_point(m: GlmmModel, tol: float = 1e-10, max_iter: int = 100) -> np.ndarray:
    """Newton iteration from the origin with the exact Hessian."""
    y = np.zeros(m.s)
    for _ in range(max_iter):
        g = grad_T(m, y)
        if np.max(np.abs(g)) <= tol:
            return y
        y = y + linalg.cho_solve(linalg.cho_factor(-hess_T(m, y), lower=True), g)
    raise RuntimeError("Newton iteration did not converge")


@dataclass(frozen=True)
class RecenterTransform:
    y_star: np.ndarray
    factor: np.ndarray
    density: MarginalDensity
    offset: float

    @property
    def log_det_factor(self) -> float:
        return float(np.sum(np.log(np.diag(self.factor))))


def recenter(m: GlmmModel, density: MarginalDensity | None = None) -> RecenterTransform:
    density = density or MarginalDensity("normal")
    y_star = stationary_point(m)
    sigma_star = linalg.cho_solve(linalg.cho_factor(-hess_T(m, y_star), lower=True), np.eye(m.s))
    A = np.linalg.cholesky(sigma_star)
    return RecenterTransform(y_star, A, density, float(log_T(m, y_star)))


def recentered_integrand(m: GlmmModel, density: MarginalDensity | None = None,
                         rt: RecenterTransform | None = None):
    """``f(y') = exp(T(A* y' + y*) - T(y*)) / prod_j phi(y'_j)`` and its transform.

    The likelihood equals ``exp(offset + log det A*) * E_phi[f]``."""
    rt = rt or recenter(m, density)

    def f(yp: np.ndarray) -> np.ndarray:
        yp = np.atleast_2d(yp)
        y = yp @ rt.factor.T + rt.y_star
        return np.exp(log_T(m, y) - rt.offset - rt.density.log_pdf(yp).sum(axis=1))

    return f, rt


def likelihood(m: GlmmModel, density: MarginalDensity | None, rule: GeneratingVector,
               shifts: int, seed: int = 0, threads: int = 1) -> Estimate:
    """Shifted-lattice estimate of the scaled likelihood integral.

    ``value`` estimates ``E_phi[f]``; ``meta['log_likelihood']`` is
    ``offset + log det A* + log(value)`` and ``meta['log_std_error']`` the
    delta-method standard error of that log value."""
    if rule.s != m.s:
        raise ValueError(f"rule dimension {rule.s} != {m.s}")
    f, rt = recentered_integrand(m, density)
    est = shifted_lattice_estimate(lambda u: f(map_points(u, rt.density)), rule, shifts, seed, threads)
    log_offset = rt.offset + rt.log_det_factor
    est.meta.update(density=rt.density.kind, log_offset=log_offset,
                    log_likelihood=log_offset + math.log(est.value))
    est.meta["log_std_error"] = est.std_error / est.value if est.std_error is not None else None
    return est


def gauss_hermite_likelihood(m: GlmmModel, level: int = 40) -> float:
    """Tensor Gauss-Hermite quadrature of the original integral of ``q rho`` (small s)."""
    x, w = special.roots_hermitenorm(level)
    w = w / math.sqrt(2.0 * math.pi)
    L = np.linalg.cholesky(m.covariance())
    grids = np.meshgrid(*([x] * m.s), indexing="ij")
    z = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.ones(len(z))
    for wg in np.meshgrid(*([w] * m.s), indexing="ij"):
        weights *= wg.ravel()
    y = z @ L.T
    tau = np.asarray(m.tau, dtype=float)
    logq = (tau * (m.beta + y) - _rates(m, y)).sum(axis=1) - sum(special.gammaln(tau + 1.0))
    return float(weights @ np.exp(logq))
