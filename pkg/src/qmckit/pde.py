"""1-D elliptic problem ``-(a u')' = kappa`` on (0, 1) with random coefficients.

Piecewise-linear finite elements on ``M`` interior nodes (``h = 1/(M+1)``); the
coefficient is sampled at element midpoints, so a batch of coefficients is an
array of shape ``(N, M+1)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .estimate import Estimate, combine_shift_values, shifted_lattice_estimate
from .points import GeneratingVector
from .transforms import map_points
from .weights import zeta


def _as_function(v) -> Callable[[np.ndarray], np.ndarray]:
    if callable(v):
        return v
    return lambda x: np.full(np.shape(x), float(v))


@dataclass
class PdeProblem:
    M: int = 127
    kappa: float | Callable = 1.0

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("need at least one interior node")

    @property
    def h(self) -> float:
        return 1.0 / (self.M + 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        return self.h * np.arange(1, self.M + 1)

    @cached_property
    def midpoints(self) -> np.ndarray:
        return self.h * (np.arange(self.M + 1) + 0.5)

    @cached_property
    def load(self) -> np.ndarray:
        k = _as_function(self.kappa)(self.midpoints)
        return 0.5 * self.h * (k[:-1] + k[1:])

    def functional(self, u: np.ndarray) -> np.ndarray:
        """``G(u) = int_0^1 u`` by the trapezoidal rule on nodal values (zero boundary)."""
        return self.h * np.sum(u, axis=-1)


def fem_solve(a_mid: np.ndarray, problem: PdeProblem) -> np.ndarray:
    """Nodal Galerkin solutions for a batch of midpoint coefficients (Thomas algorithm)."""
    a = np.atleast_2d(np.asarray(a_mid, dtype=float))
    if a.shape[1] != problem.M + 1:
        raise ValueError(f"expected {problem.M + 1} element values, got {a.shape[1]}")
    if not np.all(a > 0):
        raise ValueError("coefficient must be positive at every quadrature point")
    h, M = problem.h, problem.M
    diag = (a[:, :-1] + a[:, 1:]) / h
    off = -a[:, 1:-1] / h  # K[i, i+1] for i = 0..M-2
    rhs = np.broadcast_to(problem.load, diag.shape)
    c = np.empty((a.shape[0], max(M - 1, 0)))
    d = np.empty_like(diag)
    denom = diag[:, 0]
    if M > 1:
        c[:, 0] = off[:, 0] / denom
    d[:, 0] = rhs[:, 0] / denom
    for i in range(1, M):
        denom = diag[:, i] - off[:, i - 1] * c[:, i - 1]
        if i < M - 1:
            c[:, i] = off[:, i] / denom
        d[:, i] = (rhs[:, i] - off[:, i - 1] * d[:, i - 1]) / denom
    u = np.empty_like(d)
    u[:, -1] = d[:, -1]
    for i in range(M - 2, -1, -1):
        u[:, i] = d[:, i] - c[:, i] * u[:, i + 1]
    return u


def stiffness_matrix(a_mid: np.ndarray, problem: PdeProblem) -> np.ndarray:
    a = np.asarray(a_mid, dtype=float)
    h = problem.h
    K = np.diag((a[:-1] + a[1:]) / h)
    off = -a[1:-1] / h
    return K + np.diag(off, 1) + np.diag(off, -1)


# --------------------------------------------------------------------------
# coefficient models


@dataclass
class UniformCoefficient:
    """``a(x, y) = a0(x) + sum_j y_j psi_j(x)`` with ``y_j`` uniform on [-1/2, 1/2]."""

    psi: list[Callable]
    a0: float | Callable = 1.0
    check_points: int = 2001

    def __post_init__(self):
        x = np.linspace(0.0, 1.0, self.check_points)
        a0 = _as_function(self.a0)(x)
        sup = sum(np.max(np.abs(p(x))) for p in self.psi)
        self.a_min = float(np.min(a0) - 0.5 * sup)
        if self.a_min <= 0:
            raise ValueError(f"coefficient not uniformly positive (a_min = {self.a_min:.3g})")

    @property
    def dim(self) -> int:
        return len(self.psi)

    def sup_norms(self) -> np.ndarray:
        x = np.linspace(0.0, 1.0, self.check_points)
        return np.array([np.max(np.abs(p(x))) for p in self.psi])

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Coefficient at points ``x`` for parameter rows ``y`` in [-1/2, 1/2]^s."""
        y = np.atleast_2d(y)
        basis = np.array([p(x) for p in self.psi]) if self.psi else np.zeros((0, len(x)))
        return _as_function(self.a0)(x)[None, :] + y @ basis

    def from_unit(self, u: np.ndarray, x: np.ndarray) -> np.ndarray:
        return self(x, np.asarray(u) - 0.5)


def default_uniform(s: int, decay: float = 2.0, amplitude: float = 0.9) -> UniformCoefficient:
    """``a0 = 1``, ``psi_j = amplitude j^-decay sin(j pi x) / zbar`` with ``a_min >= 0.1``."""
    zbar = zeta(decay) / 2.0 if decay > 1 else float(s)

    def make(j):
        return lambda x: amplitude / j**decay * np.sin(j * math.pi * np.asarray(x)) / zbar

    return UniformCoefficient([make(j) for j in range(1, s + 1)])


def exponential_covariance(length: float, variance: float = 1.0) -> Callable:
    return lambda d: variance * np.exp(-np.abs(d) / length)


def interpolate_grid(values: np.ndarray, grid: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Piecewise-linear interpolation of row-wise grid values onto ``x``."""
    idx = np.clip(np.searchsorted(grid, x, side="right") - 1, 0, len(grid) - 2)
    t = (x - grid[idx]) / (grid[idx + 1] - grid[idx])
    return values[:, idx] * (1.0 - t) + values[:, idx + 1] * t


@dataclass
class LognormalKL:
    """Truncated KL expansion ``a0 exp(sum_j y_j sqrt(mu_j) xi_j)`` on a grid.

    Eigenpairs come from a dense eigen-solve of the grid covariance (setup
    cost), scaled so the ``xi_j`` are orthonormal under the grid quadrature."""

    grid: np.ndarray
    mu: np.ndarray
    xi: np.ndarray  # (s, len(grid))
    a0: float = 1.0

    def __post_init__(self):
        if np.any(self.mu <= 0) or np.any(np.diff(self.mu) > 1e-12 * self.mu[0]):
            raise ValueError("KL eigenvalues must be positive and non-increasing")

    @classmethod
    def from_covariance(cls, cov: Callable, points: int, s: int, a0: float = 1.0) -> "LognormalKL":
        grid = np.linspace(0.0, 1.0, points)
        R = cov(np.subtract.outer(grid, grid))
        lam, vec = np.linalg.eigh(R)
        order = np.argsort(lam)[::-1][:s]
        w = grid[1] - grid[0]
        lam = np.clip(lam[order], 1e-300, None)
        return cls(grid, lam * w, (vec[:, order] / math.sqrt(w)).T, a0)

    @property
    def dim(self) -> int:
        return len(self.mu)

    def field(self, y: np.ndarray) -> np.ndarray:
        return np.atleast_2d(y) @ (np.sqrt(self.mu)[:, None] * self.xi)

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self.a0 * np.exp(interpolate_grid(self.field(y), self.grid, x))

    def from_unit(self, u: np.ndarray, x: np.ndarray) -> np.ndarray:
        return self(x, map_points(u))


@dataclass
class CirculantEmbedding:
    """Exact sampler of a stationary Gaussian field on ``M`` equispaced points of [0, 1]."""

    M: int
    cov: Callable
    a0: float = 1.0
    min_size: int | None = None
    tol: float = 1e-12
    grid: np.ndarray = field(init=False)
    eigenvalues: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.M < 2:
            raise ValueError("need at least two grid points")
        self.grid = np.linspace(0.0, 1.0, self.M)
        dx = self.grid[1] - self.grid[0]
        size = max(2 * (self.M - 1), self.min_size or 0)
        size += size % 2
        while True:
            half = size // 2
            row = self.cov(dx * np.arange(half + 1))
            c = np.concatenate([row, row[1:-1][::-1]])
            lam = np.fft.fft(c).real
            if lam.min() >= -self.tol * max(1.0, lam.max()):
                break
            size *= 2
            if size > 2**10 * self.M:
                raise RuntimeError("circulant embedding failed: negative eigenvalues remain")
        self.first_row = c
        self.raw_min_eigenvalue = float(lam.min())
        self.eigenvalues = np.clip(lam, 0.0, None)
        self._sqrt = np.sqrt(self.eigenvalues)

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    def sample(self, y: np.ndarray) -> np.ndarray:
        """Field values on the grid for standard normal rows ``y`` of length ``dim``."""
        y = np.atleast_2d(y)
        if y.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim} normals, got {y.shape[1]}")
        z = np.fft.ifft(self._sqrt * np.fft.fft(y, axis=1), axis=1).real
        return z[:, : self.M]

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self.a0 * np.exp(interpolate_grid(self.sample(y), self.grid, x))

    def from_unit(self, u: np.ndarray, x: np.ndarray) -> np.ndarray:
        return self(x, map_points(u))


def pde_integrand(problem: PdeProblem, coeff) -> Callable[[np.ndarray], np.ndarray]:
    x = problem.midpoints

    def f(u: np.ndarray) -> np.ndarray:
        return problem.functional(fem_solve(coeff.from_unit(u, x), problem))

    return f


def expected_functional(problem: PdeProblem, coeff, rule: GeneratingVector, shifts: int,
                        seed: int = 0, threads: int = 1) -> Estimate:
    if rule.s != coeff.dim:
        raise ValueError(f"rule dimension {rule.s} != coefficient dimension {coeff.dim}")
    est = shifted_lattice_estimate(pde_integrand(problem, coeff), rule, shifts, seed, threads,
                                   batch=2048)
    est.meta.update(M=problem.M, coefficient=type(coeff).__name__)
    return est


def mc_functional(problem: PdeProblem, coeff, samples: int, seed: int,
                  batch: int = 20_000) -> Estimate:
    """Plain Monte Carlo reference with uniform unit-cube samples."""
    rng = np.random.Generator(np.random.PCG64(seed))
    f = pde_integrand(problem, coeff)
    total = total2 = 0.0
    done = 0
    while done < samples:
        m = min(batch, samples - done)
        v = f(rng.random((m, coeff.dim)))
        total += v.sum()
        total2 += (v * v).sum()
        done += m
    mean = total / samples
    se = math.sqrt((total2 - samples * mean * mean) / (samples - 1) / samples)
    return Estimate(mean, [mean], se, samples, 1, evaluations=samples, meta={"seed": seed})


def problem_from_json(text: str) -> tuple[PdeProblem, object]:
    """Build a problem and coefficient from ``{"M", "kappa", "coefficient": {...}}``.

    The coefficient entry has ``kind`` in ``uniform`` (``s``, ``decay``),
    ``kl`` (``s``, ``length``, ``variance``, ``points``) or ``circulant``
    (``points``, ``length``, ``variance``)."""
    d = json.loads(text)
    problem = PdeProblem(int(d.get("M", 127)), float(d.get("kappa", 1.0)))
    c = d.get("coefficient", {"kind": "uniform", "s": 4})
    kind = c.get("kind", "uniform")
    if kind == "uniform":
        coeff = default_uniform(int(c.get("s", 4)), float(c.get("decay", 2.0)))
    elif kind == "kl":
        cov = exponential_covariance(float(c.get("length", 0.3)), float(c.get("variance", 1.0)))
        coeff = LognormalKL.from_covariance(cov, int(c.get("points", 64)), int(c.get("s", 16)))
    elif kind == "circulant":
        cov = exponential_covariance(float(c.get("length", 0.3)), float(c.get("variance", 1.0)))
        coeff = CirculantEmbedding(int(c.get("points", 64)), cov)
    else:
        raise ValueError(f"unknown coefficient kind {kind!r}")
    return problem, coeff
