"""Inverse-CDF maps from the unit cube to R^s and smoothing by preintegration."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import integrate, special

from .points import PointSet

EPS_CLAMP = 2.0**-53

# Acklam's rational approximation coefficients
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425
_SQRT2PI = math.sqrt(2.0 * math.pi)


def _lower_half(q: np.ndarray) -> np.ndarray:
    """Rational approximation for ``q <= 1/2`` (returns values <= 0)."""
    x = np.empty_like(q)
    tail = q < _P_LOW
    if tail.any():
        t = np.sqrt(-2.0 * np.log(q[tail]))
        num = ((((_C[0] * t + _C[1]) * t + _C[2]) * t + _C[3]) * t + _C[4]) * t + _C[5]
        den = (((_D[0] * t + _D[1]) * t + _D[2]) * t + _D[3]) * t + 1.0
        x[tail] = num / den
    mid = ~tail
    if mid.any():
        r0 = q[mid] - 0.5
        r = r0 * r0
        num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * r0
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        x[mid] = num / den
    # one Halley step against the erfc-based CDF
    with np.errstate(over="ignore", invalid="ignore"):
        e = special.ndtr(x) - q
        u = e * _SQRT2PI * np.exp(0.5 * x * x)
        step = u / (1.0 + 0.5 * x * u)
    return np.where(np.isfinite(step), x - step, x)


def norminv(p):
    """Standard normal quantile; raises for arguments outside (0, 1)."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(~((p_arr > 0.0) & (p_arr < 1.0))):
        raise ValueError("norminv needs p strictly inside (0, 1)")
    flat = np.atleast_1d(p_arr).ravel()
    upper = flat > 0.5
    q = np.where(upper, 1.0 - flat, flat)
    x = _lower_half(q)
    x = np.where(upper, -x, x)
    x[flat == 0.5] = 0.0
    out = x.reshape(p_arr.shape)
    return float(out) if np.ndim(p) == 0 else out


def normcdf(x):
    return special.ndtr(x)


def normpdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / _SQRT2PI


@dataclass(frozen=True)
class MarginalDensity:
    """Univariate density with CDF and inverse CDF.

    ``kind`` is one of ``normal``, ``logistic``, ``student`` (``nu`` degrees of
    freedom) or ``uniform`` (on [0, 1], for identity maps).
    """

    kind: str = "normal"
    nu: float | None = None

    def __post_init__(self):
        if self.kind not in ("normal", "logistic", "student", "uniform"):
            raise ValueError(f"unknown density {self.kind!r}")
        if self.kind == "student" and (self.nu is None or self.nu <= 0):
            raise ValueError("student density needs nu > 0")
        mass = self.total_mass
        if abs(mass - 1.0) > 1e-10:
            raise ValueError(f"density integrates to {mass!r}")

    @cached_property
    def total_mass(self) -> float:
        if self.kind == "uniform":
            return 1.0
        f = lambda t: float(self.pdf(t))  # noqa: E731
        left = integrate.quad(f, -np.inf, 0.0, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
        right = integrate.quad(f, 0.0, np.inf, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
        return left + right

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "normal":
            return normpdf(x)
        if self.kind == "logistic":
            e = np.exp(-np.abs(x))
            return e / (1.0 + e) ** 2
        if self.kind == "student":
            nu = self.nu
            c = math.exp(math.lgamma((nu + 1) / 2) - math.lgamma(nu / 2)) / math.sqrt(nu * math.pi)
            return c * (1.0 + x * x / nu) ** (-(nu + 1) / 2)
        return ((x >= 0) & (x <= 1)).astype(float)

    def log_pdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "normal":
            return -0.5 * x * x - math.log(_SQRT2PI)
        if self.kind == "logistic":
            a = np.abs(x)
            return -a - 2.0 * np.log1p(np.exp(-a))
        if self.kind == "student":
            nu = self.nu
            c = math.lgamma((nu + 1) / 2) - math.lgamma(nu / 2) - 0.5 * math.log(nu * math.pi)
            return c - (nu + 1) / 2 * np.log1p(x * x / nu)
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(x))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "normal":
            return special.ndtr(x)
        if self.kind == "logistic":
            return special.expit(x)
        if self.kind == "student":
            return special.stdtr(self.nu, x)
        return np.clip(x, 0.0, 1.0)

    def ppf(self, p):
        p = np.asarray(p, dtype=float)
        if self.kind == "normal":
            return norminv(p)
        if self.kind == "logistic":
            return special.logit(p)
        if self.kind == "student":
            return special.stdtrit(self.nu, p)
        return p.copy()


def clamp_unit(u: np.ndarray) -> np.ndarray:
    return np.clip(u, EPS_CLAMP, 1.0 - EPS_CLAMP)


def map_points(ps: PointSet | np.ndarray, density: MarginalDensity | None = None) -> np.ndarray:
    """Apply the inverse CDF entrywise to a point set."""
    density = density or MarginalDensity("normal")
    u = ps.coords if isinstance(ps, PointSet) else np.asarray(ps, dtype=float)
    if density.kind == "uniform":
        return np.array(u, dtype=float)
    return density.ppf(clamp_unit(u))


# --------------------------------------------------------------------------
# preintegration


@dataclass(frozen=True)
class PreintegrationSpec:
    k: int
    nodes: int = 64
    tol: float = 1e-10
    bracket: float = 12.0

    def __post_init__(self):
        if self.nodes < 2:
            raise ValueError("need at least two quadrature nodes")
        if self.tol <= 0:
            raise ValueError("root tolerance must be positive")


def _insert(y_rest: np.ndarray, k: int, values: np.ndarray) -> np.ndarray:
    """Batch of full points with coordinate ``k`` set to each of ``values``.

    Returns shape ``(len(values), N, s)``."""
    N = y_rest.shape[0]
    full = np.empty((len(values), N, y_rest.shape[1] + 1))
    full[:, :, :k] = y_rest[None, :, :k]
    full[:, :, k + 1 :] = y_rest[None, :, k:]
    full[:, :, k] = np.asarray(values)[:, None] if np.ndim(values) == 1 else values
    return full


def locate_kink(mu: Callable, y_rest: np.ndarray, spec: PreintegrationSpec):
    """Root of ``mu`` along coordinate ``k`` by bisection on [-b, b].

    Returns ``(root, increasing, status)`` where ``status`` is 0 for a bracketed
    root, 1 if ``mu > 0`` on the whole bracket and -1 if ``mu <= 0`` there."""
    k, b = spec.k, spec.bracket
    ends = _insert(y_rest, k, np.array([-b, b]))
    lo_val = mu(ends[0])
    hi_val = mu(ends[1])
    increasing = hi_val >= lo_val
    status = np.zeros(len(y_rest), dtype=int)
    status[(lo_val > 0) & (hi_val > 0)] = 1
    status[(lo_val <= 0) & (hi_val <= 0)] = -1
    lo = np.full(len(y_rest), -b)
    hi = np.full(len(y_rest), b)
    iters = int(math.ceil(math.log2(2 * b / spec.tol))) + 1
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        val = mu(_insert(y_rest, k, mid[None, :])[0])
        pos = val > 0
        move_hi = np.where(increasing, pos, ~pos)
        hi = np.where(move_hi, mid, hi)
        lo = np.where(move_hi, lo, mid)
    return 0.5 * (lo + hi), increasing, status


def preintegrate(f: Callable, spec: PreintegrationSpec, kink: Callable | None = None) -> Callable:
    """Integrate out coordinate ``spec.k`` against the standard normal density.

    ``f`` maps an ``(N, s)`` batch to ``(N,)``. If ``kink`` (same signature) is
    given, ``f`` is assumed to vanish where ``kink <= 0`` and ``kink`` must be
    monotone in the integrated coordinate; only the positive branch is
    integrated, with Gauss-Legendre on the bracketed half-line. Without
    ``kink`` the whole line is integrated by Gauss-Hermite.
    """
    k = spec.k
    gh_x, gh_w = special.roots_hermitenorm(spec.nodes)
    gh_w = gh_w / math.sqrt(2.0 * math.pi)
    gl_x, gl_w = special.roots_legendre(spec.nodes)
    b = spec.bracket

    def whole_line(y_rest):
        vals = f(_insert(y_rest, k, gh_x).reshape(-1, y_rest.shape[1] + 1))
        return gh_w @ vals.reshape(len(gh_x), -1)

    def g(y_rest):
        y_rest = np.atleast_2d(np.asarray(y_rest, dtype=float))
        if kink is None:
            return whole_line(y_rest)
        root, increasing, status = locate_kink(kink, y_rest, spec)
        out = np.zeros(len(y_rest))
        free = status == 1
        if free.any():
            out[free] = whole_line(y_rest[free])
        active = status == 0
        if active.any():
            r = root[active]
            inc = increasing[active]
            a = np.where(inc, r, -b)
            c = np.where(inc, b, r)
            half = 0.5 * (c - a)
            nodes = 0.5 * (c + a)[None, :] + half[None, :] * gl_x[:, None]
            vals = f(_insert(y_rest[active], k, nodes).reshape(-1, y_rest.shape[1] + 1))
            vals = vals.reshape(len(gl_x), -1) * normpdf(nodes)
            out[active] = half * (gl_w @ vals)
        return out

    return g
