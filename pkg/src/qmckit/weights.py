"""Weight models, error-bound factors and weight calibration.

Subsets of coordinates are tuples of 0-based indices throughout.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

VARIANTS = ("product", "order_dependent", "pod", "spod", "explicit")
MAX_ENUM_DIM = 20


def _subset(u: Iterable[int]) -> tuple[int, ...]:
    return tuple(sorted(int(j) for j in u))


@dataclass(frozen=True)
class WeightModel:
    """Weights ``gamma_u`` for subsets ``u`` of ``{0, ..., dim-1}``.

    ``gamma_order[l]`` is the order-dependent factor for ``|u| = l`` (SPOD:
    indexed by the total smoothness order ``|nu_u|``). ``upsilon`` holds the
    per-coordinate factors, shape ``(dim,)`` or ``(dim, alpha)`` for SPOD.
    """

    variant: str
    dim: int
    gamma_order: tuple[float, ...] = ()
    upsilon: tuple = ()
    alpha: int = 1
    explicit: Mapping[tuple[int, ...], float] = field(default_factory=dict)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown weight variant {self.variant!r}")
        object.__setattr__(self, "gamma_order", tuple(float(g) for g in self.gamma_order))
        if self.variant == "spod":
            ups = tuple(tuple(float(v) for v in row) for row in self.upsilon)
            if any(len(row) != self.alpha for row in ups):
                raise ValueError("SPOD upsilon rows must have alpha entries")
        else:
            ups = tuple(float(v) for v in self.upsilon)
        object.__setattr__(self, "upsilon", ups)
        explicit = {_subset(u): float(g) for u, g in dict(self.explicit).items()}
        object.__setattr__(self, "explicit", explicit)

        if self.variant in ("product", "pod", "spod") and len(ups) != self.dim:
            raise ValueError(f"need {self.dim} upsilon entries, got {len(ups)}")
        if self.variant in ("order_dependent", "pod"):
            if len(self.gamma_order) < self.dim + 1:
                raise ValueError("gamma_order must cover orders 0..dim")
            if self.gamma_order[0] != 1.0 or (self.dim and self.gamma_order[1] != 1.0):
                raise ValueError("gamma_order must start with Gamma_0 = Gamma_1 = 1")
        if self.variant == "spod" and len(self.gamma_order) < self.alpha * self.dim + 1:
            raise ValueError("SPOD gamma_order must cover orders 0..alpha*dim")
        if any(g < 0 for g in self.gamma_order):
            raise ValueError("gamma_order entries must be non-negative")
        if self.variant == "spod":
            if any(v < 0 for row in ups for v in row):
                raise ValueError("SPOD upsilon entries must be non-negative")
        elif any(v < 0 for v in ups):
            raise ValueError("upsilon entries must be non-negative")
        if self.variant == "pod":
            if any(v <= 0 for v in ups) or any(a < b for a, b in zip(ups, ups[1:])):
                raise ValueError("POD upsilon must be positive and non-increasing")
        for u, g in explicit.items():
            if g < 0:
                raise ValueError("weights must be non-negative")
            if u and (u[0] < 0 or u[-1] >= self.dim):
                raise ValueError(f"subset {u} outside dimension {self.dim}")

    # -- constructors -----------------------------------------------------
    @classmethod
    def product(cls, upsilon) -> "WeightModel":
        ups = tuple(upsilon)
        return cls("product", len(ups), upsilon=ups)

    @classmethod
    def order_dependent(cls, gamma_order, dim: int) -> "WeightModel":
        return cls("order_dependent", dim, gamma_order=tuple(gamma_order)[: dim + 1])

    @classmethod
    def pod(cls, gamma_order, upsilon) -> "WeightModel":
        ups = tuple(upsilon)
        return cls("pod", len(ups), gamma_order=tuple(gamma_order)[: len(ups) + 1], upsilon=ups)

    @classmethod
    def spod(cls, gamma_order, upsilon) -> "WeightModel":
        ups = np.asarray(upsilon, dtype=float)
        dim, alpha = ups.shape
        return cls("spod", dim, gamma_order=tuple(gamma_order)[: alpha * dim + 1],
                   upsilon=tuple(map(tuple, ups)), alpha=alpha)

    @classmethod
    def from_explicit(cls, weights: Mapping, dim: int) -> "WeightModel":
        return cls("explicit", dim, explicit=dict(weights))

    # -- structure queries ----------------------------------------------------
    def pod_parts(self) -> tuple[np.ndarray, np.ndarray] | None:
        """``(Gamma, Upsilon)`` for models expressible as POD weights, else None."""
        if self.variant == "product":
            return np.ones(self.dim + 1), np.asarray(self.upsilon)
        if self.variant == "order_dependent":
            return np.asarray(self.gamma_order[: self.dim + 1]), np.ones(self.dim)
        if self.variant == "pod":
            return np.asarray(self.gamma_order[: self.dim + 1]), np.asarray(self.upsilon)
        return None

    def restrict(self, dim: int) -> "WeightModel":
        """The same model on the first ``dim`` coordinates."""
        if dim > self.dim:
            raise ValueError("cannot extend a weight model")
        if self.variant == "product":
            return WeightModel.product(self.upsilon[:dim])
        if self.variant == "order_dependent":
            return WeightModel.order_dependent(self.gamma_order, dim)
        if self.variant == "pod":
            return WeightModel.pod(self.gamma_order, self.upsilon[:dim])
        if self.variant == "spod":
            return WeightModel.spod(self.gamma_order, self.upsilon[:dim])
        sub = {u: g for u, g in self.explicit.items() if not u or u[-1] < dim}
        return WeightModel.from_explicit(sub, dim)

    # -- serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "dim": self.dim,
            "gamma_order": list(self.gamma_order),
            "upsilon": [list(r) for r in self.upsilon] if self.variant == "spod" else list(self.upsilon),
            "alpha": self.alpha,
            "explicit": {json.dumps(list(u)): g for u, g in self.explicit.items()},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "WeightModel":
        variant = d["variant"]
        ups = d.get("upsilon", [])
        dim = d.get("dim")
        if dim is None:
            if variant == "order_dependent":
                raise ValueError("order_dependent weights need 'dim'")
            dim = len(ups) if variant != "explicit" else 1 + max(
                (max(json.loads(k)) for k in d.get("explicit", {}) if json.loads(k)), default=-1)
        explicit = {tuple(json.loads(k)): float(v) for k, v in d.get("explicit", {}).items()}
        return cls(variant, int(dim), tuple(d.get("gamma_order", ())),
                   tuple(map(tuple, ups)) if variant == "spod" else tuple(ups),
                   int(d.get("alpha", 1)), explicit)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "WeightModel":
        return cls.from_dict(json.loads(text))


def weight_of(w: WeightModel, u: Iterable[int]) -> float:
    u = _subset(u)
    if not u:
        return 1.0
    if u[0] < 0 or u[-1] >= w.dim:
        raise IndexError(f"subset {u} outside dimension {w.dim}")
    if w.variant == "explicit":
        return w.explicit.get(u, 0.0)
    if w.variant == "spod":
        total = 0.0
        for nu in itertools.product(range(1, w.alpha + 1), repeat=len(u)):
            term = w.gamma_order[sum(nu)]
            for j, v in zip(u, nu):
                term *= w.upsilon[j][v - 1]
            total += term
        return total
    gamma, ups = w.pod_parts()
    return float(gamma[len(u)] * np.prod([ups[j] for j in u]))


# --------------------------------------------------------------------------
# zeta and the bound constants

_BERNOULLI_2K = (1 / 6, -1 / 30, 1 / 42, -1 / 30, 5 / 66, -691 / 2730, 7 / 6, -3617 / 510)


def zeta(a: float, terms: int = 64) -> float:
    """Riemann zeta for real ``a > 1``: partial sum plus Euler-Maclaurin tail."""
    if a <= 1:
        raise ValueError("zeta(a) diverges for a <= 1")
    N = terms
    k = np.arange(1, N, dtype=float)
    head = math.fsum(k ** (-a))
    tail = N ** (1 - a) / (a - 1) + 0.5 * N ** (-a)
    rising = a  # a (a+1) ... (a+2j-2)
    fact = 2.0  # (2j)!
    for j, b2j in enumerate(_BERNOULLI_2K, start=1):
        tail += b2j / fact * rising * N ** (-a - 2 * j + 1)
        rising *= (a + 2 * j - 1) * (a + 2 * j)
        fact *= (2 * j + 1) * (2 * j + 2)
    return head + tail


def theta(lam: float) -> float:
    """``2 zeta(2 lam) / (2 pi^2)^lam``; needs ``lam > 1/2``."""
    if lam <= 0.5:
        raise ValueError("theta(lambda) needs lambda > 1/2")
    return 2.0 * zeta(2.0 * lam) / (2.0 * math.pi**2) ** lam


def theta_alpha(alpha: int, lam: float) -> float:
    if int(alpha) != alpha or alpha < 2:
        raise ValueError("alpha must be an integer >= 2")
    if not 1.0 / alpha < lam <= 1.0:
        raise ValueError(f"lambda must lie in (1/{alpha}, 1]")
    base = 1.0 + 1.0 / (2.0 ** (alpha * lam) - 2.0)
    return 2.0 ** (alpha * lam * (alpha - 1) / 2.0) * (base**alpha - 1.0)


@dataclass(frozen=True)
class BoundParams:
    lam: float
    n: int
    s: int
    alpha: int | None = None
    theta_j: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.theta_j is not None and len(self.theta_j) != self.s:
            raise ValueError("need one theta_j per coordinate")


def elementary_symmetric(x: np.ndarray) -> np.ndarray:
    """``e[l] = sum over |u| = l of prod_{j in u} x_j`` for ``l = 0..len(x)``."""
    e = np.zeros(len(x) + 1)
    e[0] = 1.0
    for j, xj in enumerate(x, start=1):
        e[1 : j + 1] = e[1 : j + 1] + xj * e[:j]
    return e


def _enumerated_sum(w: WeightModel, s: int, lam: float, theta_vals: np.ndarray) -> float:
    if s > MAX_ENUM_DIM:
        raise ValueError(f"subset enumeration refused for s={s} > {MAX_ENUM_DIM}")
    if w.variant == "explicit":
        items = ((u, g) for u, g in w.explicit.items() if u and u[-1] < s)
    else:
        items = ((u, weight_of(w, u)) for r in range(1, s + 1)
                 for u in itertools.combinations(range(s), r))
    return math.fsum(g**lam * float(np.prod(theta_vals[list(u)])) for u, g in items if g > 0)


def weighted_subset_sum(w: WeightModel, s: int, lam: float, theta_vals) -> float:
    """``sum_{u != {}} gamma_u^lam prod_{j in u} theta_j`` over subsets of the first s coordinates."""
    theta_vals = np.broadcast_to(np.asarray(theta_vals, dtype=float), (s,))
    if s > w.dim:
        raise ValueError(f"weights cover {w.dim} coordinates, bound asked for {s}")
    if w.variant == "product":
        x = np.asarray(w.upsilon[:s]) ** lam * theta_vals
        return float(np.prod(1.0 + x) - 1.0)
    parts = w.pod_parts()
    if parts is not None:
        gamma, ups = parts
        e = elementary_symmetric(ups[:s] ** lam * theta_vals)
        return float(np.dot(gamma[1 : s + 1] ** lam, e[1:]))
    if w.variant == "spod" and lam == 1.0:
        # expand over the total order |nu_u|: poly coefficient k collects Gamma_k terms
        coeffs = np.zeros(w.alpha * s + 1)
        coeffs[0] = 1.0
        for j in range(s):
            factor = np.zeros(w.alpha + 1)
            factor[0] = 1.0
            factor[1:] = np.asarray(w.upsilon[j]) * theta_vals[j]
            coeffs = np.convolve(coeffs, factor)[: w.alpha * s + 1]
        return float(np.dot(np.asarray(w.gamma_order[1 : w.alpha * s + 1]), coeffs[1:]))
    return _enumerated_sum(w, s, lam, theta_vals)


def rms_bound_factor(w: WeightModel, bp: BoundParams) -> float:
    """Root-mean-square error bound factor for randomly shifted lattice rules.

    Uses ``theta(lam)`` for every coordinate unless ``bp.theta_j`` supplies
    per-coordinate values (unbounded-domain setting)."""
    if bp.theta_j is None:
        if not 0.5 < bp.lam <= 1.0:
            raise ValueError("lambda must lie in (1/2, 1]")
        th = theta(bp.lam)
    else:
        if not 0.0 < bp.lam <= 1.0:
            raise ValueError("lambda must lie in (0, 1]")
        th = np.asarray(bp.theta_j, dtype=float)
    total = weighted_subset_sum(w, bp.s, bp.lam, th)
    return (2.0 / bp.n * total) ** (1.0 / (2.0 * bp.lam))


def interlaced_bound_factor(w: WeightModel, bp: BoundParams) -> float:
    if bp.alpha is None:
        raise ValueError("interlaced bound needs alpha")
    th = theta_alpha(bp.alpha, bp.lam)
    total = weighted_subset_sum(w, bp.s, bp.lam, th)
    return (2.0 / bp.n * total) ** (1.0 / bp.lam)


# --------------------------------------------------------------------------
# calibration


@dataclass(frozen=True)
class CalibrationInput:
    B: Mapping[tuple[int, ...], float]
    lam: float
    A: Mapping[tuple[int, ...], float] | None = None

    def coefficients(self) -> list[tuple[tuple[int, ...], float, float]]:
        th = None
        rows = []
        given = {_subset(k): float(v) for k, v in (self.A or {}).items()}
        for u, b in self.B.items():
            u = _subset(u)
            if u in given:
                a = given[u]
            else:
                th = theta(self.lam) if th is None else th
                a = th ** len(u)
            if b < 0 or a < 0:
                raise ValueError("coefficients must be non-negative")
            if b > 0 and a == 0:
                raise ValueError(f"A_u = 0 with B_u > 0 for u={u}")
            rows.append((u, a, float(b)))
        return rows


def calibrate_weights(c: CalibrationInput) -> tuple[WeightModel, float]:
    """Weights minimising the product of the lattice bound and the norm bound.

    Returns the explicit weight model and the minimal constant ``C_gamma``."""
    lam = c.lam
    if not 0.5 < lam <= 1.0:
        raise ValueError("lambda must lie in (1/2, 1]")
    rows = c.coefficients()
    gammas = {}
    acc = []
    for u, a, b in rows:
        if b > 0:
            gammas[u] = (b / a) ** (1.0 / (1.0 + lam))
            acc.append(a ** (1.0 / (1.0 + lam)) * b ** (lam / (1.0 + lam)))
        elif u:
            gammas[u] = 0.0
    dim = 1 + max((u[-1] for u in gammas if u), default=-1)
    gammas.pop((), None)
    C = math.fsum(acc) ** ((1.0 + lam) / (2.0 * lam))
    return WeightModel.from_explicit(gammas, max(dim, 0)), C


def calibration_objective(gammas: Mapping, A: Mapping, B: Mapping, lam: float) -> float:
    """The product being minimised, evaluated for arbitrary positive weights."""
    first = math.fsum(gammas[u] ** lam * A[u] for u in B)
    second = math.fsum(B[u] / gammas[u] for u in B if B[u] > 0)
    return first ** (1.0 / (2.0 * lam)) * second**0.5


def pod_from_derivative_bounds(b, lam: float) -> WeightModel:
    """Calibrated POD weights for ``B_u = (|u|! prod_{j in u} b_j)^2`` and ``A_u = theta^|u|``.

    Equivalent to ``calibrate_weights`` on that input (closed form
    ``gamma_u = (|u|! prod b_j / sqrt(theta))^(2/(1+lam))``) without enumerating subsets."""
    b = np.asarray(b, dtype=float)
    if np.any(b <= 0) or np.any(np.diff(b) > 0):
        raise ValueError("derivative bounds must be positive and non-increasing")
    e = 2.0 / (1.0 + lam)
    orders = np.arange(len(b) + 1)
    gamma_order = np.exp(e * np.array([math.lgamma(k + 1.0) for k in orders]))
    return WeightModel.pod(gamma_order, (b / math.sqrt(theta(lam))) ** e)
