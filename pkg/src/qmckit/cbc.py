"""Component-by-component construction of lattice and interlaced polynomial lattice rules.

The lattice criterion is the shift-averaged worst-case error of the weighted
unanchored Sobolev space,

    e^2(z) = sum_{u != {}} gamma_u (1/n) sum_i prod_{j in u} B2({i z_j / n}),

with ``B2(x) = x^2 - x + 1/6``. Candidate scans reduce to one product
``T(z) = sum_i B2({i z / n}) v_i`` per candidate; the fast mode evaluates all
of them at once by reordering candidates and points along the unit group
(cyclic for prime n, ``{+-5^a}`` for n = 2^m) so the kernel becomes circulant.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .points import (GeneratingVector, PointSet, PolynomialLatticeRule, find_irreducible,
                     generator_columns, interlace, poly_lattice_points, xor_span)
from .weights import WeightModel, weight_of

MODES = ("naive", "fast")


# --------------------------------------------------------------------------
# number theory helpers


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return False
        f += 2
    return True


def prime_factors(n: int) -> list[int]:
    out, f = [], 2
    while f * f <= n:
        if n % f == 0:
            out.append(f)
            while n % f == 0:
                n //= f
        f += 1
    if n > 1:
        out.append(n)
    return out


def primitive_root(n: int) -> int:
    """Smallest generator of the multiplicative group modulo a prime ``n``."""
    if not is_prime(n):
        raise ValueError(f"{n} is not prime")
    if n == 2:
        return 1
    factors = prime_factors(n - 1)
    for g in range(2, n):
        if all(pow(g, (n - 1) // f, n) != 1 for f in factors):
            return g
    raise ArithmeticError("no primitive root")  # pragma: no cover


def is_power_of_two(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def bernoulli2(x):
    return x * x - x + 1.0 / 6.0


def lattice_kernel(n: int) -> np.ndarray:
    """``B2(k/n)`` for ``k = 0..n-1``."""
    return bernoulli2(np.arange(n) / n)


# --------------------------------------------------------------------------
# criterion


def _order_state(gamma: np.ndarray, ups: np.ndarray, omega_cols: list[np.ndarray], n: int):
    """Per-point elementary symmetric sums p[l, i] over the given columns."""
    d = len(omega_cols)
    p = np.zeros((d + 1, n))
    p[0] = 1.0
    for j, col in enumerate(omega_cols):
        p[1 : j + 2] = p[1 : j + 2] + ups[j] * col * p[: j + 1]
    return p


def wce_sq(gv: GeneratingVector, w: WeightModel) -> float:
    """Squared shift-averaged worst-case error of the lattice rule ``gv``."""
    n, s = gv.n, gv.s
    if s > w.dim:
        raise ValueError(f"weights cover {w.dim} coordinates, rule has {s}")
    omega = lattice_kernel(n)
    i = np.arange(n, dtype=np.int64)
    cols = [omega[(i * zj) % n] for zj in gv.z]
    if w.variant == "product":
        ups = np.asarray(w.upsilon[:s])
        prod = np.ones(n)
        for gj, col in zip(ups, cols):
            prod *= 1.0 + gj * col
        return float(prod.mean() - 1.0)
    parts = w.pod_parts()
    if parts is not None:
        gamma, ups = parts
        p = _order_state(gamma, ups, cols, n)
        return float(np.dot(gamma[1 : s + 1], p[1:].mean(axis=1)))
    if s > 20:
        raise ValueError("subset enumeration refused for s > 20")
    total = 0.0
    for r in range(1, s + 1):
        for u in itertools.combinations(range(s), r):
            g = weight_of(w, u)
            if g:
                total += g * np.prod([cols[j] for j in u], axis=0).mean()
    return float(total)


# --------------------------------------------------------------------------
# candidate scans


def candidates(n: int) -> np.ndarray:
    """Admissible components up to ``n/2``; ``z`` and ``n - z`` give equal criteria."""
    c = [z for z in range(1, n // 2 + 1) if math.gcd(z, n) == 1]
    return np.asarray(c if c else [1], dtype=np.int64)


def naive_scan(n: int, cand: np.ndarray, v: np.ndarray, block: int = 256) -> np.ndarray:
    """``T(z) = sum_i B2({i z/n}) v_i`` for every candidate, by dense products."""
    omega = lattice_kernel(n)
    i = np.arange(n, dtype=np.int64)
    out = np.empty(len(cand))
    for lo in range(0, len(cand), block):
        zc = cand[lo : lo + block, None]
        out[lo : lo + block] = omega[(zc * i[None, :]) % n] @ v
    return out


def _correlate(c_hat: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Cyclic correlation ``r[a] = sum_b c[a+b] x[b]`` given ``c_hat = fft(c)``."""
    return np.fft.irfft(c_hat * np.conj(np.fft.rfft(x)), n=len(x))


class FastScanner:
    """Evaluates ``T(z)`` for all candidates in O(n log n) via circulant structure."""

    def __init__(self, n: int):
        if not (is_prime(n) or is_power_of_two(n)) or n < 2:
            raise ValueError(f"fast scan needs prime n or n = 2^m, got {n}")
        self.n = n
        self.cand = candidates(n)
        if is_prime(n) and n > 2:
            self._setup_prime()
        else:
            self._setup_pow2()

    def _setup_prime(self):
        n = self.n
        g = primitive_root(n)
        gpow = np.empty(n - 1, dtype=np.int64)
        gpow[0] = 1
        for k in range(1, n - 1):
            gpow[k] = gpow[k - 1] * g % n
        self.gpow = gpow
        self.c_hat = np.fft.rfft(bernoulli2(gpow / n))
        log = np.empty(n, dtype=np.int64)
        log[gpow] = np.arange(n - 1)
        self.cand_exp = log[self.cand]

    def _setup_pow2(self):
        n = self.n
        m = n.bit_length() - 1
        self.levels = []
        # points i = 2^t u with u odd, grouped by t; modulus N = 2^(m-t)
        for t in range(m):
            N = n >> t
            if N <= 2:
                self.levels.append((t, N, None, None))
                continue
            L = N // 4
            p5 = np.empty(L, dtype=np.int64)
            p5[0] = 1
            for k in range(1, L):
                p5[k] = p5[k - 1] * 5 % N
            self.levels.append((t, N, p5, np.fft.rfft(bernoulli2(p5 / N))))
        # exponent a with z = +-5^a mod n for each candidate
        if n >= 8:
            L = n // 4
            log = np.full(n, -1, dtype=np.int64)
            p = 1
            for k in range(L):
                log[p] = k
                log[n - p] = k
                p = p * 5 % n
            self.cand_exp = log[self.cand]
        else:
            self.cand_exp = np.zeros(len(self.cand), dtype=np.int64)

    def scan(self, v: np.ndarray) -> np.ndarray:
        n = self.n
        base = bernoulli2(0.0) * v[0]
        if hasattr(self, "gpow"):
            r = _correlate(self.c_hat, v[self.gpow])
            return base + r[self.cand_exp]
        out = np.full(len(self.cand), base)
        for t, N, p5, c_hat in self.levels:
            if p5 is None:
                # N = 2: single unit u = 1, point 2^t, value B2(1/2)
                out += bernoulli2(0.5) * v[1 << t]
                continue
            x = v[(p5 << t)] + v[((N - p5) << t)]
            r = _correlate(c_hat, x)
            out += r[self.cand_exp % (N // 4)]
        return out


def _argmin(values: np.ndarray, cand: np.ndarray, tol: float) -> int:
    """Index of the smallest candidate whose value is within ``tol`` of the minimum."""
    best = values.min()
    idx = np.flatnonzero(values <= best + tol)
    return int(idx[np.argmin(cand[idx])])


# --------------------------------------------------------------------------
# lattice CBC


@dataclass
class CbcConfig:
    n: int
    s: int
    weights: WeightModel
    mode: str = "fast"

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("CBC needs n >= 2")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.s > self.weights.dim:
            raise ValueError(f"weights cover {self.weights.dim} coordinates, need {self.s}")


@dataclass
class CbcTrace:
    z: list[int] = field(default_factory=list)
    criterion: list[float] = field(default_factory=list)
    mode: str = "naive"
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"z": self.z, "criterion": self.criterion, "mode": self.mode,
                "warnings": self.warnings}


def fast_supported(n: int) -> bool:
    return n >= 2 and (is_prime(n) or is_power_of_two(n))


def cbc_lattice(cfg: CbcConfig) -> tuple[GeneratingVector, CbcTrace]:
    n, s, w = cfg.n, cfg.s, cfg.weights
    trace = CbcTrace(mode=cfg.mode)
    pod = w.pod_parts()
    if cfg.mode == "fast" and not fast_supported(n):
        msg = f"fast CBC unsupported for n={n}; fell back to naive"
        warnings.warn(msg)
        trace.warnings.append(msg)
        trace.mode = "naive"
    if cfg.mode == "fast" and pod is None:
        msg = f"fast CBC needs product/order-dependent/POD weights; fell back to naive"
        warnings.warn(msg)
        trace.warnings.append(msg)
        trace.mode = "naive"

    if pod is None:
        return _cbc_general(n, s, w, trace)

    if trace.mode == "fast":
        scanner = FastScanner(n)
        cand = scanner.cand
        scan = scanner.scan
    else:
        cand = candidates(n)
        scan = lambda v: naive_scan(n, cand, v)  # noqa: E731

    omega = lattice_kernel(n)
    idx = np.arange(n, dtype=np.int64)
    gamma, ups = pod
    product = w.variant == "product"
    if product:
        q = np.ones(n)
    else:
        p = np.zeros((s + 1, n))
        p[0] = 1.0
    z = []
    for d in range(s):
        if product:
            const = q.mean() - 1.0
            coef, v = ups[d] / n, q
        else:
            const = float(np.dot(gamma[1 : d + 1], p[1 : d + 1].mean(axis=1)))
            v = gamma[1 : d + 2] @ p[: d + 1]
            coef = ups[d] / n
        values = const + coef * scan(v)
        tol = 1e-12 * (abs(const) + 1.0 + abs(coef) * np.abs(v).sum())
        k = _argmin(values, cand, tol)
        zd = int(cand[k])
        z.append(zd)
        trace.z.append(zd)
        trace.criterion.append(float(values[k]))
        col = omega[(idx * zd) % n]
        if product:
            q = q * (1.0 + ups[d] * col)
        else:
            p[1 : d + 2] = p[1 : d + 2] + ups[d] * col * p[: d + 1]
    return GeneratingVector(n, tuple(z)), trace


def _cbc_general(n: int, s: int, w: WeightModel, trace: CbcTrace):
    cand = candidates(n)
    z: list[int] = []
    for d in range(s):
        values = np.array([wce_sq(GeneratingVector(n, tuple(z + [int(c)])), w.restrict(d + 1)
                                  if w.variant != "explicit" else w) for c in cand])
        k = _argmin(values, cand, 1e-12 * (1.0 + np.abs(values).max()))
        z.append(int(cand[k]))
        trace.z.append(int(cand[k]))
        trace.criterion.append(float(values[k]))
    return GeneratingVector(n, tuple(z)), trace


# --------------------------------------------------------------------------
# interlaced polynomial lattice CBC


def walsh_kernel_table(m: int, alpha: int) -> np.ndarray:
    """Per-coordinate digital kernel on the ``2**m`` digit values.

    alpha = 1: ``1/6 - 2^(floor(log2 x) - 1)`` (digitally shifted Sobolev kernel).
    alpha >= 2: ``sum_{k>=1} 2^(-alpha * mu1(k)) wal_k(x)`` with ``mu1(k)`` the
    position of the leading bit of ``k``; at ``x = 0`` this is ``1/(2^alpha - 2)``.
    """
    d = np.arange(1 << m)
    lead = np.zeros(1 << m, dtype=np.int64)
    lead[1:] = m - np.floor(np.log2(d[1:])).astype(np.int64)  # x in [2^-t, 2^-t+1)
    if alpha == 1:
        out = 1.0 / 6.0 - 2.0 ** (-lead - 1.0)
        out[0] = 1.0 / 6.0
        return out
    beta = float(alpha)
    r = 2.0 ** (1.0 - beta)
    # sum_{a=1}^{t-1} 2^(a-1-beta a) = 2^-beta (1 - r^(t-1)) / (1 - r)
    out = 2.0**-beta * (1.0 - r ** (lead - 1.0)) / (1.0 - r) - 2.0 ** (lead - 1.0 - beta * lead)
    out[0] = 1.0 / (2.0**beta - 2.0)
    return out


def _interlace_scale(alpha: int) -> float:
    return 1.0 if alpha == 1 else 2.0 ** (alpha * (alpha - 1) / 2.0)


def _spod_parts(w: WeightModel, alpha: int):
    """(Gamma by total order, Upsilon[j, nu-1]) for the CBC weight recursion."""
    if w.variant == "spod":
        if w.alpha != alpha:
            raise ValueError(f"SPOD weights built for alpha={w.alpha}, rule uses {alpha}")
        return np.asarray(w.gamma_order), np.asarray(w.upsilon)
    parts = w.pod_parts()
    if parts is None:
        raise ValueError("interlaced CBC supports product, order-dependent, POD and SPOD weights")
    gamma, ups = parts
    # POD viewed as SPOD with only nu = 1 active
    u = np.zeros((w.dim, alpha))
    u[:, 0] = ups
    big = np.zeros(alpha * w.dim + 1)
    big[: len(gamma)] = gamma
    return big, u


@dataclass
class InterlacedRule:
    rule: PolynomialLatticeRule
    alpha: int
    s: int
    trace: CbcTrace

    @property
    def n(self) -> int:
        return self.rule.n

    def points(self) -> PointSet:
        return interlace(poly_lattice_points(self.rule), self.alpha)


def _digit_criterion_state(gamma, ups, D_cols, n):
    """Order polynomial coefficients P[k, i] = sum over u, nu_u with |nu_u| = k."""
    alpha = ups.shape[1]
    kmax = alpha * len(D_cols)
    P = np.zeros((kmax + 1, n))
    P[0] = 1.0
    for j, Dj in enumerate(D_cols):
        new = P.copy()
        for nu in range(1, alpha + 1):
            new[nu:] += ups[j, nu - 1] * Dj * P[: kmax + 1 - nu]
        P = new
    return P


def interlaced_criterion(digits: np.ndarray, m: int, alpha: int, w: WeightModel) -> float:
    """Figure of merit of an ``alpha*s``-dimensional polynomial lattice digit matrix."""
    table = walsh_kernel_table(m, alpha)
    scale = _interlace_scale(alpha)
    n, cols = digits.shape
    s = cols // alpha
    gamma, ups = _spod_parts(w, alpha)
    D = []
    for j in range(s):
        prod = np.ones(n)
        for r in range(alpha):
            prod *= 1.0 + table[digits[:, j * alpha + r].astype(np.int64)]
        D.append(scale * (prod - 1.0))
    P = _digit_criterion_state(gamma, ups, D, n)
    return float(np.dot(gamma[1 : len(P)], P[1:].mean(axis=1)))


def cbc_interlaced(m: int, s: int, alpha: int, w: WeightModel,
                   p: int | None = None, block: int = 128) -> InterlacedRule:
    """CBC over the ``alpha*s`` polynomial components; ties go to the smallest polynomial."""
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    if s > w.dim:
        raise ValueError(f"weights cover {w.dim} coordinates, need {s}")
    p = find_irreducible(m) if p is None else p
    n = 1 << m
    table = walsh_kernel_table(m, alpha)
    scale = _interlace_scale(alpha)
    gamma, ups = _spod_parts(w, alpha)
    kmax = alpha * s
    gam = np.zeros(kmax + 1)
    gam[: min(len(gamma), kmax + 1)] = gamma[: kmax + 1]

    cand = np.arange(1, n, dtype=np.int64)
    cand_cols = np.array([generator_columns(int(q), p) for q in cand], dtype=np.uint64)

    P = np.zeros((kmax + 1, n))
    P[0] = 1.0
    q_chosen: list[int] = []
    trace = CbcTrace(mode="naive")
    for j in range(s):
        # w_i: coefficient of D_j(i) in the per-point criterion
        coeff = np.zeros(n)
        for nu in range(1, alpha + 1):
            coeff += ups[j, nu - 1] * (gam[nu : nu + kmax + 1 - nu] @ P[: kmax + 1 - nu])
        base = float(np.dot(gam[1:], P[1:].mean(axis=1)))
        partial = np.ones(n)
        for r in range(alpha):
            values = np.empty(len(cand))
            weighted = coeff * partial
            for lo in range(0, len(cand), block):
                dig = xor_span(cand_cols[lo : lo + block]).astype(np.int64)
                om = table[dig]
                # D = scale (partial (1 + om) - 1)
                values[lo : lo + block] = base + scale * (
                    om @ weighted + weighted.sum() - coeff.sum()) / n
            tol = 1e-12 * (abs(base) + 1.0 + scale * np.abs(coeff).sum() / n)
            k = _argmin(values, cand, tol)
            qk = int(cand[k])
            q_chosen.append(qk)
            trace.z.append(qk)
            trace.criterion.append(float(values[k]))
            col = table[xor_span(np.array(generator_columns(qk, p), dtype=np.uint64)).astype(np.int64)]
            partial = partial * (1.0 + col)
        Dj = scale * (partial - 1.0)
        new = P.copy()
        for nu in range(1, alpha + 1):
            new[nu:] += ups[j, nu - 1] * Dj * P[: kmax + 1 - nu]
        P = new
    rule = PolynomialLatticeRule(m, p, tuple(q_chosen))
    return InterlacedRule(rule, alpha, s, trace)


# --------------------------------------------------------------------------
# plain-text generating vector files


def save_vector(gv: GeneratingVector, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{gv.n} {gv.s}\n")
        fh.write(" ".join(str(z) for z in gv.z) + "\n")


def load_vector(path) -> GeneratingVector:
    with open(path) as fh:
        tokens = fh.read().split()
    if len(tokens) < 2:
        raise ValueError(f"{path}: expected 'n s' header")
    n, s = int(tokens[0]), int(tokens[1])
    z = [int(t) for t in tokens[2 : 2 + s]]
    if len(z) != s:
        raise ValueError(f"{path}: expected {s} components, found {len(z)}")
    return GeneratingVector(n, tuple(z))
