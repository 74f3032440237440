"""Lattice, shifted lattice, base-2 polynomial lattice and interlaced point sets."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SHIFT_GENERATOR = "numpy.PCG64"


@dataclass(frozen=True)
class GeneratingVector:
    """Rank-1 lattice generator: ``n`` points, integer components ``z``."""

    n: int
    z: tuple[int, ...]

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be a positive integer")
        z = tuple(int(v) for v in self.z)
        object.__setattr__(self, "z", z)
        for zj in z:
            if self.n > 1 and not 1 <= zj < self.n:
                raise ValueError(f"component {zj} outside 1..{self.n - 1}")
            if math.gcd(zj, self.n) != 1:
                raise ValueError(f"component {zj} is not coprime with n={self.n}")

    @property
    def s(self) -> int:
        return len(self.z)


@dataclass(frozen=True)
class RandomShift:
    delta: tuple[float, ...]
    seed: int | None = None

    def __post_init__(self):
        delta = tuple(float(v) for v in self.delta)
        if any(not 0.0 <= v < 1.0 for v in delta):
            raise ValueError("shift components must lie in [0, 1)")
        object.__setattr__(self, "delta", delta)

    @classmethod
    def from_seed(cls, s: int, seed: int) -> "RandomShift":
        rng = np.random.Generator(np.random.PCG64(seed))
        return cls(tuple(rng.random(s)), seed)

    @property
    def s(self) -> int:
        return len(self.delta)


def draw_shifts(s: int, count: int, seed: int) -> np.ndarray:
    """``count`` independent uniform shifts in [0,1)^s, reproducible from ``seed``."""
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.random((count, s))


@dataclass(frozen=True, eq=False)
class PointSet:
    """Immutable ``n x s`` point matrix in [0,1).

    Digital point sets also carry the integer digit view: ``digits[i, j]`` holds
    the first ``depth`` base-2 digits of coordinate ``j`` of point ``i``, so
    ``coords == digits / 2**depth``.
    """

    coords: np.ndarray
    digits: np.ndarray | None = None
    depth: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float, copy=True)
        if coords.ndim != 2:
            raise ValueError("coords must be a 2-d array")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        if self.digits is not None:
            digits = np.array(self.digits, dtype=np.uint64, copy=True)
            if digits.shape != coords.shape:
                raise ValueError("digit view shape mismatch")
            digits.setflags(write=False)
            object.__setattr__(self, "digits", digits)
            if self.depth is None:
                raise ValueError("digit view needs a depth")

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def s(self) -> int:
        return self.coords.shape[1]

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            for row in self.coords:
                fh.write(",".join("%.17g" % v for v in row) + "\n")

    def to_binary(self, path) -> None:
        """Header ``<qqq`` (n, s, digits; digits=-1 for non-digital sets), then
        row-major float64 coordinates."""
        depth = -1 if self.depth is None else self.depth
        with open(path, "wb") as fh:
            fh.write(struct.pack("<qqq", self.n, self.s, depth))
            fh.write(np.ascontiguousarray(self.coords, dtype="<f8").tobytes())

    @classmethod
    def from_binary(cls, path) -> "PointSet":
        raw = Path(path).read_bytes()
        n, s, depth = struct.unpack_from("<qqq", raw)
        coords = np.frombuffer(raw, dtype="<f8", offset=24).reshape(n, s)
        if depth < 0:
            return cls(coords)
        digits = np.rint(coords * 2.0**depth).astype(np.uint64)
        return cls(coords, digits, depth)


def lattice_indices(gv: GeneratingVector, start: int = 1, stop: int | None = None) -> np.ndarray:
    """Integer residues ``i*z mod n`` for ``i = start..stop`` (inclusive)."""
    stop = gv.n if stop is None else stop
    i = np.arange(start, stop + 1, dtype=np.int64)[:, None]
    z = np.asarray(gv.z, dtype=np.int64)[None, :]
    return (i * z) % gv.n


def lattice_points(gv: GeneratingVector, shift: RandomShift | np.ndarray | None = None) -> PointSet:
    """Points ``frac(i z / n + delta)`` for ``i = 1..n``; row ``n`` is the pure shift."""
    if gv.n == 0:
        raise ValueError("n must be positive")
    pts = lattice_indices(gv) / gv.n
    meta = {"n": gv.n, "s": gv.s}
    if shift is not None:
        delta = np.asarray(shift.delta if isinstance(shift, RandomShift) else shift, dtype=float)
        if delta.shape != (gv.s,):
            raise ValueError(f"shift dimension {delta.shape} does not match s={gv.s}")
        pts = apply_shift(pts, delta)
        if isinstance(shift, RandomShift):
            meta.update(seed=shift.seed, generator=SHIFT_GENERATOR)
    return PointSet(pts, meta=meta)


def apply_shift(points: np.ndarray, delta: np.ndarray) -> np.ndarray:
    out = points + delta
    out -= np.floor(out)
    # floating wrap-around can land exactly on 1.0
    out[out >= 1.0] = 0.0
    return out


# --------------------------------------------------------------------------
# GF(2) polynomials are stored as Python ints, bit k = coefficient of x^k.


def gf2_degree(p: int) -> int:
    return p.bit_length() - 1


def gf2_mulmod(a: int, b: int, p: int) -> int:
    m = gf2_degree(p)
    result = 0
    while b:
        if b & 1:
            result ^= a
        b >>= 1
        a <<= 1
        if (a >> m) & 1:
            a ^= p
    return result


def gf2_mod(a: int, p: int) -> int:
    m = gf2_degree(p)
    while a and gf2_degree(a) >= m:
        a ^= p << (gf2_degree(a) - m)
    return a


def gf2_is_irreducible(p: int) -> bool:
    """Trial division by every polynomial of degree 1..deg(p)/2."""
    m = gf2_degree(p)
    if m < 1:
        return False
    if m == 1:
        return True
    if not p & 1:
        return False
    for d in range(2, 1 << (m // 2 + 1)):
        if gf2_mod(p, d) == 0:
            return False
    return True


def find_irreducible(m: int) -> int:
    """Smallest irreducible polynomial of degree ``m`` over GF(2)."""
    if m < 1:
        raise ValueError("degree must be at least 1")
    for p in range(1 << m, 1 << (m + 1)):
        if gf2_is_irreducible(p):
            return p
    raise ArithmeticError(f"no irreducible polynomial of degree {m}")  # pragma: no cover


@dataclass(frozen=True)
class PolynomialLatticeRule:
    m: int
    p: int
    q: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "q", tuple(int(v) for v in self.q))
        if gf2_degree(self.p) != self.m:
            raise ValueError(f"modulus degree {gf2_degree(self.p)} != m={self.m}")
        if not gf2_is_irreducible(self.p):
            raise ValueError(f"modulus {self.p:#b} is reducible")
        for qj in self.q:
            if qj == 0:
                raise ValueError("generating polynomial must be non-zero")
            if gf2_degree(qj) >= self.m:
                raise ValueError("generating polynomial degree must be < m")

    @property
    def n(self) -> int:
        return 1 << self.m

    @property
    def s(self) -> int:
        return len(self.q)


def laurent_digits(r: int, p: int) -> int:
    """First ``m`` Laurent digits of ``r(x)/p(x)`` packed as an m-bit integer
    (most significant bit = coefficient of ``x^-1``)."""
    m = gf2_degree(p)
    state, out = r, 0
    for _ in range(m):
        state <<= 1
        bit = (state >> m) & 1
        out = (out << 1) | bit
        if bit:
            state ^= p
    return out


def generator_columns(q: int, p: int) -> list[int]:
    """Images of the monomials ``x^b`` (b < m) under ``i -> digits(i q mod p / p)``.

    The map is GF(2)-linear in ``i``, so these columns determine every point."""
    m = gf2_degree(p)
    cols = []
    term = gf2_mod(q, p)
    for _ in range(m):
        cols.append(laurent_digits(term, p))
        term = gf2_mulmod(term, 2, p)
    return cols


def xor_span(cols: np.ndarray) -> np.ndarray:
    """All XOR combinations indexed by the bits of ``i``.

    ``cols`` has shape ``(..., m)``; the result has shape ``(..., 2**m)`` with
    ``out[..., i] = XOR of cols[..., b] over set bits b of i``."""
    cols = np.asarray(cols, dtype=np.uint64)
    m = cols.shape[-1]
    out = np.zeros(cols.shape[:-1] + (1 << m,), dtype=np.uint64)
    for b in range(m):
        half = 1 << b
        out[..., half : 2 * half] = out[..., :half] ^ cols[..., b : b + 1]
    return out


def poly_lattice_digits(plr: PolynomialLatticeRule) -> np.ndarray:
    """Integer digit matrix (n x s) with ``m`` digits per coordinate; row i is point i."""
    cols = np.array([generator_columns(qj, plr.p) for qj in plr.q], dtype=np.uint64)
    return xor_span(cols).T.copy()


def poly_lattice_points(plr: PolynomialLatticeRule) -> PointSet:
    digits = poly_lattice_digits(plr)
    coords = digits.astype(float) / float(1 << plr.m)
    return PointSet(coords, digits, plr.m, meta={"m": plr.m, "p": plr.p, "q": list(plr.q)})


def interlace_digits(digits: np.ndarray, depth: int, alpha: int) -> np.ndarray:
    """Round-robin merge of ``depth``-digit integers from each block of ``alpha`` columns."""
    digits = np.asarray(digits, dtype=np.uint64)
    if digits.shape[1] % alpha:
        raise ValueError(f"column count {digits.shape[1]} not divisible by alpha={alpha}")
    if alpha * depth > 64:
        raise ValueError("interlaced digit depth exceeds 64 bits")
    n, cols = digits.shape
    out = np.zeros((n, cols // alpha), dtype=np.uint64)
    one = np.uint64(1)
    for k in range(cols // alpha):
        acc = np.zeros(n, dtype=np.uint64)
        for d in range(depth):
            for r in range(alpha):
                bit = (digits[:, k * alpha + r] >> np.uint64(depth - 1 - d)) & one
                acc = (acc << one) | bit
        out[:, k] = acc
    return out


def interlace(ps: PointSet, alpha: int) -> PointSet:
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    if ps.s % alpha:
        raise ValueError(f"column count {ps.s} not divisible by alpha={alpha}")
    if ps.digits is None:
        raise ValueError("interlacing needs a digital point set")
    if alpha == 1:
        return ps
    depth = alpha * ps.depth
    digits = interlace_digits(ps.digits, ps.depth, alpha)
    coords = digits.astype(float) / 2.0**depth
    return PointSet(coords, digits, depth, meta={**ps.meta, "alpha": alpha})


def deinterlace_digits(digits: np.ndarray, depth: int, alpha: int) -> np.ndarray:
    """Inverse of :func:`interlace_digits`; ``depth`` is the per-input digit count."""
    digits = np.asarray(digits, dtype=np.uint64)
    n, s = digits.shape
    out = np.zeros((n, s * alpha), dtype=np.uint64)
    one = np.uint64(1)
    total = alpha * depth
    for k in range(s):
        for d in range(depth):
            for r in range(alpha):
                pos = total - 1 - (d * alpha + r)
                bit = (digits[:, k] >> np.uint64(pos)) & one
                out[:, k * alpha + r] |= bit << np.uint64(depth - 1 - d)
    return out
