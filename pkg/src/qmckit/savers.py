"""Cost savers: multilevel estimation, the multivariate decomposition method
(anchored components over an active set) and fast lattice matrix-vector products."""

from __future__ import annotations

import heapq
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .cbc import is_prime, primitive_root
from .estimate import Estimate, shifted_lattice_estimate
from .option import AsianOption, CovarianceOperator, payoff
from .points import GeneratingVector
from .transforms import map_points

# --------------------------------------------------------------------------
# multilevel


@dataclass
class LevelFamily:
    """Evaluators ``f_l`` on nested unit cubes: ``f_l`` reads the first ``dims[l]`` coordinates."""

    evaluators: list[Callable[[np.ndarray], np.ndarray]]
    dims: list[int]
    costs: list[float]

    def __post_init__(self):
        if not (len(self.evaluators) == len(self.dims) == len(self.costs)):
            raise ValueError("evaluators, dims and costs must have equal length")
        if any(b < a for a, b in zip(self.dims, self.dims[1:])):
            raise ValueError("level dimensions must be non-decreasing")

    @property
    def max_level(self) -> int:
        return len(self.evaluators) - 1

    def difference(self, level: int) -> Callable[[np.ndarray], np.ndarray]:
        """``f_l - f_{l-1}`` with ``f_{-1} = 0``."""
        fine = self.evaluators[level]
        if level == 0:
            return lambda u: fine(u[:, : self.dims[0]])
        coarse, dc = self.evaluators[level - 1], self.dims[level - 1]
        return lambda u: fine(u) - coarse(u[:, :dc])


def level_seeds(seed: int, levels: int) -> list[int]:
    """Independent per-level seeds spawned from one root seed."""
    children = np.random.SeedSequence(seed).spawn(levels)
    return [int(c.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1)) for c in children]


def multilevel_estimate(fam: LevelFamily, L: int, rules: Sequence[GeneratingVector], shifts: int,
                        seed: int = 0, shared_shifts: bool = False, threads: int = 1) -> Estimate:
    """Sum of independent shifted-lattice estimates of the level differences.

    ``shared_shifts`` reuses one seed for every level, so that identical rules
    make the sum telescope exactly to the estimate of ``f_L``."""
    if not 0 <= L <= fam.max_level:
        raise ValueError(f"L must lie in [0, {fam.max_level}]")
    if len(rules) < L + 1:
        raise ValueError("need one rule per level")
    seeds = [seed] * (L + 1) if shared_shifts else level_seeds(seed, L + 1)
    parts = []
    for lev in range(L + 1):
        if rules[lev].s != fam.dims[lev]:
            raise ValueError(f"rule for level {lev} has dimension {rules[lev].s}, need {fam.dims[lev]}")
        parts.append(shifted_lattice_estimate(fam.difference(lev), rules[lev], shifts, seeds[lev],
                                              threads))
    value = math.fsum(p.value for p in parts)
    se = None
    if all(p.std_error is not None for p in parts):
        se = math.sqrt(math.fsum(p.std_error**2 for p in parts))
    values = [float(v) for v in np.sum([p.shift_values for p in parts], axis=0)]
    est = Estimate(value, values, se, sum(r.n for r in rules[: L + 1]), shifts,
                   evaluations=sum(p.evaluations for p in parts),
                   wall_time=sum(p.wall_time for p in parts))
    est.meta.update(seeds=seeds, levels=[{"level": i, "n": rules[i].n, "value": p.value,
                                          "std_error": p.std_error} for i, p in enumerate(parts)])
    return est


def allocate_levels(V: Sequence[float], c: Sequence[float], eps: float,
                    round_pow2: bool = True) -> list:
    """Lagrange-optimal sizes ``n_l ∝ sqrt(V_l / c_l)`` with ``sum V_l / n_l <= (eps/2)^2``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    V = np.asarray(V, dtype=float)
    c = np.asarray(c, dtype=float)
    if V.shape != c.shape or np.any(V < 0) or np.any(c <= 0):
        raise ValueError("need matching non-negative variances and positive costs")
    raw = (2.0 / eps) ** 2 * np.sqrt(V / c) * np.sum(np.sqrt(V * c))
    if not round_pow2:
        return [float(x) for x in raw]
    return [1 << max(0, math.ceil(math.log2(x))) if x > 1 else 1 for x in raw]


def option_level_family(opt: AsianOption, steps: Sequence[int] = (2, 4, 8, 16)) -> LevelFamily:
    """Asian option with ``s_l`` monitoring dates per level, coupled by the Brownian bridge.

    The bridge fixes the coarse dates first, so the leading ``s_l`` inputs of
    a finer path reproduce the coarse path exactly."""
    for a, b in zip(steps, steps[1:]):
        if b % a or (b // a) & (b // a - 1):
            raise ValueError("level step counts must double")

    def make(s):
        o = AsianOption(opt.T, s, opt.K, opt.S0, opt.r, opt.sigma)
        cov = CovarianceOperator("brownian_bridge", s, opt.T)
        return lambda u: payoff(o, cov, map_points(u))

    return LevelFamily([make(s) for s in steps], list(steps), [float(s) for s in steps])


# --------------------------------------------------------------------------
# multivariate decomposition method

MAX_ANCHORED_ORDER = 16
TIE_RTOL = 1e-12


def _subsets(u: tuple[int, ...]):
    for k in range(len(u) + 1):
        yield from itertools.combinations(u, k)


def anchored_component(f: Callable[[np.ndarray], np.ndarray], u: Sequence[int],
                       anchor: np.ndarray, y_u: np.ndarray) -> np.ndarray:
    """``f_u(y_u) = sum_{v ⊆ u} (-1)^{|u|-|v|} f(y_v; a)`` for rows ``y_u`` (shape ``(N, |u|)``)."""
    u = tuple(u)
    if len(u) > MAX_ANCHORED_ORDER:
        raise ValueError(f"|u| = {len(u)} exceeds the cap of {MAX_ANCHORED_ORDER}")
    anchor = np.asarray(anchor, dtype=float)
    y_u = np.atleast_2d(np.asarray(y_u, dtype=float))
    if y_u.shape[1] != len(u):
        raise ValueError(f"expected {len(u)} columns, got {y_u.shape[1]}")
    pos = {j: k for k, j in enumerate(u)}
    out = np.zeros(len(y_u))
    for v in _subsets(u):
        pts = np.tile(anchor, (len(y_u), 1))
        for j in v:
            pts[:, j] = y_u[:, pos[j]]
        out += (-1) ** (len(u) - len(v)) * f(pts)
    return out


@dataclass
class ActiveSet:
    sets: list[tuple[int, ...]]
    bounds: list[float]
    threshold: float
    eps: float
    tail: float
    total: float

    def __contains__(self, u) -> bool:
        return tuple(u) in set(self.sets)

    @property
    def certified(self) -> bool:
        return self.tail <= self.eps / 2

    def budgets(self) -> dict[tuple[int, ...], float]:
        """Quadrature error budgets ``(eps/2) B_u / sum_A B``, split proportionally to ``B_u``."""
        tot = math.fsum(self.bounds)
        return {u: self.eps / 2 * b / tot for u, b in zip(self.sets, self.bounds)}

    def to_json(self) -> str:
        return json.dumps({"sets": [list(u) for u in self.sets], "bounds": self.bounds,
                           "certificate": {"threshold": self.threshold, "eps": self.eps,
                                           "tail": self.tail, "total": self.total}})

    @classmethod
    def from_json(cls, text: str) -> "ActiveSet":
        d = json.loads(text)
        c = d["certificate"]
        return cls([tuple(u) for u in d["sets"]], [float(b) for b in d["bounds"]],
                   c["threshold"], c["eps"], c["tail"], c["total"])


def build_active_set(b: Sequence[float], eps: float, max_sets: int = 1_000_000) -> ActiveSet:
    """Smallest threshold set ``{u : B_u > delta*}`` for ``B_u = prod_{j in u} b_j``.

    Subsets are visited in non-increasing ``B_u`` order by a best-first search
    (successors: append the next index, or advance the last one), which is
    valid because ``b`` is non-increasing and bounded by 1. The excluded mass
    is ``prod(1 + b_j) - sum_A B_u``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    b = np.asarray(b, dtype=float)
    if np.any(b < 0) or np.any(b > 1) or np.any(np.diff(b) > 0):
        raise ValueError("b must be non-increasing with entries in [0, 1]")
    d = len(b)
    total = float(np.prod(1.0 + b))
    sets, bounds = [], []
    heap = [(-1.0, ())]
    acc = 0.0
    while heap:
        negB, u = heap[0]
        B = -negB
        tail = max(total - acc, 0.0)
        # mathematically tied bounds can differ in the last bits; keep ties together
        if sets and tail <= eps / 2 and B < bounds[-1] * (1.0 - TIE_RTOL):
            break
        if B == 0.0 and tail <= eps / 2:
            break
        heapq.heappop(heap)
        sets.append(u)
        bounds.append(B)
        acc = math.fsum(bounds)
        if len(sets) > max_sets:
            raise RuntimeError("active set exceeds max_sets before the tail certificate holds")
        last = u[-1] if u else -1
        if last + 1 < d:
            for v in (u + (last + 1,), u[:-1] + (last + 1,)) if u else (u + (last + 1,),):
                heapq.heappush(heap, (-float(np.prod(b[list(v)])), v))
    threshold = -heap[0][0] if heap else 0.0
    return ActiveSet(sets, bounds, threshold, eps, max(total - math.fsum(bounds), 0.0), total)


Rule = Callable[[tuple[int, ...]], tuple[np.ndarray, np.ndarray]]


def tensor_rule(nodes: np.ndarray, weights: np.ndarray) -> Rule:
    """Per-subset tensor product of a one-dimensional rule."""
    nodes = np.asarray(nodes, dtype=float)
    weights = np.asarray(weights, dtype=float)

    def rule(u):
        k = len(u)
        if k == 0:
            return np.zeros((1, 0)), np.ones(1)
        grids = np.meshgrid(*([nodes] * k), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        w = np.ones(len(pts))
        for g in np.meshgrid(*([weights] * k), indexing="ij"):
            w *= g.ravel()
        return pts, w

    return rule


@dataclass
class _Memo:
    f: Callable
    anchor: np.ndarray
    cache: dict = field(default_factory=dict)
    evaluations: int = 0

    def values(self, v: tuple[int, ...], y_v: np.ndarray) -> np.ndarray:
        keys = [(v, row.tobytes()) for row in y_v]
        missing = [i for i, k in enumerate(keys) if k not in self.cache]
        if missing:
            pts = np.tile(self.anchor, (len(missing), 1))
            if v:
                pts[:, list(v)] = y_v[missing]
            vals = self.f(pts)
            self.evaluations += len(missing)
            for i, val in zip(missing, vals):
                self.cache[keys[i]] = float(val)
        return np.array([self.cache[k] for k in keys])


def mdm_estimate(f: Callable[[np.ndarray], np.ndarray], anchor: np.ndarray,
                 active: ActiveSet | Sequence[Sequence[int]], rule: Rule) -> Estimate:
    """``sum_{u in A} Q_u(f_u)`` with anchored components and memoised evaluations.

    ``rule(u)`` returns nodes of shape ``(N, |u|)`` and weights of shape ``(N,)``."""
    anchor = np.asarray(anchor, dtype=float)
    sets = active.sets if isinstance(active, ActiveSet) else [tuple(u) for u in active]
    memo = _Memo(f, anchor)
    contributions = {}
    for u in sets:
        u = tuple(u)
        if len(u) > MAX_ANCHORED_ORDER:
            raise ValueError(f"|u| = {len(u)} exceeds the cap of {MAX_ANCHORED_ORDER}")
        nodes, w = rule(u)
        comp = np.zeros(len(w))
        for v in _subsets(u):
            cols = [u.index(j) for j in v]
            comp += (-1) ** (len(u) - len(v)) * memo.values(v, np.ascontiguousarray(nodes[:, cols]))
        contributions[u] = float(w @ comp)
    value = math.fsum(contributions.values())
    est = Estimate(value, [value], None, len(sets), 1, evaluations=memo.evaluations)
    est.meta["contributions"] = {json.dumps(list(u)): c for u, c in contributions.items()}
    return est


# --------------------------------------------------------------------------
# fast matrix-vector products with lattice point matrices


@dataclass(frozen=True)
class FastMvmPlan:
    n: int
    z: tuple[int, ...]
    g: int
    offsets: tuple[int, ...]

    def __post_init__(self):
        if not is_prime(self.n):
            raise ValueError("fast matrix-vector product needs prime n")
        if any(pow(self.g, k, self.n) == 1 for k in range(1, self.n - 1)):
            raise ValueError("g is not a primitive root")
        for zj, mj in zip(self.z, self.offsets):
            if zj * pow(self.g, mj, self.n) % self.n != 1:
                raise ValueError("offsets do not satisfy z_j g^m_j = 1 (mod n)")

    @classmethod
    def create(cls, gv: GeneratingVector | tuple[int, Sequence[int]]) -> "FastMvmPlan":
        n, z = (gv.n, gv.z) if isinstance(gv, GeneratingVector) else gv
        if not is_prime(n):
            raise ValueError("fast matrix-vector product needs prime n")
        z = tuple(int(v) % n for v in z)
        if any(v == 0 for v in z):
            raise ValueError("components must be units modulo n")
        g = primitive_root(n)
        log = np.empty(n, dtype=np.int64)
        log[np.array([pow(g, k, n) for k in range(n - 1)])] = np.arange(n - 1)
        return cls(n, z, g, tuple(int((-log[v]) % (n - 1)) for v in z))

    @property
    def s(self) -> int:
        return len(self.z)

    @property
    def row_order(self) -> np.ndarray:
        """Lattice index ``i = g^k mod n`` of output row ``k``."""
        out = np.empty(self.n - 1, dtype=np.int64)
        x = 1
        for k in range(self.n - 1):
            out[k] = x
            x = x * self.g % self.n
        return out

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "z": list(self.z), "g": self.g, "offsets": list(self.offsets)})

    @classmethod
    def from_json(cls, text: str) -> "FastMvmPlan":
        d = json.loads(text)
        return cls(int(d["n"]), tuple(d["z"]), int(d["g"]), tuple(d["offsets"]))


def fast_mvm(plan: FastMvmPlan, A: np.ndarray, chi: Callable = lambda x: x,
             shift: np.ndarray | None = None) -> np.ndarray:
    """``Y A`` with ``Y[k, j] = chi({g^k z_j / n})`` in ``O(q (s + n log n))``."""
    if shift is not None and np.any(np.asarray(shift) != 0):
        raise ValueError("the circulant structure does not survive a random shift")
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != plan.s:
        raise ValueError(f"A must have shape ({plan.s}, q)")
    N = plan.n - 1
    if A.shape[1] == 0:
        return np.zeros((N, 0))
    c = np.asarray(chi(plan.row_order / plan.n), dtype=float)
    P = np.zeros((N, A.shape[1]))
    np.add.at(P, np.asarray(plan.offsets), A)
    return np.fft.irfft(np.fft.rfft(c)[:, None] * np.fft.rfft(P, axis=0), n=N, axis=0)


def naive_mvm(plan: FastMvmPlan, A: np.ndarray, chi: Callable = lambda x: x) -> np.ndarray:
    """Reference ``Y A`` with ``Y`` built explicitly, rows in the same order as ``fast_mvm``."""
    rows = plan.row_order
    Y = chi((np.outer(rows, np.asarray(plan.z, dtype=np.int64)) % plan.n) / plan.n)
    return np.asarray(Y, dtype=float) @ np.asarray(A, dtype=float)
