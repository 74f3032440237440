"""Randomly shifted lattice estimators and their result record."""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .points import SHIFT_GENERATOR, GeneratingVector, apply_shift, draw_shifts, lattice_indices


@dataclass
class Estimate:
    value: float
    shift_values: list[float]
    std_error: float | None
    n: int
    shifts: int
    evaluations: int = 0
    wall_time: float = 0.0
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"value": self.value, "std_error": self.std_error, "n": self.n,
                "shifts": self.shifts, "evaluations": self.evaluations,
                "shift_values": self.shift_values, "meta": self.meta}


def combine_shift_values(values, n: int, **kw) -> Estimate:
    values = [float(v) for v in values]
    R = len(values)
    mean = math.fsum(values) / R
    se = float(np.std(values, ddof=1) / math.sqrt(R)) if R >= 2 else None
    return Estimate(mean, values, se, n, R, **kw)


def batched(f: Callable[[np.ndarray], np.ndarray], pts: np.ndarray, batch: int) -> float:
    """Sum of ``f`` over rows of ``pts``, evaluated in fixed-size blocks (sequential order)."""
    total = 0.0
    for lo in range(0, len(pts), batch):
        total += float(np.sum(f(pts[lo : lo + batch])))
    return total


def shifted_lattice_estimate(f: Callable[[np.ndarray], np.ndarray], gv: GeneratingVector,
                             shifts: int, seed: int, threads: int = 1,
                             batch: int = 4096) -> Estimate:
    """Average of ``f`` (unit-cube integrand, batch in / batch out) over ``shifts``
    independently shifted copies of the lattice ``gv``.

    Per-shift sums run sequentially in point order, so the result does not
    depend on ``threads``."""
    if shifts < 1:
        raise ValueError("need at least one shift")
    t0 = time.perf_counter()
    base = lattice_indices(gv) / gv.n
    deltas = draw_shifts(gv.s, shifts, seed)

    def one(r: int) -> float:
        return batched(f, apply_shift(base, deltas[r]), batch) / gv.n

    if threads > 1 and shifts > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(one, range(shifts)))
    else:
        values = [one(r) for r in range(shifts)]
    est = combine_shift_values(values, gv.n, evaluations=gv.n * shifts,
                               wall_time=time.perf_counter() - t0)
    est.meta.update(seed=seed, generator=SHIFT_GENERATOR, z=list(gv.z))
    if shifts < 2:
        est.meta["warning"] = "fewer than two shifts: no standard error"
    return est


def loglog_slope(ns, errors) -> float:
    """Least-squares slope of log(error) against log(n)."""
    ns = np.asarray(ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    return float(np.polyfit(np.log(ns), np.log(errors), 1)[0])
