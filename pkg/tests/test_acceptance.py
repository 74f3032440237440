"""Acceptance criteria, one test per criterion.

Each test prints its measured quantities; ``conftest.py`` turns the outcomes
into a PASS/FAIL table at the end of the run. Seeds are fixed in advance.
"""

from __future__ import annotations

import itertools
import json
import math
import time

import numpy as np
import pytest
from scipy import special

from qmckit.cbc import CbcConfig, cbc_interlaced, cbc_lattice, wce_sq
from qmckit.cli import main
from qmckit.estimate import loglog_slope, shifted_lattice_estimate
from qmckit.glmm import GlmmModel, gauss_hermite_likelihood, likelihood
from qmckit.option import AsianOption, CovarianceOperator, mc_price, path_covariance, price
from qmckit.pde import (CirculantEmbedding, PdeProblem, default_uniform, expected_functional,
                        exponential_covariance, fem_solve, mc_functional)
from qmckit.points import GeneratingVector
from qmckit.savers import (FastMvmPlan, LevelFamily, anchored_component, fast_mvm,
                           mdm_estimate, multilevel_estimate, naive_mvm, tensor_rule)
from qmckit.testfns import bernoulli_product, exponential_product
from qmckit.transforms import MarginalDensity, norminv
from qmckit.weights import BoundParams, WeightModel, rms_bound_factor, weight_of


def product_w(s, c=0.9):
    return WeightModel.product([c**j for j in range(1, s + 1)])


def pod_w(s):
    return WeightModel.pod([math.factorial(k) for k in range(s + 1)],
                           [1 / j**2 for j in range(1, s + 1)])


def power_w(s):
    return WeightModel.product([1 / j**2 for j in range(1, s + 1)])


def double_sum_wce(gv, w):
    pts = (np.arange(gv.n)[:, None] * np.asarray(gv.z)[None, :] % gv.n) / gv.n
    d = (pts[:, None, :] - pts[None, :, :]) % 1.0
    B = d * d - d + 1.0 / 6.0
    return sum(weight_of(w, u) * np.prod(B[:, :, list(u)], axis=2).mean()
               for r in range(1, gv.s + 1) for u in itertools.combinations(range(gv.s), r))


def lattice_rules(ms, s, weights=power_w):
    return {1 << m: cbc_lattice(CbcConfig(1 << m, s, weights(s)))[0] for m in ms}


def test_criterion_01_fast_cbc_equals_naive():
    t0 = time.perf_counter()
    worst = 0.0
    for n in (16, 32, 64, 127, 257):
        for w in (product_w(8), pod_w(8)):
            gf, tf = cbc_lattice(CbcConfig(n, 8, w, "fast"))
            gn, tn = cbc_lattice(CbcConfig(n, 8, w, "naive"))
            assert tf.mode == "fast" and not tf.warnings
            assert gf.z == gn.z
            worst = max(worst, max(abs(a - b) for a, b in zip(tf.criterion, tn.criterion)))
    elapsed = time.perf_counter() - t0
    print(f"max criterion deviation {worst:.3g}, {elapsed:.2f}s")
    assert worst <= 1e-13
    assert elapsed < 30


def test_criterion_02_wce_against_double_sum():
    rng = np.random.default_rng(2)
    worst = 0.0
    for n in (2, 7, 8, 16, 31, 32, 61, 64):
        units = [c for c in range(1, n) if math.gcd(c, n) == 1] or [1]
        for s in range(1, 7):
            z = tuple(int(c) for c in rng.choice(units, size=s))
            gv = GeneratingVector(n, z)
            for w in (product_w(s), pod_w(s)):
                worst = max(worst, abs(wce_sq(gv, w) - double_sum_wce(gv, w)))
    print(f"max deviation {worst:.3g}")
    assert worst <= 1e-13


def test_criterion_03_smooth_lattice_convergence():
    t0 = time.perf_counter()
    s = 8
    f = bernoulli_product(0.9 ** np.arange(1, s + 1))
    ns, errs = [], []
    for m in range(7, 14):
        gv = cbc_lattice(CbcConfig(1 << m, s, product_w(s)))[0]
        est = shifted_lattice_estimate(f, gv, 16, seed=m)
        ns.append(gv.n)
        errs.append(math.sqrt(np.mean((np.asarray(est.shift_values) - 1.0) ** 2)))
    slope = loglog_slope(ns, errs)
    elapsed = time.perf_counter() - t0
    print(f"slope {slope:.3f}, {elapsed:.2f}s")
    assert slope <= -0.85
    assert elapsed < 60


def test_criterion_04_interlaced_convergence():
    t0 = time.perf_counter()
    g = [0.5, 0.25]
    f = exponential_product(g)
    ns, errs = [], []
    for m in range(4, 13):
        rule = cbc_interlaced(m, 2, 2, WeightModel.product(g))
        ns.append(rule.n)
        errs.append(abs(float(f(rule.points().coords).mean()) - 1.0))
    slope = loglog_slope(ns, errs)
    elapsed = time.perf_counter() - t0
    print(f"slope {slope:.3f}, {elapsed:.2f}s")
    assert slope <= -1.5
    assert elapsed < 120


@pytest.mark.filterwarnings("ignore:fast CBC unsupported")
def test_criterion_05_bound_consistency():
    checked = 0
    for s, make in ((8, product_w), (8, pod_w), (6, power_w), (12, power_w)):
        w = make(s)
        for n in (16, 31, 32, 64, 100, 127, 257, 1024):
            gv = cbc_lattice(CbcConfig(n, s, w))[0]
            for k in range(1, s + 1):
                sub = GeneratingVector(n, gv.z[:k])
                wk = w.restrict(k)
                factor = rms_bound_factor(wk, BoundParams(1.0, n, k))
                assert wce_sq(sub, wk) <= factor**2
                checked += 1
    print(f"{checked} rules checked")


def test_criterion_06_option_preintegration():
    t0 = time.perf_counter()
    for method in ("standard", "brownian_bridge", "pca"):
        for s in (1, 2, 3, 16, 17, 64):
            A = CovarianceOperator(method, s).matrix()
            assert np.max(np.abs(A @ A.T - path_covariance(s, 1.0))) <= 1e-10
    opt = AsianOption(s=16)
    cov = CovarianceOperator("pca", 16)
    raw_rules = lattice_rules(range(7, 14), 16)
    smooth_rules = lattice_rules(range(7, 14), 15)
    ns = sorted(raw_rules)
    raw = [price(opt, cov, raw_rules[n], 16, False, seed=n.bit_length() - 1) for n in ns]
    smo = [price(opt, cov, smooth_rules[n], 16, True, seed=n.bit_length() - 1) for n in ns]
    raw_slope = loglog_slope(ns, [e.std_error for e in raw])
    smooth_slope = loglog_slope(ns, [e.std_error for e in smo])
    mc, mc_se = mc_price(opt, 10**7, seed=20240607)
    z_raw = (raw[-1].value - mc) / math.hypot(raw[-1].std_error, mc_se)
    z_smooth = (smo[-1].value - mc) / math.hypot(smo[-1].std_error, mc_se)
    elapsed = time.perf_counter() - t0
    print(f"raw slope {raw_slope:.3f}, smoothed slope {smooth_slope:.3f}; "
          f"MC {mc:.6f} +- {mc_se:.2g}; z raw {z_raw:.2f}, z smoothed {z_smooth:.2f}; {elapsed:.1f}s")
    assert smooth_slope <= -0.85
    assert raw_slope > smooth_slope
    assert abs(z_raw) <= 3 and abs(z_smooth) <= 3
    assert elapsed < 300


def test_criterion_07_glmm_against_gauss_hermite():
    tau = (2, 0, 3, 1)
    worst = 0.0
    for s in (1, 2, 3):
        m = GlmmModel(0.5, tau[:s], 0.5, 0.5)
        gv = cbc_lattice(CbcConfig(1 << 13, s, power_w(s)))[0]
        est = likelihood(m, MarginalDensity("logistic"), gv, 8, seed=1)
        ref = gauss_hermite_likelihood(m, 40)
        worst = max(worst, abs(math.exp(est.meta["log_likelihood"]) / ref - 1.0))
    m = GlmmModel(0.5, tau, 0.5, 0.5)
    gv = cbc_lattice(CbcConfig(1 << 13, 4, power_w(4)))[0]
    normal = likelihood(m, MarginalDensity("normal"), gv, 16, seed=2)
    logistic = likelihood(m, MarginalDensity("logistic"), gv, 16, seed=2)
    diff = normal.meta["log_likelihood"] - logistic.meta["log_likelihood"]
    z = diff / math.hypot(normal.meta["log_std_error"], logistic.meta["log_std_error"])
    print(f"max relative error vs Gauss-Hermite {worst:.3g}; normal vs logistic z {z:.2f}")
    assert worst <= 1e-6
    assert abs(z) <= 3


def test_criterion_08_pde():
    Ms = (7, 15, 31, 63, 127)
    errs = [abs(PdeProblem(M).functional(fem_solve(np.ones(M + 1), PdeProblem(M)))[0] - 1 / 12)
            for M in Ms]
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios >= 3.6) & (ratios <= 4.4))

    problem, coeff = PdeProblem(127), default_uniform(4)
    gv = cbc_lattice(CbcConfig(1 << 12, 4, power_w(4)))[0]
    q = expected_functional(problem, coeff, gv, 16, seed=8)
    mc = mc_functional(problem, coeff, 10**6, seed=20240608)
    z = (q.value - mc.value) / math.hypot(q.std_error, mc.std_error)
    assert abs(z) <= 3

    cov = exponential_covariance(0.3)
    ce = CirculantEmbedding(64, cov)
    assert ce.raw_min_eigenvalue >= 0
    rng = np.random.Generator(np.random.PCG64(20240609))
    N = 10**5
    X = np.concatenate([ce.sample(rng.standard_normal((10_000, ce.dim))) for _ in range(N // 10_000)])
    C = X.T @ X / N
    R = cov(np.subtract.outer(ce.grid, ce.grid))
    se = np.sqrt((np.outer(np.diag(R), np.diag(R)) + R**2) / N)
    outside = int(np.sum(np.abs(C - R) > 3 * se))
    print(f"h-ratios {np.round(ratios, 3).tolist()}; uniform z {z:.2f}; circulant entries "
          f"outside 3 se: {outside} of {R.size}; min eigenvalue {ce.raw_min_eigenvalue:.3g}")
    assert outside == 0


def test_criterion_09_savers():
    # anchored sum recovery
    rng = np.random.default_rng(9)
    coef = rng.standard_normal((3, 3, 3, 3))

    def poly(y):
        return sum(coef[i] * np.prod([y[:, j] ** p for j, p in enumerate(i)], axis=0)
                   for i in itertools.product(range(3), repeat=4))

    a, y = rng.random(4), rng.random((100, 4))
    total = sum(anchored_component(poly, u, a, y[:, list(u)])
                for r in range(5) for u in itertools.combinations(range(4), r))
    anchored_err = float(np.max(np.abs(total - poly(y))))
    assert anchored_err <= 1e-12

    # MDM on a pairwise function against dense tensor quadrature
    C = np.triu(rng.standard_normal((5, 5)))

    def pairwise(y):
        return np.einsum("ni,ij,nj->n", np.exp(y), C, np.sin(y))

    x, wq = special.roots_legendre(5)
    x, wq = 0.5 * (x + 1), 0.5 * wq
    rule = tensor_rule(x, wq)
    sets = [u for r in range(3) for u in itertools.combinations(range(5), r)]
    mdm = mdm_estimate(pairwise, np.zeros(5), sets, rule)
    pts, wts = rule(tuple(range(5)))
    mdm_err = abs(mdm.value - wts @ pairwise(pts))
    assert mdm_err <= 1e-10

    # multilevel telescoping with shared nodes
    fs = [lambda u, k=k: np.exp(u.sum(axis=1) / (k + 1)) for k in range(3)]
    fam = LevelFamily(fs, [3, 3, 3], [1, 2, 4])
    gv = cbc_lattice(CbcConfig(256, 3, power_w(3)))[0]
    ml = multilevel_estimate(fam, 2, [gv] * 3, 4, seed=9, shared_shifts=True)
    ml_err = abs(ml.value - shifted_lattice_estimate(fs[2], gv, 4, seed=9).value)
    assert ml_err <= 1e-12

    # fast matrix-vector products
    gv = cbc_lattice(CbcConfig(127, 32, power_w(32)))[0]
    plan = FastMvmPlan.create(gv)
    A = rng.standard_normal((32, 8))
    mvm_err = float(np.max(np.abs(fast_mvm(plan, A, norminv) - naive_mvm(plan, A, norminv))))
    assert mvm_err <= 1e-10

    gv = cbc_lattice(CbcConfig(8191, 256, power_w(256)))[0]
    plan = FastMvmPlan.create(gv)
    A = rng.standard_normal((256, 16))
    fast_mvm(plan, A, norminv)  # warm-up
    t = time.perf_counter()
    fast = fast_mvm(plan, A, norminv)
    t_fast = time.perf_counter() - t
    t = time.perf_counter()
    naive = naive_mvm(plan, A, norminv)
    t_naive = time.perf_counter() - t
    print(f"anchored {anchored_err:.2g}, MDM {mdm_err:.2g}, multilevel {ml_err:.2g}, "
          f"mvm {mvm_err:.2g}; n=8191 fast {t_fast:.4f}s vs naive {t_naive:.4f}s")
    assert np.max(np.abs(fast - naive)) <= 1e-10
    assert t_fast < t_naive


REPLAY_COMMANDS = [
    ["cbc", "--n", "127", "--s", "6"],
    ["cbc", "--n", "256", "--s", "3", "--alpha", "2", "--weights", "geom:0.5"],
    ["points", "--n", "61", "--s", "4", "--shifts", "3"],
    ["bound", "--n", "127", "--s", "5"],
    ["calibrate", "--pod-bounds", "0.6,0.3,0.1"],
    ["option", "--n", "512", "--s", "8", "--shifts", "8", "--smoothed"],
    ["glmm", "--n", "512", "--s", "3", "--shifts", "8"],
    ["pde", "--n", "256", "--s", "4", "--shifts", "8"],
    ["mdm", "--s", "5", "--eps", "1e-4"],
    ["ml", "--n", "256", "--shifts", "8"],
    ["mvm-bench", "--n", "251", "--s", "16", "--q", "3"],
    ["convergence", "--app", "option", "--s", "4", "--m-list", "6:8", "--shifts", "4"],
]


def test_criterion_10_replay_determinism(tmp_path):
    for k, argv in enumerate(REPLAY_COMMANDS):
        out = tmp_path / f"run{k}"
        assert main([*argv, "--out", str(out), "--threads", "1"]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert any(name.endswith(".csv") or name.endswith(".json") or name.endswith(".txt")
                   for name in manifest["outputs"])
        for threads in (1, 3):
            again = tmp_path / f"replay{k}_{threads}"
            code = main(["replay", str(out / "manifest.json"), "--out", str(again),
                         "--threads", str(threads)])
            assert code == 0, argv
            for name in manifest["outputs"]:
                assert (again / name).read_bytes() == (out / name).read_bytes(), (argv, name)
    print(f"{len(REPLAY_COMMANDS)} commands replayed byte-identically with 1 and 3 threads")
