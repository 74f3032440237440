from __future__ import annotations

import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmckit.weights import (BoundParams, CalibrationInput, WeightModel, calibrate_weights,
                            calibration_objective, elementary_symmetric, interlaced_bound_factor,
                            pod_from_derivative_bounds, rms_bound_factor, theta, theta_alpha,
                            weight_of, weighted_subset_sum, zeta)


def subsets(s):
    for r in range(1, s + 1):
        yield from itertools.combinations(range(s), r)


def test_weight_of_examples():
    w = WeightModel.pod((1, 1, 2), (0.5, 0.25))
    assert weight_of(w, (0, 1)) == pytest.approx(0.25, abs=0)
    assert weight_of(w, ()) == 1.0
    assert weight_of(WeightModel.product([0.3]), ()) == 1.0
    with pytest.raises(IndexError):
        weight_of(w, (2,))


def test_pod_with_unit_orders_is_product():
    ups = [0.9, 0.5, 0.2, 0.1]
    pod, prod = WeightModel.pod([1] * 5, ups), WeightModel.product(ups)
    for u in subsets(4):
        assert weight_of(pod, u) == pytest.approx(weight_of(prod, u), rel=1e-15)


def test_spod_weight_brute_force():
    ups = np.array([[0.5, 0.2], [0.3, 0.1]])
    gam = [1, 1, 2, 6, 24]
    w = WeightModel.spod(gam, ups)
    want = sum(gam[a + b] * ups[0, a - 1] * ups[1, b - 1] for a in (1, 2) for b in (1, 2))
    assert weight_of(w, (0, 1)) == pytest.approx(want, rel=1e-15)


@pytest.mark.parametrize("bad", [
    dict(variant="pod", dim=2, gamma_order=(1, 1, 2), upsilon=(0.2, 0.5)),
    dict(variant="pod", dim=2, gamma_order=(1, 2, 2), upsilon=(0.5, 0.2)),
    dict(variant="product", dim=2, upsilon=(0.5, -0.2)),
    dict(variant="bogus", dim=1),
    dict(variant="explicit", dim=2, explicit={(3,): 0.1}),
])
def test_weight_validation(bad):
    with pytest.raises(ValueError):
        WeightModel(**bad)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=6), st.sampled_from(["product", "pod", "od"]))
def test_json_roundtrip(ups, kind):
    ups = sorted(ups, reverse=True)
    if kind == "product":
        w = WeightModel.product(ups)
    elif kind == "pod":
        w = WeightModel.pod([math.factorial(k) for k in range(len(ups) + 1)], ups)
    else:
        w = WeightModel.order_dependent([1, 1] + [0.5] * len(ups), len(ups))
    back = WeightModel.from_json(w.to_json())
    for u in subsets(len(ups)):
        assert weight_of(back, u) == weight_of(w, u)


def test_explicit_json_roundtrip():
    w = WeightModel.from_explicit({(0,): 0.5, (0, 2): 0.1}, 3)
    back = WeightModel.from_json(w.to_json())
    assert back.explicit == w.explicit and back.dim == 3


# --- zeta and theta -----------------------------------------------------------


@pytest.mark.parametrize("a", [1.1, 1.5, 1.6, 2.0, 3.0, 7.5])
def test_zeta_against_mpmath(a):
    assert zeta(a) == pytest.approx(float(mpmath.zeta(a)), rel=1e-14)


def test_zeta_against_long_series():
    # direct 10^6-term partial sum plus integral tail, the classic cross-check
    a = 1.5
    N = 10**6
    k = np.arange(1, N + 1, dtype=float)
    series = math.fsum(k**-a) + N ** (1 - a) / (a - 1) - 0.5 * N**-a
    assert zeta(a) == pytest.approx(series, rel=1e-12)


def test_theta_values():
    assert theta(1.0) == pytest.approx(1 / 6, rel=1e-15)
    want = 2 * float(mpmath.zeta(1.5)) / (2 * math.pi**2) ** 0.75
    assert theta(0.75) == pytest.approx(want, rel=1e-14)
    with pytest.raises(ValueError):
        theta(0.5)


def test_theta_alpha_values():
    assert theta_alpha(2, 1.0) == pytest.approx(2.5, rel=1e-15)
    assert theta_alpha(3, 1.0) == pytest.approx(127 / 27, rel=1e-15)
    with pytest.raises(ValueError):
        theta_alpha(2, 0.5)
    with pytest.raises(ValueError):
        theta_alpha(1, 1.0)


def test_theta_decreasing():
    lams = np.linspace(0.55, 1.0, 20)
    assert np.all(np.diff([theta(l) for l in lams]) < 0)
    lams = np.linspace(0.55, 1.0, 20)
    assert np.all(np.diff([theta_alpha(2, l) for l in lams]) < 0)


def test_elementary_symmetric():
    x = np.array([1.0, 2.0, 3.0])
    np.testing.assert_allclose(elementary_symmetric(x), [1, 6, 11, 6])


# --- bound factors ----------------------------------------------------------------


def test_rms_bound_single_subset():
    w = WeightModel.product([1.0])
    assert rms_bound_factor(w, BoundParams(1.0, 2, 1)) == pytest.approx(math.sqrt(1 / 6), rel=1e-15)


def test_rms_bound_zero_weights():
    w = WeightModel.from_explicit({}, 3)
    assert rms_bound_factor(w, BoundParams(1.0, 64, 3)) == 0.0
    assert interlaced_bound_factor(w, BoundParams(1.0, 64, 3, alpha=2)) == 0.0


@pytest.mark.parametrize("lam", [0.6, 0.8, 1.0])
def test_product_form_equals_subset_sum(lam):
    ups = [0.9**j for j in range(1, 11)]
    w = WeightModel.product(ups)
    th = theta(lam)
    brute = math.fsum(np.prod([ups[j] for j in u]) ** lam * th ** len(u) for u in subsets(10))
    assert weighted_subset_sum(w, 10, lam, th) == pytest.approx(brute, rel=1e-14)


@pytest.mark.parametrize("lam", [0.6, 1.0])
def test_pod_recursion_equals_subset_sum(lam):
    ups = [1 / j**2 for j in range(1, 9)]
    w = WeightModel.pod([math.factorial(k) for k in range(9)], ups)
    th = theta(lam)
    brute = math.fsum(weight_of(w, u) ** lam * th ** len(u) for u in subsets(8))
    assert weighted_subset_sum(w, 8, lam, th) == pytest.approx(brute, rel=1e-14)


def test_spod_interlaced_bound_matches_expansion():
    ups = np.array([[0.5, 0.25], [0.3, 0.1], [0.2, 0.05]])
    gam = [math.factorial(k) for k in range(7)]
    w = WeightModel.spod(gam, ups)
    th = theta_alpha(2, 1.0)
    brute = 0.0
    for u in subsets(3):
        for nu in itertools.product((1, 2), repeat=len(u)):
            brute += gam[sum(nu)] * np.prod([ups[j, v - 1] for j, v in zip(u, nu)]) * th ** len(u)
    got = interlaced_bound_factor(w, BoundParams(1.0, 2, 3, alpha=2))
    assert got == pytest.approx(brute, rel=1e-14)


def test_interlaced_single_subset():
    w = WeightModel.product([1.0])
    assert interlaced_bound_factor(w, BoundParams(1.0, 2, 1, alpha=2)) == pytest.approx(2.5)


def test_explicit_enumeration_guard():
    w = WeightModel.from_explicit({(0,): 1.0}, 21)
    with pytest.raises(ValueError):
        rms_bound_factor(w, BoundParams(1.0, 64, 21))


def test_bound_monotone():
    w = WeightModel.product([0.5, 0.25, 0.125])
    vals = [rms_bound_factor(w, BoundParams(0.8, n, 3)) for n in (8, 64, 512)]
    assert vals[0] > vals[1] > vals[2]
    bigger = WeightModel.product([0.6, 0.25, 0.125])
    assert rms_bound_factor(bigger, BoundParams(0.8, 64, 3)) > vals[1]


def test_setting_two_theta_j():
    w = WeightModel.product([0.5, 0.25])
    got = rms_bound_factor(w, BoundParams(1.0, 10, 2, theta_j=(2.0, 3.0)))
    total = 0.5 * 2 + 0.25 * 3 + 0.5 * 0.25 * 6
    assert got == pytest.approx(math.sqrt(2 / 10 * total), rel=1e-15)


# --- calibration ------------------------------------------------------------------


def _random_input(rng, s=3, lam=0.8):
    B = {u: float(rng.uniform(0.01, 1.0)) for u in subsets(s)}
    A = {u: float(rng.uniform(0.1, 1.0)) for u in subsets(s)}
    return CalibrationInput(B, lam, A)


def test_calibrate_identity():
    A = {(0,): 0.2, (1,): 0.3, (0, 1): 0.06}
    w, C = calibrate_weights(CalibrationInput(dict(A), 0.7, A))
    assert all(weight_of(w, u) == pytest.approx(1.0) for u in A)
    assert C == pytest.approx(sum(A.values()) ** (1.7 / 1.4), rel=1e-14)


def test_calibrate_four_times():
    A = {(0,): 0.2, (1,): 0.3, (0, 1): 0.06}
    w, _ = calibrate_weights(CalibrationInput({u: 4 * a for u, a in A.items()}, 1.0, A))
    assert all(weight_of(w, u) == pytest.approx(2.0, rel=1e-15) for u in A)


def test_calibrate_default_A_is_theta_power():
    B = {(0,): 0.5, (0, 1): 0.1}
    w, _ = calibrate_weights(CalibrationInput(B, 1.0))
    assert weight_of(w, (0, 1)) == pytest.approx((0.1 / (1 / 36)) ** 0.5, rel=1e-14)


def test_calibrate_zero_bound_gives_zero_weight():
    w, _ = calibrate_weights(CalibrationInput({(0,): 0.5, (1,): 0.0}, 1.0))
    assert weight_of(w, (1,)) == 0.0


def test_calibrate_rejects_zero_A():
    with pytest.raises(ValueError):
        calibrate_weights(CalibrationInput({(0,): 0.5}, 1.0, {(0,): 0.0}))


def test_calibration_minimality(rng):
    c = _random_input(rng)
    w, C = calibrate_weights(c)
    g = {u: weight_of(w, u) for u in c.B}
    best = calibration_objective(g, c.A, c.B, c.lam)
    assert best == pytest.approx(C, rel=1e-12)
    for u in c.B:
        for f in (0.9, 1.1):
            g2 = dict(g)
            g2[u] *= f
            assert calibration_objective(g2, c.A, c.B, c.lam) >= best * (1 - 1e-14)


def test_calibration_stationarity(rng):
    c = _random_input(rng, lam=0.9)
    w, _ = calibrate_weights(c)
    ratios = [c.lam * weight_of(w, u) ** (c.lam - 1) * c.A[u] / (c.B[u] / weight_of(w, u) ** 2)
              for u in c.B]
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-12)


def test_pod_from_bounds_matches_calibration():
    b = np.array([0.5, 0.3, 0.2])
    lam = 0.8
    B = {u: (math.factorial(len(u)) * np.prod(b[list(u)])) ** 2 for u in subsets(3)}
    ref, _ = calibrate_weights(CalibrationInput(B, lam))
    w = pod_from_derivative_bounds(b, lam)
    for u in B:
        assert weight_of(w, u) == pytest.approx(weight_of(ref, u), rel=1e-13)
