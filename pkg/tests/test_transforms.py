from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from qmckit.points import GeneratingVector, lattice_points
from qmckit.transforms import (MarginalDensity, PreintegrationSpec, clamp_unit, locate_kink,
                               map_points, norminv, normpdf, preintegrate)

mpmath.mp.dps = 40


def test_norminv_center_and_one():
    assert norminv(0.5) == 0.0
    assert norminv(special.ndtr(1.0)) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("p", ["1e-300", "1e-100", "1e-20", "0.001", "0.02425", "0.3", "0.7",
                               "0.975", "0.999999"])
def test_norminv_against_mpmath(p):
    target = mpmath.log(mpmath.mpf(float(p)))  # exact binary value of the input
    root = mpmath.findroot(lambda x: mpmath.log(mpmath.ncdf(x)) - target, special.ndtri(float(p)))
    want = float(root)
    assert norminv(float(p)) == pytest.approx(want, rel=2e-15, abs=1e-15)


def test_norminv_cdf_roundtrip_grid():
    p = np.concatenate([10.0 ** -np.linspace(300, 1, 400), np.linspace(0.01, 0.99, 400),
                        1 - 10.0 ** -np.linspace(1, 16, 100)])
    assert np.max(np.abs(special.ndtr(norminv(p)) - p)) <= 1e-12
    assert np.all(np.diff(norminv(np.sort(p))) >= 0)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-300, 0.5, exclude_min=False))
def test_norminv_symmetry(p):
    q = 1.0 - p
    if q == 1.0:
        return
    # 1 - p rounds; compare against the exact complement of q
    assert norminv(q) == pytest.approx(-norminv(1.0 - q), abs=1e-12, rel=1e-12)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, np.nan])
def test_norminv_domain(p):
    with pytest.raises(ValueError):
        norminv(p)


def test_clamp():
    u = clamp_unit(np.array([0.0, 1.0, 0.5]))
    assert 0 < u[0] and u[1] < 1 and u[2] == 0.5
    assert np.isfinite(map_points(np.array([[0.0, 1.0 - 1e-17]]))).all()


@pytest.mark.parametrize("d", [MarginalDensity("normal"), MarginalDensity("logistic"),
                               MarginalDensity("student", 10.0), MarginalDensity("student", 3.0)])
def test_density_invariants(d):
    assert d.total_mass == pytest.approx(1.0, abs=1e-10)
    x = np.linspace(-30 if d.kind != "normal" else -8, 5, 301)
    np.testing.assert_allclose(d.ppf(d.cdf(x)), x, atol=1e-9)
    np.testing.assert_allclose(np.exp(d.log_pdf(x)), d.pdf(x), rtol=1e-13, atol=1e-300)


def test_density_errors():
    with pytest.raises(ValueError):
        MarginalDensity("cauchy")
    with pytest.raises(ValueError):
        MarginalDensity("student")


def test_map_points_examples():
    ps = lattice_points(GeneratingVector(2, (1, 1)))
    got = map_points(ps)
    np.testing.assert_array_equal(got, [[0.0, 0.0], [norminv(2.0**-53)] * 2])
    u = np.array([[0.2, 0.7]])
    np.testing.assert_array_equal(map_points(u, MarginalDensity("uniform")), u)
    np.testing.assert_array_equal(map_points(np.full((1, 3), 0.5)), np.zeros((1, 3)))


def test_spec_validation():
    with pytest.raises(ValueError):
        PreintegrationSpec(0, nodes=1)
    with pytest.raises(ValueError):
        PreintegrationSpec(0, tol=0)


def test_preintegrate_independent_coordinate():
    f = lambda y: np.cos(y[:, 1]) + y[:, 2] ** 2  # noqa: E731
    g = preintegrate(f, PreintegrationSpec(0))
    y = np.array([[0.3, -1.2], [2.0, 0.1]])
    np.testing.assert_allclose(g(y), np.cos(y[:, 0]) + y[:, 1] ** 2, rtol=1e-13)


def test_preintegrate_relu():
    mu = lambda y: y[:, 0]  # noqa: E731
    f = lambda y: np.maximum(mu(y), 0.0)  # noqa: E731
    g = preintegrate(f, PreintegrationSpec(0), kink=mu)
    np.testing.assert_allclose(g(np.zeros((3, 1))), 1 / math.sqrt(2 * math.pi), rtol=1e-13)


@pytest.mark.parametrize("a,b", [(0.3, 1.0), (-1.0, 2.0), (2.0, 0.5), (0.5, -1.5)])
def test_preintegrate_linear_kink(a, b):
    mu = lambda y: a + b * y[:, 0] + 0.0 * y[:, 1]  # noqa: E731
    f = lambda y: np.maximum(mu(y), 0.0)  # noqa: E731
    g = preintegrate(f, PreintegrationSpec(0), kink=mu)
    want = a * special.ndtr(a / abs(b)) + abs(b) * normpdf(a / abs(b))
    # trapezoid oracle with 10^5 nodes
    x = np.linspace(-12, 12, 100_001)
    trap = np.trapezoid(np.maximum(a + b * x, 0) * normpdf(x), x)
    assert want == pytest.approx(trap, abs=1e-8)
    assert g(np.zeros((1, 1)))[0] == pytest.approx(want, rel=1e-12)


def test_kink_status_branches():
    spec = PreintegrationSpec(0)
    y = np.array([[100.0], [-100.0], [0.0]])
    root, inc, status = locate_kink(lambda v: v[:, 0] + v[:, 1], y, spec)
    np.testing.assert_array_equal(status, [1, -1, 0])
    assert root[2] == pytest.approx(0.0, abs=1e-10)
    g = preintegrate(lambda v: np.maximum(v[:, 0] + v[:, 1], 0), spec,
                     kink=lambda v: v[:, 0] + v[:, 1])
    np.testing.assert_allclose(g(y[:2]), [100.0, 0.0], rtol=1e-12)


def test_preintegration_keeps_the_integral():
    # I(f) = E[max(Y1 + Y2, 0)] = sqrt(2) phi(0) for independent standard normals
    f = lambda y: np.maximum(y[:, 0] + y[:, 1], 0.0)  # noqa: E731
    g = preintegrate(f, PreintegrationSpec(0), kink=lambda y: y[:, 0] + y[:, 1])
    x, w = special.roots_hermitenorm(80)
    val = (w / math.sqrt(2 * math.pi)) @ g(x[:, None])
    assert val == pytest.approx(math.sqrt(2) / math.sqrt(2 * math.pi), rel=1e-6)
