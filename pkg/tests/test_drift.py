import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochheat.drift import (DriftSpec, YosidaApprox, check_growth, make_drift, regularized_drift,
                             verify_one_sided_lipschitz, yosida_phi_n, yosida_resolvent)

CATALOG = ["allen-cahn", "neg-cubic", "damped-cubic", "linear", "zero", "neg-sinh", "neg-cube-root",
           "neg-cantor"]

linear_phi = DriftSpec(lambda u: -u, kappa=0.0, name="minus-identity")


@pytest.mark.parametrize("name", CATALOG)
def test_catalog_is_one_sided_lipschitz(name):
    rep = verify_one_sided_lipschitz(make_drift(name))
    assert rep.passed, rep


@pytest.mark.parametrize("name", ["allen-cahn", "neg-cubic", "damped-cubic", "linear", "neg-sinh"])
def test_catalog_growth(name):
    assert check_growth(make_drift(name))


def test_polynomial_drift_constants():
    ds = make_drift("polynomial", coeffs=[0.0, 2.0, 0.0, -1.0])
    assert ds.kappa == pytest.approx(2.0)
    assert verify_one_sided_lipschitz(ds).passed
    with pytest.raises(ValueError):
        make_drift("polynomial", coeffs=[0.0, 0.0, 1.0])


def test_unknown_drift():
    with pytest.raises(ValueError):
        make_drift("nope")


def test_one_sided_failures():
    ac = make_drift("allen-cahn")
    rep = verify_one_sided_lipschitz(ac, kappa=0.5)
    assert not rep.passed and rep.max_violation > 0
    assert abs(np.mean(rep.worst_pair)) < 1.0
    sq = DriftSpec(lambda u: u * u, kappa=15.0)
    assert not verify_one_sided_lipschitz(sq, range_=(-10.0, 10.0)).passed
    assert verify_one_sided_lipschitz(make_drift("neg-cubic")).max_violation <= 0


def test_resolvent_examples():
    nc = make_drift("neg-cubic")
    assert YosidaApprox(nc, 1).resolvent(2.0) == pytest.approx(1.0, abs=1e-12)
    assert YosidaApprox(nc, 1).resolvent(0.0) == 0.0
    assert yosida_resolvent(YosidaApprox(linear_phi, 2), 3.0) == pytest.approx(2.0, abs=1e-12)


def test_phi_n_examples():
    nc = make_drift("neg-cubic")
    assert yosida_phi_n(YosidaApprox(nc, 1), 2.0) == pytest.approx(-1.0, abs=1e-11)
    assert YosidaApprox(nc, 5).phi_n(0.0) == 0.0
    val = YosidaApprox(linear_phi, 2).phi_n(3.0)
    assert val == pytest.approx(-2.0, abs=1e-11)
    assert abs(val) <= 3.0


def test_regularized_drift_examples():
    ac = make_drift("allen-cahn")
    assert regularized_drift(YosidaApprox(ac, 1), 2.0) == pytest.approx(1.0, abs=1e-11)
    assert YosidaApprox(ac, 3)(0.0) == 0.0
    assert YosidaApprox(ac, 1e4)(0.5) == pytest.approx(0.375, abs=1e-3)


@pytest.mark.parametrize("name", ["allen-cahn", "neg-cubic", "neg-sinh", "neg-cube-root", "neg-cantor"])
@pytest.mark.parametrize("n", [1, 10, 100])
def test_yosida_properties(name, n):
    ds = make_drift(name)
    y = YosidaApprox(ds, n)
    r = np.random.default_rng(n)
    u = r.uniform(-5, 5, 10_000)
    a, b = np.sort(r.uniform(-5, 5, (2, 10_000)), axis=0)
    pa, pb = y.phi_n(a), y.phi_n(b)
    assert np.all(pb <= pa + 1e-9)
    assert np.all(np.abs(pb - pa) <= 2 * n * (b - a) + 1e-8)
    assert np.all(np.abs(y.phi_n(u)) <= np.abs(ds.phi(u)) + 1e-8)


@pytest.mark.parametrize("name", ["allen-cahn", "neg-cubic"])
def test_yosida_pointwise_convergence(name):
    ds = make_drift(name)
    pts = np.linspace(-5, 5, 20)
    errs = [np.abs(YosidaApprox(ds, n).phi_n(pts) - ds.phi(pts)) for n in (1, 10, 100, 1000)]
    assert np.all(np.diff(np.array(errs), axis=0) < 0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-50, 50), st.sampled_from([0.5, 1.0, 7.0, 64.0, 1000.0]))
def test_resolvent_solves_equation(u, n):
    y = YosidaApprox(make_drift("neg-cubic"), n)
    v = y.resolvent(u)
    assert v - y.base.phi(v) / n == pytest.approx(u, rel=1e-10, abs=1e-10)


def test_resolvent_without_derivative_matches_newton():
    ds = make_drift("neg-sinh")
    plain = DriftSpec(ds.f, ds.kappa, name="no-derivative")
    u = np.linspace(-6, 6, 101)
    a = YosidaApprox(ds, 10).resolvent(u)
    b = YosidaApprox(plain, 10).resolvent(u)
    assert np.allclose(a, b, atol=1e-10)


def test_yosida_rejects_bad_index():
    with pytest.raises(ValueError):
        YosidaApprox(make_drift("neg-cubic"), 0)


def test_array_shapes_preserved():
    y = YosidaApprox(make_drift("allen-cahn"), 8)
    u = np.random.default_rng(0).standard_normal((3, 4, 5))
    assert y(u).shape == u.shape
    assert isinstance(y.resolvent(0.3), float)
