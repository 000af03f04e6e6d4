import warnings

import numpy as np
import pytest

from stochheat.detmap import MSolverConfig, solve_m_array
from stochheat.drift import make_drift
from stochheat.grid import GridSpec, SpaceTimeField
from stochheat.kernel import HeatSemigroup
from stochheat.noise import NoiseSpec, sample_path
from stochheat.stochastic import (PicardDivergence, StochConvSetup, check_moment_hypotheses,
                                  check_solution_hypotheses, make_sigma, mild_residual,
                                  moment_bound_estimate, picard_solve, restart_horizon,
                                  semigroup_orbit, stochastic_convolution)


@pytest.fixture
def grid():
    return GridSpec(d=1, L=8.0, N=64, T=0.1, M=50)


@pytest.fixture
def ns():
    return NoiseSpec("white", d=1, eta=0.25)


def test_zero_sigma_gives_zero(grid, ns, rng):
    S = HeatSemigroup(grid)
    Z = stochastic_convolution(np.zeros((grid.M + 1, grid.N)), sample_path(ns, grid, rng), S)
    assert np.all(Z == 0)


def test_linear_in_sigma_and_noise(grid, ns, rng):
    S = HeatSemigroup(grid)
    sig = rng.uniform(-1, 1, (grid.M + 1, grid.N))
    w1, w2 = sample_path(ns, grid, rng), sample_path(ns, grid, rng)
    Z = lambda s, w: stochastic_convolution(s, w, S)
    assert np.allclose(Z(2 * sig, w1), 2 * Z(sig, w1))
    assert np.allclose(Z(sig, w1 + w2), Z(sig, w1) + Z(sig, w2))


def test_adapted(grid, ns, rng):
    S = HeatSemigroup(grid)
    sig = np.ones((grid.M + 1, grid.N))
    w = sample_path(ns, grid, rng)
    w2 = w.copy()
    w2[20:] = rng.standard_normal(w2[20:].shape)
    a, b = stochastic_convolution(sig, w, S), stochastic_convolution(sig, w2, S)
    assert np.array_equal(a[:21], b[:21])
    assert not np.array_equal(a[21], b[21])


def test_field_roundtrip_and_shape_check(grid, ns, rng):
    S = HeatSemigroup(grid)
    f = SpaceTimeField(grid, np.ones((grid.M + 1, grid.N)))
    Z = stochastic_convolution(f, sample_path(ns, grid, rng), S)
    assert isinstance(Z, SpaceTimeField) and Z.role == "Z"
    with pytest.raises(ValueError, match="noise shape"):
        stochastic_convolution(f, np.zeros((grid.M - 1, grid.N)), S)


def test_semigroup_orbit_constant(grid):
    U = semigroup_orbit(HeatSemigroup(grid), np.full(grid.N, 0.3))
    assert U.shape == (grid.M + 1, grid.N) and np.allclose(U, 0.3)


def test_sigma_catalog():
    for name in ("zero", "one", "sin", "linear"):
        assert make_sigma(name).check_lipschitz()
    with pytest.raises(ValueError):
        make_sigma("tan")


def test_moment_estimate_zero_sigma(grid, ns):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        est = moment_bound_estimate(StochConvSetup(ns, grid, 0.0), grid.T, 40, 0.5, 30)
    assert est.value == 0 and est.replicas == 30


def test_moment_estimate_needs_replicas(grid, ns):
    with pytest.raises(ValueError, match="30"):
        moment_bound_estimate(StochConvSetup(ns, grid), grid.T, 40, 0.5, 10)


def test_moment_hypotheses():
    assert check_moment_hypotheses(40, 0.5, 1, 0.25) == []
    issues = check_moment_hypotheses(8, 1.0, 1, 0.25)
    assert len(issues) == 1 and "2(d+1)/eta" in issues[0]
    assert check_solution_hypotheses(make_drift("allen-cahn"), NoiseSpec(eta=0.25), 40, 0.5) == []
    assert len(check_solution_hypotheses(make_drift("allen-cahn"), NoiseSpec(eta=0.25), 40, 3.0)) == 1


def test_moment_seed_determinism(grid, ns):
    setup = StochConvSetup(ns, grid)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        a = moment_bound_estimate(setup, grid.T, 4, 1.0, 30, seed=3)
        b = moment_bound_estimate(setup, grid.T, 4, 1.0, 30, seed=3, workers=2)
    assert a.value == b.value and a.se == b.se


def test_picard_converges_and_is_mild_solution(grid, ns, rng):
    ds, ss = make_drift("allen-cahn"), make_sigma("sin")
    u0 = 0.5 * np.sin(grid.axis)
    noise = sample_path(ns, grid, rng)
    u, st = picard_solve(u0, ds, ss, ns, grid, 40, 0.5, tol=1e-10, noise=noise)
    assert st.converged and st.iterations >= 2
    assert all(r < 1 for r in st.ratios[1:])
    assert np.array_equal(st.u, u.values)
    res = mild_residual(u, u0, ds, ss, noise, HeatSemigroup(grid), 0.5)
    assert res < 5 * grid.dt


def test_picard_requires_noise_or_rng(grid, ns):
    with pytest.raises(ValueError):
        picard_solve(np.zeros(grid.N), make_drift("zero"), make_sigma("one"), ns, grid, 40, 0.5)
    with pytest.raises(ValueError):
        picard_solve(np.zeros(grid.N), make_drift("zero"), make_sigma("one"), ns, grid, 40, 0.5,
                     tol=0, rng=np.random.default_rng(0))


def test_mild_residual_exact_for_additive_zero_drift(grid, ns, rng):
    S = HeatSemigroup(grid)
    u0 = np.cos(grid.axis)
    noise = sample_path(ns, grid, rng)
    u = semigroup_orbit(S, u0) + stochastic_convolution(np.ones((grid.M + 1, grid.N)), noise, S)
    ds, ss = make_drift("zero"), make_sigma("one")
    assert mild_residual(u, u0, ds, ss, noise, S) < 1e-10
    assert mild_residual(u + 0.1, u0, ds, ss, noise, S) > 0.05


def test_restart_single_segment_matches_picard(grid, ns, rng):
    ds, ss = make_drift("allen-cahn"), make_sigma("sin")
    u0 = 0.5 * np.sin(grid.axis)
    noise = sample_path(ns, grid, rng)
    u1, _ = picard_solve(u0, ds, ss, ns, grid, 40, 0.5, noise=noise)
    u2, states = restart_horizon(u0, ds, ss, ns, grid, 1, 40, 0.5, noise=noise)
    assert len(states) == 1 and np.array_equal(u1.values, u2.values)


def test_restart_junction(grid, ns, rng):
    ds, ss = make_drift("allen-cahn"), make_sigma("sin")
    u, states = restart_horizon(0.5 * np.sin(grid.axis), ds, ss, ns, grid, 3, 40, 0.5, rng=rng)
    assert u.values.shape[0] == 3 * grid.M + 1 and len(states) == 3
    for j, st in enumerate(states):
        assert np.array_equal(u.values[j * grid.M:(j + 1) * grid.M + 1], st.u)


def test_picard_divergence_is_reported(ns, rng):
    # a large linear sigma on a long horizon with one iteration budget for contraction
    g = GridSpec(d=1, L=8.0, N=32, T=5.0, M=50)
    ss = make_sigma("linear", a=30.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        try:
            picard_solve(np.ones(g.N), make_drift("zero"), ss, ns, g, 40, 0.5, rng=rng, max_iter=10)
        except PicardDivergence as exc:
            assert "restart" in str(exc) and len(exc.state.diffs) >= 4
        else:
            pytest.skip("path contracted despite the large coefficient")


def test_implicit_drift_matches_m_solver(grid):
    # with sigma = 0 the Picard limit is M applied to the heat orbit
    ds = make_drift("allen-cahn")
    u0 = np.sin(grid.axis)
    u, st = picard_solve(u0, ds, make_sigma("zero"), NoiseSpec(), grid, 40, 0.5,
                         noise=np.zeros((grid.M, grid.N)))
    ref = solve_m_array(semigroup_orbit(HeatSemigroup(grid), u0), grid, MSolverConfig(ds, mode="implicit"))
    assert np.allclose(u.values, ref, atol=1e-12)
