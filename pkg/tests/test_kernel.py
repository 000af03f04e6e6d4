import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochheat.grid import GridSpec, SpaceTimeField
from stochheat.kernel import (HeatSemigroup, heat_kernel_value, mass_check, semigroup_apply,
                              space_time_convolve, wavenumbers)


@pytest.mark.parametrize("t,x,d,expected", [
    (1.0, 0.0, 1, (2 * math.pi) ** -0.5),
    (1.0, [0.0, 0.0], 2, 1 / (2 * math.pi)),
    (0.5, 1.0, 1, math.exp(-1) / math.sqrt(math.pi)),
])
def test_heat_kernel_values(t, x, d, expected):
    assert heat_kernel_value(t, x, d) == pytest.approx(expected, rel=1e-12)


def test_heat_kernel_matches_fourier_inversion():
    # G(t, x) = (1 / 2 pi) int exp(i xi x) exp(-xi^2 t / 2) dxi
    xi = np.linspace(-60, 60, 200_001)
    val = np.trapezoid(np.cos(xi * 1.0) * np.exp(-0.25 * xi**2), xi) / (2 * math.pi)
    assert heat_kernel_value(0.5, 1.0) == pytest.approx(val, rel=1e-9)


def test_heat_kernel_rejects_nonpositive_time():
    with pytest.raises(ValueError):
        heat_kernel_value(0.0, 1.0)


def test_wavenumbers_lattice():
    g = GridSpec(d=1, L=4.0, N=8, T=1.0, M=1)
    xi2 = wavenumbers(g, real=False)
    assert np.allclose(np.sqrt(xi2), np.abs(np.pi * np.fft.fftfreq(8, 1 / 8) / 4.0))


@pytest.mark.parametrize("t", [0.01, 0.1, 1.0])
def test_mass_check(t):
    S = HeatSemigroup(GridSpec(d=1, L=10.0, N=1024, T=1.0, M=1))
    assert abs(mass_check(S, t) - 1.0) < 1e-8


def test_mass_check_two_dimensions():
    S = HeatSemigroup(GridSpec(d=2, L=8.0, N=128, T=1.0, M=1))
    assert abs(mass_check(S, 0.5) - 1.0) < 1e-8


def test_multiplier_zero_mode_is_one():
    S = HeatSemigroup(GridSpec(d=1, L=8.0, N=64, T=1.0, M=1))
    assert S.multiplier(3.0).flat[0] == 1.0


def test_constant_preserved_and_identity_at_zero(rng):
    S = HeatSemigroup(GridSpec(d=1, L=8.0, N=64, T=1.0, M=1))
    c = np.full(64, 2.5)
    assert np.allclose(semigroup_apply(S, c, 0.7), 2.5, atol=1e-14)
    f = rng.standard_normal(64)
    out = S.apply(f, 0.0)
    assert np.array_equal(out, f) and out is not f
    with pytest.raises(ValueError):
        S.apply(f, -1.0)


@pytest.mark.parametrize("s2,t", [(0.25, 0.5), (1.0, 1.0), (0.1, 2.0)])
def test_gaussian_bump_variance_adds(s2, t):
    g = GridSpec(d=1, L=32.0, N=1024, T=1.0, M=1)
    S = HeatSemigroup(g)
    out = S.apply(heat_kernel_value(s2, g.axis), t)
    assert np.max(np.abs(out - heat_kernel_value(s2 + t, g.axis))) < 1e-8


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 2.0), st.floats(0.0, 2.0), st.integers(0, 2**31 - 1))
def test_semigroup_law(s, t, seed):
    S = HeatSemigroup(GridSpec(d=1, L=8.0, N=128, T=1.0, M=1))
    f = np.random.default_rng(seed).standard_normal(128)
    assert np.max(np.abs(S.apply(S.apply(f, s), t) - S.apply(f, s + t))) < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-3, 2.0), st.integers(0, 2**31 - 1))
def test_positivity_contraction_monotonicity(t, seed):
    S = HeatSemigroup(GridSpec(d=1, L=8.0, N=128, T=1.0, M=1))
    r = np.random.default_rng(seed)
    f = np.abs(S.apply(r.standard_normal(128), 0.05))
    g = f + np.abs(r.standard_normal(128))
    Sf, Sg = S.apply(f, t), S.apply(g, t)
    assert Sf.min() >= -1e-12 * f.max()
    assert np.abs(Sf).max() <= np.abs(f).max() * (1 + 1e-12)
    assert np.all(Sf <= Sg + 1e-12 * np.abs(g - f).max())


def test_batch_axes(rng):
    S = HeatSemigroup(GridSpec(d=2, L=4.0, N=16, T=1.0, M=1))
    f = rng.standard_normal((3, 16, 16))
    out = S.apply(f, 0.3)
    for b in range(3):
        assert np.allclose(out[b], S.apply(f[b], 0.3))


def test_space_time_convolve_sources(small_grid):
    S = HeatSemigroup(small_grid)
    zero = space_time_convolve(S, SpaceTimeField.zeros(small_grid))
    assert np.all(zero.values == 0)
    one = space_time_convolve(S, SpaceTimeField.constant(small_grid, 1.0))
    assert np.allclose(one.values[:, 0], small_grid.times, atol=1e-12)
    t = small_grid.times
    src = np.broadcast_to(t[:, None], (small_grid.M + 1, small_grid.N)).copy()
    v = space_time_convolve(S, src)
    assert np.max(np.abs(v[:, 0] - t**2 / 2)) <= 2 * small_grid.dt * small_grid.T
