import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochheat.grid import (GridSpec, SpaceTimeField, WeightParams, batch_weighted_sup, field_from_csv,
                            field_to_csv, load_field, save_field, sup_over_centers, weight,
                            weight_equivalence_constant, weighted_sup_norm)


def test_grid_geometry():
    g = GridSpec(d=1, L=8.0, N=64, T=1.0, M=10)
    assert g.dx == pytest.approx(0.25)
    assert g.dt == pytest.approx(0.1)
    assert g.axis[0] == -8.0 and g.axis[-1] == pytest.approx(8.0 - 0.25)
    assert g.times[-1] == pytest.approx(1.0)
    assert g.shape == (64,)
    assert GridSpec(d=2, N=16).coords().shape == (2, 16, 16)


@pytest.mark.parametrize("kw", [{"d": 3}, {"N": 100}, {"L": -1.0}, {"T": 0.0}, {"M": 0}])
def test_grid_rejects_bad_parameters(kw):
    with pytest.raises(ValueError):
        GridSpec(**kw)


def test_window_covers_half_box():
    g = GridSpec(d=1, L=8.0, N=64, T=1.0, M=1)
    x = g.axis[g.window_slices()]
    assert x.min() >= -4.0 and x.max() <= 4.0
    assert g.window_mask().sum() == x.size


def test_default_centers_are_grid_points():
    g = GridSpec(d=2, L=8.0, N=32, T=1.0, M=1)
    cs = g.default_centers()
    assert len(cs) == 9
    for c in cs:
        assert np.allclose(np.array(c), g.axis[list(g.index_of(c))])


@pytest.mark.parametrize("theta", [0.3, 1.0, 2.5])
def test_weight_is_one_at_center(theta):
    assert weight(WeightParams(theta, (1.5,)), 1.5) == 1.0
    assert weight(WeightParams(theta, (1.5,), smooth=True), 1.5) == 1.0


def test_weight_examples():
    assert weight(WeightParams(2.0), 1.0) == pytest.approx(2.0)
    assert weight(WeightParams(2.0, smooth=True), 1.0) == pytest.approx(2.0)
    assert weight(WeightParams(1.0), 3.0) == pytest.approx(4.0)
    assert weight(WeightParams(1.0, smooth=True), 3.0) == pytest.approx(math.sqrt(10.0))
    assert 1 / math.sqrt(2) <= math.sqrt(10.0) / 4.0 <= math.sqrt(2)


@pytest.mark.parametrize("theta", [0.25, 0.5, 1.0, 1.5, 2.0])
def test_weight_equivalence_constant_at_most_two(theta):
    g = GridSpec(d=1, L=32.0, N=1024, T=1.0, M=1)
    C = weight_equivalence_constant(g, theta)
    assert 1.0 <= C <= 2.0


@given(st.floats(0.05, 3.0), st.floats(-20, 20), st.floats(-20, 20))
def test_weight_at_least_one(theta, x, x0):
    w = weight(WeightParams(theta, (x0,)), x)
    assert w >= 1.0
    if abs(x - x0) > 1e-3:
        assert w > 1.0


def test_norm_of_zero_and_constant():
    g = GridSpec(d=1, L=8.0, N=64, T=0.1, M=4)
    wp = WeightParams(1.0, (0.0,))
    assert weighted_sup_norm(SpaceTimeField.zeros(g), wp) == 0.0
    assert weighted_sup_norm(SpaceTimeField.constant(g, 2.5), wp) == pytest.approx(2.5)


def test_norm_of_distance_field():
    g = GridSpec(d=1, L=8.0, N=64, T=0.1, M=2)
    vals = np.broadcast_to(np.abs(g.axis), (3, 64)).copy()
    n = weighted_sup_norm(SpaceTimeField(g, vals), WeightParams(1.0))
    assert n == pytest.approx(8.0 / 9.0)


def test_norm_time_range(small_grid):
    vals = np.zeros((small_grid.M + 1,) + small_grid.shape)
    vals[50] = 3.0
    f = SpaceTimeField(small_grid, vals)
    wp = WeightParams(1.0)
    assert weighted_sup_norm(f, wp, (0, 50)) == 0.0
    assert weighted_sup_norm(f, wp, (0, 51)) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        weighted_sup_norm(f, wp, (10, 10))


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.integers(0, 2**31 - 1))
def test_norm_homogeneity_and_triangle(a, seed):
    g = GridSpec(d=1, L=8.0, N=32, T=0.1, M=3)
    r = np.random.default_rng(seed)
    f = SpaceTimeField(g, r.standard_normal((4, 32)))
    h = SpaceTimeField(g, r.standard_normal((4, 32)))
    wp = WeightParams(0.7, (1.0,))
    assert weighted_sup_norm(f.scaled(a), wp) == pytest.approx(abs(a) * weighted_sup_norm(f, wp), rel=1e-12,
                                                               abs=1e-300)
    assert weighted_sup_norm(f + h, wp) <= weighted_sup_norm(f, wp) + weighted_sup_norm(h, wp) + 1e-12


def test_center_equivalence(rng):
    g = GridSpec(d=1, L=8.0, N=64, T=0.1, M=3)
    f = SpaceTimeField(g, rng.standard_normal((4, 64)))
    theta, a, b = 1.3, 0.0, 3.0
    na = weighted_sup_norm(f, WeightParams(theta, (a,)))
    nb = weighted_sup_norm(f, WeightParams(theta, (b,)))
    bound = 1 + abs(a - b) ** theta
    assert na / nb <= bound and nb / na <= bound


def test_sup_over_centers(rng):
    g = GridSpec(d=1, L=8.0, N=64, T=0.1, M=3)
    f = SpaceTimeField(g, rng.standard_normal((4, 64)))
    assert sup_over_centers(f, 1.0, [(0.0,)], 3) == pytest.approx(weighted_sup_norm(f, WeightParams(1.0)) ** 3)
    c = SpaceTimeField.constant(g, 1.5)
    assert sup_over_centers(c, 1.0, [(-2.0,), (2.0,)], 4) == pytest.approx(1.5**4)
    sym = SpaceTimeField(g, np.broadcast_to(np.cos(g.axis), (4, 64)).copy())
    a = weighted_sup_norm(sym, WeightParams(1.0, (-2.0,)))
    b = weighted_sup_norm(sym, WeightParams(1.0, (2.0,)))
    assert a == pytest.approx(b, rel=1e-12)


def test_batch_weighted_sup_matches_scalar(rng):
    g = GridSpec(d=1, L=8.0, N=64, T=0.1, M=3)
    vals = rng.standard_normal((3, 4, 64))
    centers = [(0.0,), (2.0,)]
    out = batch_weighted_sup(vals, g, 0.8, centers, window=True)
    for b in range(3):
        for j, c in enumerate(centers):
            ref = weighted_sup_norm(vals[b], WeightParams(0.8, c), grid=g, window=True)
            assert out[b, j] == pytest.approx(ref)


def test_field_is_read_only_and_finite(small_grid):
    f = SpaceTimeField.zeros(small_grid)
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0
    bad = np.zeros((small_grid.M + 1,) + small_grid.shape)
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        SpaceTimeField(small_grid, bad)
    with pytest.raises(ValueError):
        SpaceTimeField(small_grid, np.zeros((3, 3)))


def test_binary_round_trip(tmp_path, rng):
    g = GridSpec(d=2, L=4.0, N=8, T=0.5, M=3)
    f = SpaceTimeField(g, rng.standard_normal((4, 8, 8)), "Z")
    save_field(f, tmp_path / "f.bin")
    back = load_field(tmp_path / "f.bin")
    assert back.grid == g and back.role == "Z"
    assert np.array_equal(back.values, f.values)


def test_csv_round_trip(tmp_path, rng):
    g = GridSpec(d=1, L=4.0, N=8, T=0.5, M=2)
    f = SpaceTimeField(g, rng.standard_normal((3, 8)))
    text = field_to_csv(f, tmp_path / "f.csv")
    assert text.splitlines()[0] == "t,x1,value"
    assert np.array_equal(field_from_csv(g, tmp_path / "f.csv").values, f.values)
