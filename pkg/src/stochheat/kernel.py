"""Heat kernel, spectral heat semigroup and space-time Duhamel convolution.

The semigroup has generator ``Delta / 2``; on the periodic box its Fourier
multiplier is ``exp(-|xi|^2 t / 2)`` with ``xi_j = pi j / L``.
"""

from __future__ import annotations

import math

import numpy as np

from .grid import GridSpec, SpaceTimeField


def heat_kernel_value(t: float, x, d: int = 1) -> float | np.ndarray:
    """``G(t, x) = (2 pi t)^(-d/2) exp(-|x|^2 / (2 t))``.

    ``x`` is a scalar (d=1), a point of length ``d``, or an array whose first
    axis holds the ``d`` coordinates.
    """
    if not t > 0:
        raise ValueError(f"heat kernel needs t > 0, got {t}")
    x = np.asarray(x, dtype=float)
    if d == 1 and (x.ndim == 0 or x.shape[0] != 1):
        r2 = x**2
    else:
        r2 = np.sum(x**2, axis=0)
    out = (2.0 * math.pi * t) ** (-d / 2.0) * np.exp(-r2 / (2.0 * t))
    return float(out) if np.ndim(out) == 0 else out


def wavenumbers(grid: GridSpec, real: bool = True) -> np.ndarray:
    """``|xi|^2`` on the (r)FFT lattice, shape of the transformed array."""
    k_full = np.pi * np.fft.fftfreq(grid.N, d=1.0 / grid.N) / grid.L
    k_last = np.pi * np.fft.rfftfreq(grid.N, d=1.0 / grid.N) / grid.L if real else k_full
    axes = [k_full] * (grid.d - 1) + [k_last]
    mesh = np.meshgrid(*axes, indexing="ij")
    return sum(k**2 for k in mesh)


class HeatSemigroup:
    """Spectral heat semigroup on a :class:`GridSpec`.

    Multipliers are cached per time value; after construction the object is
    only read, so it can be shared between threads.
    """

    def __init__(self, grid: GridSpec):
        self.grid = grid
        self._xi2 = wavenumbers(grid)
        self._axes = tuple(range(-grid.d, 0))
        self._cache: dict[float, np.ndarray] = {}

    def multiplier(self, t: float) -> np.ndarray:
        m = self._cache.get(t)
        if m is None:
            m = np.exp(-0.5 * self._xi2 * t)
            self._cache[t] = m
        return m

    def apply(self, f: np.ndarray, t: float) -> np.ndarray:
        """Apply ``S(t)`` to an array whose trailing ``d`` axes are spatial."""
        if t < 0:
            raise ValueError(f"semigroup time must be >= 0, got {t}")
        if t == 0:
            return np.array(f, dtype=float, copy=True)
        spatial = self.grid.shape
        fh = np.fft.rfftn(f, axes=self._axes)
        fh *= self.multiplier(t)
        return np.fft.irfftn(fh, s=spatial, axes=self._axes)


def semigroup_apply(S: HeatSemigroup, f: np.ndarray, t: float) -> np.ndarray:
    return S.apply(f, t)


def space_time_convolve(S: HeatSemigroup, source: SpaceTimeField | np.ndarray) -> SpaceTimeField | np.ndarray:
    """Duhamel integral ``int_0^t S(t - s) source(s) ds``, left endpoint in time.

    Uses ``v_{k+1} = S(dt) [v_k + dt * source_k]``; ``v_0 = 0``. Accepts a
    field or a raw array of shape ``(..., M + 1, N, ..., N)``.
    """
    grid = S.grid
    raw = source.values if isinstance(source, SpaceTimeField) else np.asarray(source, dtype=float)
    tax = raw.ndim - grid.d - 1
    src = np.moveaxis(raw, tax, 0)
    out = np.zeros_like(src)
    dt = grid.dt
    for k in range(grid.M):
        out[k + 1] = S.apply(out[k] + dt * src[k], dt)
    out = np.moveaxis(out, 0, tax)
    if isinstance(source, SpaceTimeField):
        return SpaceTimeField(grid, out, "v")
    return out


def mass_check(S: HeatSemigroup, t: float) -> float:
    """Riemann sum ``dx^d * sum_x G(t, x)`` over the box; should be 1."""
    if not t > 0:
        raise ValueError(f"mass check needs t > 0, got {t}")
    g = S.grid
    return float(g.dx**g.d * np.sum(heat_kernel_value(t, g.coords(), g.d)))
