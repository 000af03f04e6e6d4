"""Spatially homogeneous Gaussian noise, white in time.

Spectral densities follow the convention ``Lambda(x) = int exp(i xi.x) g(xi) dxi``.
Increments over a time step ``dt`` are synthesized on the periodic lattice by
filtering real white noise with the square root of the circulant spectrum
``dt * (2 pi / dx)^d * g(xi_j)``, which gives covariance
``dt * (pi / L)^d * sum_j g(xi_j) exp(i xi_j.(x - y))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .grid import GridSpec
from .kernel import wavenumbers

KINDS = ("white", "gaussian", "riesz")


@dataclass(frozen=True)
class NoiseSpec:
    """Noise kind and parameters.

    ``white`` (d = 1 only), ``gaussian`` with correlation length ``ell``, or
    ``riesz`` with ``Lambda(x) = |x|^(-alpha)``, ``0 < alpha < min(d, 2)``.
    ``eta`` is the claimed strong Dalang exponent.
    """

    kind: str = "white"
    d: int = 1
    eta: float = 0.25
    ell: float = 1.0
    alpha: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.d not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.d}")
        if self.kind == "white" and self.d != 1:
            raise ValueError("space-time white noise violates the strong Dalang condition for d >= 2")
        if self.kind == "gaussian" and not self.ell > 0:
            raise ValueError("gaussian noise needs ell > 0")
        if self.kind == "riesz" and not 0 < self.alpha < min(self.d, 2):
            raise ValueError(f"riesz noise needs 0 < alpha < {min(self.d, 2)}, got {self.alpha}")

    @property
    def riesz_constant(self) -> float:
        d, a = self.d, self.alpha
        return special.gamma((d - a) / 2) / (2**a * math.pi ** (d / 2) * special.gamma(a / 2))

    def spectral_density(self, r) -> np.ndarray:
        """``g`` as a function of ``|xi|``."""
        r = np.asarray(r, dtype=float)
        if self.kind == "white":
            return np.full(r.shape, (2 * math.pi) ** (-self.d))
        if self.kind == "gaussian":
            ell = self.ell
            return (ell / math.sqrt(2 * math.pi)) ** self.d * np.exp(-0.5 * (ell * r) ** 2)
        with np.errstate(divide="ignore"):
            return self.riesz_constant * r ** (self.alpha - self.d)

    def correlation(self, r) -> np.ndarray:
        """``Lambda`` as a function of ``|x|``; white noise has no pointwise value."""
        r = np.asarray(r, dtype=float)
        if self.kind == "white":
            raise ValueError("white noise correlation is a delta measure")
        if self.kind == "gaussian":
            return np.exp(-(r**2) / (2 * self.ell**2))
        with np.errstate(divide="ignore"):
            return r ** (-self.alpha)

    def decay_exponent(self) -> float:
        """``s`` with ``g(xi) ~ |xi|^s`` at infinity (``-inf`` for rapid decay)."""
        if self.kind == "white":
            return 0.0
        if self.kind == "gaussian":
            return -math.inf
        return self.alpha - self.d

    def lattice_spectrum(self, grid: GridSpec, real: bool = True) -> np.ndarray:
        """``g(xi_j)`` on the FFT lattice; the Riesz zero mode takes its neighbours' value."""
        r = np.sqrt(wavenumbers(grid, real=real))
        g = self.spectral_density(r)
        if self.kind == "riesz":
            g.flat[0] = float(self.spectral_density(math.pi / grid.L))
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ValueError("negative or non-finite discrete spectral weight")
        return g

    def lattice_correlation(self, grid: GridSpec, lag) -> float:
        """Covariance per unit time between lattice points ``lag`` steps apart."""
        g = self.lattice_spectrum(grid, real=False)
        lag = np.atleast_1d(lag)
        phase = np.ones(grid.shape, dtype=complex)
        k = np.pi * np.fft.fftfreq(grid.N, d=1.0 / grid.N) / grid.L
        mesh = np.meshgrid(*([k] * grid.d), indexing="ij")
        for m, l in zip(mesh, lag):
            phase = phase * np.exp(1j * m * l * grid.dx)
        return float(((math.pi / grid.L) ** grid.d * np.sum(g * phase)).real)


@dataclass(frozen=True, eq=False)
class NoiseIncrement:
    """One white-in-time increment ``W(dy, [t, t + dt))`` on the lattice."""

    grid: GridSpec
    dt: float
    values: np.ndarray


@dataclass
class DalangResult:
    value: float
    finite: bool
    tail_exponent: float
    trend: list = field(default_factory=list)


def dalang_finite(ns: NoiseSpec, eta: float) -> bool:
    """Analytic rule: finite iff ``s + d < 2 (1 - eta)`` for ``g ~ |xi|^s``."""
    if not 0 < eta < 1:
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    return ns.decay_exponent() + ns.d < 2 * (1 - eta)


def dalang_integral(ns: NoiseSpec, eta: float, cutoff: float = 1e3) -> DalangResult:
    """Truncated strong Dalang integral over ``|xi| <= cutoff`` plus tail classification.

    ``trend`` holds the truncated values at ``cutoff / 100``, ``cutoff / 10``
    and ``cutoff`` so growth can be inspected.
    """
    if not 0 < eta < 1:
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    d = ns.d
    sphere = 2.0 if d == 1 else 2 * math.pi
    expo = 2 * (1 - eta)

    def radial(r):
        return ns.spectral_density(r) * r ** (d - 1) / (1 + r**expo)

    def integral(R):
        if ns.kind == "riesz":
            # integrable r^(alpha - 1) singularity at the origin
            c = ns.riesz_constant
            head, _ = integrate.quad(lambda r: c / (1 + r**expo), 0.0, min(1.0, R),
                                     weight="alg", wvar=(ns.alpha - 1, 0.0))
        else:
            head, _ = integrate.quad(radial, 0.0, min(1.0, R))
        tail = 0.0
        lo = 1.0
        while lo < R:
            hi = min(R, lo * 10)
            part, _ = integrate.quad(radial, lo, hi, limit=200)
            tail += part
            lo = hi
        return sphere * (head + tail)

    trend = [integral(cutoff / 100), integral(cutoff / 10), integral(cutoff)]
    tail_exp = ns.decay_exponent() + d - 1 - expo
    return DalangResult(trend[-1], dalang_finite(ns, eta), tail_exp, trend)


def classify_trend(trend, rtol: float = 1e-12) -> bool:
    """Read finiteness off truncated values at cutoffs ``R/100, R/10, R``.

    For a power tail ``r^e`` the increment over ``[R/10, R]`` is ``10^(e+1)``
    times the increment over ``[R/100, R/10]``; the integral converges iff
    that factor is below one. Negligible increments count as converged.
    """
    a, b, c = (float(v) for v in trend)
    d1, d2 = b - a, c - b
    if d2 <= rtol * max(abs(c), 1.0):
        return True
    return d1 > 0 and d2 / d1 < 1.0


def _filter(ns: NoiseSpec, grid: GridSpec, dt: float) -> np.ndarray:
    lam = dt * (2 * math.pi / grid.dx) ** grid.d * ns.lattice_spectrum(grid)
    return np.sqrt(lam)


def sample_increments(ns: NoiseSpec, grid: GridSpec, dt: float, rng: np.random.Generator,
                      count: int) -> np.ndarray:
    """``count`` independent increments stacked on the first axis."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if ns.d != grid.d:
        raise ValueError("noise and grid dimensions differ")
    axes = tuple(range(-grid.d, 0))
    eps = rng.standard_normal((count,) + grid.shape)
    return np.fft.irfftn(_filter(ns, grid, dt) * np.fft.rfftn(eps, axes=axes), s=grid.shape, axes=axes)


def sample_increment(ns: NoiseSpec, grid: GridSpec, dt: float, rng: np.random.Generator) -> NoiseIncrement:
    return NoiseIncrement(grid, dt, sample_increments(ns, grid, dt, rng, 1)[0])


def sample_path(ns: NoiseSpec, grid: GridSpec, rng: np.random.Generator) -> np.ndarray:
    """All ``M`` increments of one noise path, shape ``(M, N, ..., N)``."""
    return sample_increments(ns, grid, grid.dt, rng, grid.M)


def covariance_estimate(samples, lags, ns: NoiseSpec | None = None, dt: float | None = None,
                        grid: GridSpec | None = None) -> list[dict]:
    """Spatially averaged empirical covariance at lattice lags.

    ``samples`` is a list of :class:`NoiseIncrement` or an array with the
    sample index first. Standard errors come from the spread across samples.
    When ``ns`` is given the target ``dt * Lambda(lag)`` is attached; white
    noise uses the lattice delta ``dt / dx^d``.
    """
    if isinstance(samples, (list, tuple)):
        grid = samples[0].grid
        dt = samples[0].dt
        arr = np.stack([s.values for s in samples])
    else:
        arr = np.asarray(samples)
    if arr.shape[0] < 100:
        raise ValueError("covariance estimate needs at least 100 samples")
    return summarize_products(covariance_products(arr, lags), lags, ns, dt, grid)


def covariance_products(arr: np.ndarray, lags) -> np.ndarray:
    """Per-sample spatial means of ``X(x) X(x + lag)``, shape ``(samples, lags)``."""
    arr = np.asarray(arr, dtype=float)
    axes = tuple(range(1, arr.ndim))
    out = np.empty((arr.shape[0], len(lags)))
    for j, lag in enumerate(lags):
        shift = tuple(int(v) for v in np.atleast_1d(lag))
        out[:, j] = (arr * np.roll(arr, shift, axis=axes[: len(shift)])).mean(axis=axes)
    return out


def summarize_products(products: np.ndarray, lags, ns: NoiseSpec | None = None, dt: float | None = None,
                       grid: GridSpec | None = None) -> list[dict]:
    """Mean, standard error and (optionally) target per lag from :func:`covariance_products`."""
    rows = []
    for j, lag in enumerate(lags):
        shift = tuple(int(v) for v in np.atleast_1d(lag))
        per_sample = products[:, j]
        row = {
            "lag": shift if len(shift) > 1 else shift[0],
            "empirical": float(per_sample.mean()),
            "se": float(per_sample.std(ddof=1) / math.sqrt(per_sample.size)),
        }
        if ns is not None:
            dist = float(np.sqrt(np.sum((np.array(shift) * grid.dx) ** 2)))
            if ns.kind == "white":
                target = dt / grid.dx**grid.d if dist == 0 else 0.0
            else:
                target = dt * float(ns.correlation(dist))
            row["target"] = target
        rows.append(row)
    return rows
