"""Weighted growth of random fields: ball rescaling and moment scans.

A field ``X`` on ``R^d`` is pulled back to the unit ball through
``rho(z) = x0 + z (1 - |z|)^(-1/theta)`` and damped by ``(1 - |z|)``. The
weighted moments ``E (sup_x |X(x)| / (1 + |x - x0|^theta))^p`` are estimated
by Monte Carlo on truncated boxes; finiteness is read off from stability
under doubling the box and the replica count.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .parallel import map_replicas
from .stochastic import MomentEstimate, moment_from_sups


@dataclass(frozen=True)
class HolderSpec:
    """Moment-Hölder data ``E|X(x1) - X(x2)|^p <= A |x1 - x2|^(p gamma)``."""

    A: float
    p: float
    gamma: float
    d: int = 1
    beta: float | None = None
    x0: float = 0.0

    def __post_init__(self):
        extra = 1 if self.beta is not None else 0
        dim = self.d + extra
        if not self.p > dim or not self.p * self.gamma > dim:
            raise ValueError(f"need p > {dim} and p * gamma > {dim}")
        if self.beta is not None and not self.p * self.beta > dim:
            raise ValueError(f"need p * beta > {dim}")

    def threshold(self, p: float | None = None) -> float:
        """Smallest admissible weight exponent ``p gamma / (p - d)``."""
        p = self.p if p is None else p
        return p * self.gamma / (p - self.d)


# -- samplers ---------------------------------------------------------------------


def _brownian(L: float, dx: float, rng: np.random.Generator, block: float = 32.0) -> np.ndarray:
    """Two-sided Brownian motion with ``X(0) = 0`` on ``[-L, L]``.

    Increments are drawn outward in blocks of length ``block`` alternating
    right and left, so a path on ``[-2L, 2L]`` extends the one on ``[-L, L]``
    drawn from the same generator state.
    """
    per_block = int(round(block / dx))
    half = int(round(L / dx))
    blocks = -(-half // per_block)
    right, left = [], []
    for _ in range(blocks):
        right.append(rng.standard_normal(per_block))
        left.append(rng.standard_normal(per_block))
    r = np.cumsum(np.concatenate(right)[:half]) * math.sqrt(dx)
    l = np.cumsum(np.concatenate(left)[:half]) * math.sqrt(dx)
    return np.concatenate([l[::-1], [0.0], r])


def _power_exponential(gamma: float):
    def sample(L: float, dx: float, rng: np.random.Generator) -> np.ndarray:
        # stationary field with covariance exp(-|r|^(2 gamma)) by circulant embedding
        half = int(round(L / dx))
        n = 1 << int(math.ceil(math.log2(4 * half + 2)))
        lags = dx * np.minimum(np.arange(n), n - np.arange(n))
        lam = np.fft.rfft(np.exp(-(lags ** (2 * gamma)))).real
        lam = np.clip(lam, 0.0, None)
        eps = rng.standard_normal(n)
        field = np.fft.irfft(np.sqrt(lam) * np.fft.rfft(eps), n)
        return field[: 2 * half + 1]
    return sample


def _zero(L: float, dx: float, rng: np.random.Generator) -> np.ndarray:
    return np.zeros(2 * int(round(L / dx)) + 1)


@dataclass(frozen=True)
class FieldSampler:
    """Named generator of 1-d random field paths on ``x_j = -L + j dx``."""

    name: str
    spec: HolderSpec | None
    draw: Callable[[float, float, np.random.Generator], np.ndarray]
    stationary: bool = False

    def axis(self, L: float, dx: float) -> np.ndarray:
        half = int(round(L / dx))
        return dx * np.arange(-half, half + 1)

    def sample(self, L: float, dx: float, rng: np.random.Generator) -> np.ndarray:
        return self.draw(L, dx, rng)


def make_sampler(name: str, p: float = 8.0, **params) -> FieldSampler:
    """Catalog: ``brownian`` (gamma = 1/2), ``power-exponential`` (tunable ``gamma``), ``zero``."""
    if name == "brownian":
        A = 2 ** (p / 2) * math.gamma((p + 1) / 2) / math.sqrt(math.pi)
        return FieldSampler(name, HolderSpec(A, p, 0.5), _brownian)
    if name == "power-exponential":
        gamma = float(params.get("gamma", 0.5))
        if not 0 < gamma <= 1:
            raise ValueError("power-exponential sampler needs 0 < gamma <= 1")
        A = 2 ** p * math.gamma((p + 1) / 2) / math.sqrt(math.pi)
        return FieldSampler(name, HolderSpec(A, p, gamma), _power_exponential(gamma), stationary=True)
    if name == "zero":
        return FieldSampler(name, None, _zero, stationary=True)
    raise ValueError(f"unknown sampler {name!r}")


# -- ball compactification ----------------------------------------------------------


def rho(z, x0=0.0, theta: float = 1.0) -> np.ndarray:
    """``x0 + z (1 - |z|)^(-1/theta)`` for ``|z| < 1``; ``z`` has coordinates first for d > 1."""
    z = np.asarray(z, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    r = np.abs(z) if z.ndim <= 1 or x0.ndim == 0 else np.sqrt(np.sum(z**2, axis=0))
    with np.errstate(divide="ignore"):
        scale = (1.0 - r) ** (-1.0 / theta)
    if x0.ndim > 0:
        x0 = x0.reshape((-1,) + (1,) * (z.ndim - 1))
    return x0 + z * scale


def c_theta(theta: float, points: int = 100_001) -> float:
    """``inf_{0 <= t <= 1} (1 - t + t^theta)`` by a dense scan."""
    t = np.linspace(0.0, 1.0, points)
    return float(np.min(1.0 - t + t**theta))


@dataclass
class BallField:
    z: np.ndarray
    values: np.ndarray
    truncated: np.ndarray

    @property
    def truncated_fraction(self) -> float:
        return float(np.mean(self.truncated))


def ball_rescale(x: Sequence[np.ndarray] | np.ndarray, X: np.ndarray, x0=0.0, theta: float = 1.0,
                 points: int = 2001) -> BallField:
    """Sample ``Y(z) = (1 - |z|) X(rho(z))`` on a lattice of the closed unit ball.

    ``x`` is the 1-d axis (or a tuple of axes for d = 2) on which ``X`` is
    given; ``X`` is linearly interpolated. Points with ``rho(z)`` outside the
    box use the nearest boundary value and are flagged in ``truncated``.
    """
    if not theta > 0:
        raise ValueError("theta must be positive")
    axes = (np.asarray(x),) if isinstance(x, np.ndarray) else tuple(np.asarray(a) for a in x)
    d = len(axes)
    zs = np.linspace(-1.0, 1.0, points)
    if d == 1:
        z = zs
        r = np.abs(z)
        inside = r < 1
        xs = np.where(inside, rho(np.where(inside, z, 0.0), float(np.atleast_1d(x0)[0]), theta), 0.0)
        lo, hi = axes[0][0], axes[0][-1]
        trunc = inside & ((xs < lo) | (xs > hi))
        vals = np.interp(np.clip(xs, lo, hi), axes[0], X)
        Y = np.where(inside, (1.0 - r) * vals, 0.0)
        return BallField(z, Y, trunc)
    mesh = np.stack(np.meshgrid(zs, zs, indexing="ij"))
    r = np.sqrt(np.sum(mesh**2, axis=0))
    inside = r < 1
    safe = np.where(inside, mesh, 0.0)
    xs = rho(safe, np.broadcast_to(np.asarray(x0, dtype=float), (2,)), theta)
    lo = np.array([a[0] for a in axes]).reshape(2, 1, 1)
    hi = np.array([a[-1] for a in axes]).reshape(2, 1, 1)
    trunc = inside & np.any((xs < lo) | (xs > hi), axis=0)
    clipped = np.clip(xs, lo, hi)
    interp = RegularGridInterpolator(axes, X)
    vals = interp(np.moveaxis(clipped, 0, -1))
    Y = np.where(inside, (1.0 - r) * vals, 0.0)
    return BallField(mesh, Y, trunc)


# -- moment estimation ---------------------------------------------------------------


def weighted_sups(paths: np.ndarray, axis: np.ndarray, theta: float, centers,
                  region: Callable[[np.ndarray], np.ndarray] | None = None) -> np.ndarray:
    """``sup_x |X(x)| / (1 + |x - c|^theta)`` per path and center, shape ``(R, C)``."""
    mask = np.ones(axis.shape, dtype=bool) if region is None else region(axis)
    out = np.empty((paths.shape[0], len(centers)))
    absx = np.abs(paths[:, mask])
    for j, c in enumerate(centers):
        c = float(np.atleast_1d(c)[0])
        w = 1.0 + np.abs(axis[mask] - c) ** theta
        out[:, j] = np.max(absx / w, axis=1)
    return out


def _draw_paths(sampler: FieldSampler, L: float, dx: float, rngs) -> np.ndarray:
    return np.stack([sampler.sample(L, dx, r) for r in rngs])


def weighted_growth_moment(sampler: FieldSampler, theta: float, p: float, centers=(0.0,),
                           replicas: int = 2000, seed: int = 0, L: float = 32.0, dx: float = 1 / 16,
                           workers: int = 1, stream: int = 0) -> MomentEstimate:
    """Monte Carlo ``max_c E (sup_x |X| / (1 + |x - c|^theta))^p`` on ``[-L, L]``."""
    if replicas < 30:
        raise ValueError("a moment estimate needs at least 30 replicas")
    if sampler.spec is not None and not theta > sampler.spec.threshold(p):
        warnings.warn(f"theta = {theta:g} is below the admissible threshold "
                      f"{sampler.spec.threshold(p):g}", RuntimeWarning, stacklevel=2)
    axis = sampler.axis(L, dx)
    centers = list(centers)

    def job(ids, rngs):
        return list(weighted_sups(_draw_paths(sampler, L, dx, rngs), axis, theta, centers))

    sups = np.array(map_replicas(job, replicas, seed, workers, stream, chunk=250))
    return moment_from_sups(sups, p, 0.0, theta, [(c,) for c in centers], seed)


@dataclass
class DoublingResult:
    theta: float
    estimate_L: float
    estimate_2L: float
    se_L: float
    rel_change: float
    tail_L: float
    tail_2L: float
    tail_diff_se: float
    replica_change: float
    replica_se: float

    @property
    def l_stable(self) -> bool:
        return self.rel_change < 0.10

    @property
    def replica_stable(self) -> bool:
        return self.replica_change < 2 * self.replica_se

    @property
    def stable(self) -> bool:
        return self.l_stable and self.replica_stable

    @property
    def tail_shrinks(self) -> bool:
        return self.tail_L - self.tail_2L > 3 * self.tail_diff_se


def doubling_study(sampler: FieldSampler, theta: float, p: float, centers=(0.0,), replicas: int = 2000,
                   seed: int = 0, L: float = 32.0, dx: float = 1 / 16, workers: int = 1,
                   stream: int = 0) -> DoublingResult:
    """Compare estimates on ``[-L, L]`` and ``[-2L, 2L]`` with common random numbers.

    Also compares ``replicas`` against ``2 * replicas`` on ``[-L, L]`` and
    the weighted tails over ``L/2 < |x| <= L`` versus ``L < |x| <= 2L``.
    """
    centers = list(centers)

    def job(ids, rngs):
        out = []
        for r in rngs:
            state = r.bit_generator.state
            small = sampler.sample(L, dx, r)
            r.bit_generator.state = state
            big = sampler.sample(2 * L, dx, r)
            out.append((small, big))
        ax_s, ax_b = sampler.axis(L, dx), sampler.axis(2 * L, dx)
        small = np.stack([o[0] for o in out])
        big = np.stack([o[1] for o in out])
        s_small = weighted_sups(small, ax_s, theta, centers).max(axis=1)
        s_big = weighted_sups(big, ax_b, theta, centers).max(axis=1)
        t_small = weighted_sups(small, ax_s, theta, [0.0], lambda a: np.abs(a) > L / 2)[:, 0]
        t_big = weighted_sups(big, ax_b, theta, [0.0], lambda a: np.abs(a) > L)[:, 0]
        return list(zip(s_small, s_big, t_small, t_big))

    rows = np.array(map_replicas(job, 2 * replicas, seed, workers, stream, chunk=250))
    first = rows[:replicas]
    a, b = first[:, 0] ** p, first[:, 1] ** p
    est_L, est_2L = a.mean(), b.mean()
    tl, t2l = first[:, 2] ** p, first[:, 3] ** p
    diff = tl - t2l
    all_L = rows[:, 0] ** p
    rep_change = abs(all_L.mean() - est_L)
    rep_se = a.std(ddof=1) / math.sqrt(replicas)
    return DoublingResult(
        theta, float(est_L), float(est_2L), float(rep_se), float(abs(est_2L - est_L) / est_L),
        float(tl.mean()), float(t2l.mean()), float(diff.std(ddof=1) / math.sqrt(replicas)),
        float(rep_change), float(rep_se))


def threshold_scan(sampler: FieldSampler, p: float, thetas: Sequence[float], centers=(0.0,),
                   replicas: int = 2000, seed: int = 0, L: float = 32.0, dx: float = 1 / 16,
                   workers: int = 1, stream: int = 0) -> list[dict]:
    """One row per ``theta``: estimate on ``[-L, L]`` and the doubling stability flag."""
    rows = []
    for th in thetas:
        res = doubling_study(sampler, th, p, centers, replicas, seed, L, dx, workers, stream)
        rows.append({"theta": float(th), "L": L, "replicas": replicas, "estimate": res.estimate_L,
                     "estimate_2L": res.estimate_2L, "rel_change": res.rel_change,
                     "stable": res.stable})
    return rows
