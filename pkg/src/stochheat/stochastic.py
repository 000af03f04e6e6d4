"""Stochastic convolution, its weighted moments, and the Picard solver.

The mild solution is written as ``u = M(U0 + Z)`` with ``U0(t) = S(t) u0``
and ``Z`` the stochastic convolution of ``sigma(u)``. On one fixed noise path
the iteration

    Z_0 = 0,    Z_{n+1} = stoch_conv(sigma(M(U0 + Z_n)))

is run until successive iterates agree in the weighted sup metric taken
over a finite set of centers.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .detmap import MSolverConfig, solve_m_array
from .drift import DriftSpec
from .grid import GridSpec, SpaceTimeField, batch_weighted_sup
from .kernel import HeatSemigroup, space_time_convolve
from .noise import NoiseIncrement, NoiseSpec, dalang_finite, sample_path
from .parallel import map_replicas

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SigmaSpec:
    """Noise coefficient ``sigma`` with Lipschitz constant ``lipschitz``."""

    sigma: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    bounded: bool = False
    name: str = "custom"

    def __call__(self, u):
        return self.sigma(np.asarray(u, dtype=float))

    def check_lipschitz(self, samples: int = 10_000, range_=(-5.0, 5.0), seed: int = 0) -> bool:
        rng = np.random.default_rng(seed)
        a, b = rng.uniform(*range_, (2, samples))
        return bool(np.all(np.abs(self(a) - self(b)) <= self.lipschitz * np.abs(a - b) + 1e-9))


def make_sigma(name: str, **params) -> SigmaSpec:
    """Catalog: ``zero``, ``one`` (constant ``c``), ``sin``, ``linear`` (``a u``)."""
    if name == "zero":
        return SigmaSpec(np.zeros_like, 0.0, True, name)
    if name == "one":
        c = float(params.get("c", 1.0))
        return SigmaSpec(lambda u: np.full_like(u, c), 0.0, True, name)
    if name == "sin":
        return SigmaSpec(np.sin, 1.0, True, name)
    if name == "linear":
        a = float(params.get("a", 1.0))
        return SigmaSpec(lambda u: a * u, abs(a), False, name)
    raise ValueError(f"unknown sigma {name!r}")


def _noise_array(noise) -> np.ndarray:
    if isinstance(noise, (list, tuple)) and noise and isinstance(noise[0], NoiseIncrement):
        return np.stack([w.values for w in noise])
    return np.asarray(noise, dtype=float)


def stochastic_convolution(sigma_field, noise, S: HeatSemigroup):
    """``Z_{k+1} = S(dt) [Z_k + sigma_k * dW_k]``, ``Z_0 = 0``.

    ``sigma_field`` has shape ``(..., M + 1, N, ..., N)`` (or is a
    :class:`SpaceTimeField`); ``noise`` holds the ``M`` increments with shape
    ``(..., M, N, ..., N)`` or is a list of :class:`NoiseIncrement`. Only
    ``sigma_k`` and ``dW_k`` enter ``Z_{k+1}``, so the result is adapted.
    """
    grid = S.grid
    is_field = isinstance(sigma_field, SpaceTimeField)
    sig = sigma_field.values if is_field else np.asarray(sigma_field, dtype=float)
    dw = _noise_array(noise)
    d = grid.d
    if dw.shape[-d:] != grid.shape or dw.shape[-d - 1] != grid.M:
        raise ValueError(f"noise shape {dw.shape} does not match grid")
    tax_s = sig.ndim - d - 1
    tax_w = dw.ndim - d - 1
    sig_t = np.moveaxis(sig, tax_s, 0)
    dw_t = np.moveaxis(dw, tax_w, 0)
    batch = np.broadcast_shapes(sig_t.shape[1:], dw_t.shape[1:])
    Z = np.zeros((grid.M + 1,) + batch)
    dt = grid.dt
    for k in range(grid.M):
        Z[k + 1] = S.apply(Z[k] + sig_t[k] * dw_t[k], dt)
    Z = np.moveaxis(Z, 0, len(batch) - d)
    return SpaceTimeField(grid, Z, "Z") if is_field and Z.ndim == d + 1 else Z


def semigroup_orbit(S: HeatSemigroup, u0: np.ndarray) -> np.ndarray:
    """``U0(t_k) = S(t_k) u0`` for all levels; ``u0`` may carry batch axes."""
    grid = S.grid
    u0 = np.asarray(u0, dtype=float)
    out = np.stack([S.apply(u0, k * grid.dt) for k in range(grid.M + 1)])
    return np.moveaxis(out, 0, u0.ndim - grid.d)


# -- moment estimates ---------------------------------------------------------------


@dataclass
class MomentEstimate:
    p: float
    value: float
    se: float
    replicas: int
    T: float
    theta: float
    centers: list
    ratio: float = float("nan")
    per_center: list = field(default_factory=list)

    def __post_init__(self):
        if self.replicas < 30:
            raise ValueError("a moment estimate needs at least 30 replicas")


def bootstrap_max_mean(samples: np.ndarray, rng: np.random.Generator, resamples: int = 500) -> float:
    """Bootstrap SE of ``max_c mean_r samples[r, c]``."""
    R = samples.shape[0]
    stats = np.empty(resamples)
    for b in range(resamples):
        idx = rng.integers(0, R, R)
        stats[b] = samples[idx].mean(axis=0).max()
    return float(stats.std(ddof=1))


def moment_from_sups(sups: np.ndarray, p: float, T: float, theta: float, centers, seed: int = 0,
                     sigma_moment: float = float("nan")) -> MomentEstimate:
    """Estimate ``max_c E[sup^p]`` from per-replica weighted sups, shape ``(R, C)``."""
    powered = sups**p
    means = powered.mean(axis=0)
    se = bootstrap_max_mean(powered, np.random.default_rng(seed))
    value = float(means.max())
    ratio = value / sigma_moment if sigma_moment and np.isfinite(sigma_moment) and sigma_moment > 0 else float("nan")
    return MomentEstimate(p, value, se, sups.shape[0], T, theta, [tuple(c) for c in centers], ratio,
                          [float(m) for m in means])


def check_moment_hypotheses(p: float, theta: float, d: int, eta: float) -> list[str]:
    """Violated hypotheses of the stochastic-convolution moment bound."""
    issues = []
    if not p > 2 * (d + 1) / eta:
        issues.append(f"p = {p:g} <= 2(d+1)/eta = {2 * (d + 1) / eta:g}")
    if not p > d + 1 or not theta > (d + 1) / (p - (d + 1)):
        issues.append(f"theta = {theta:g} <= (d+1)/(p-(d+1))")
    return issues


@dataclass
class StochConvSetup:
    """Stochastic convolution of a deterministic ``sigma(t, x)`` field."""

    noise: NoiseSpec
    grid: GridSpec
    sigma_field: np.ndarray | float = 1.0
    window: bool = True

    def sigma_array(self) -> np.ndarray:
        s = np.asarray(self.sigma_field, dtype=float)
        if s.ndim == 0:
            return np.full((self.grid.M + 1,) + self.grid.shape, float(s))
        return s

    def sigma_moment(self, p: float) -> float:
        return float(np.max(np.abs(self.sigma_array())) ** p)


def convolution_sups(setup: StochConvSetup, theta: float, centers, ids, rngs) -> list[np.ndarray]:
    """Per-replica weighted sups of the stochastic convolution (replica function)."""
    grid = setup.grid
    S = HeatSemigroup(grid)
    noise = np.stack([sample_path(setup.noise, grid, r) for r in rngs])
    Z = stochastic_convolution(setup.sigma_array(), noise, S)
    sups = batch_weighted_sup(Z, grid, theta, centers, setup.window)
    return list(sups)


def moment_bound_estimate(setup: StochConvSetup, T: float, p: float, theta: float, replicas: int,
                          seed: int = 0, centers=None, workers: int = 1, stream: int = 0) -> MomentEstimate:
    """Monte Carlo estimate of ``max_c E[ sup_t sup_x |Z| / w_c ]^p``."""
    if replicas < 30:
        raise ValueError("a moment estimate needs at least 30 replicas")
    grid = setup.grid
    if abs(grid.T - T) > 1e-12:
        grid = grid.with_horizon(T, max(1, int(round(T / grid.dt))))
        setup = StochConvSetup(setup.noise, grid, setup.sigma_field if np.ndim(setup.sigma_field) == 0
                               else setup.sigma_field[: grid.M + 1], setup.window)
    for issue in check_moment_hypotheses(p, theta, grid.d, setup.noise.eta):
        warnings.warn(f"moment bound hypothesis violated: {issue}", RuntimeWarning, stacklevel=2)
    centers = centers if centers is not None else grid.default_centers()
    sups = map_replicas(lambda ids, rngs: convolution_sups(setup, theta, centers, ids, rngs),
                        replicas, seed, workers, stream)
    return moment_from_sups(np.array(sups), p, T, theta, centers, seed,
                            setup.sigma_moment(p))


# -- Picard -------------------------------------------------------------------------


class PicardDivergence(RuntimeError):
    def __init__(self, state: "PicardState"):
        super().__init__(f"Picard iteration stopped contracting after {len(state.diffs)} steps; "
                         "shorten the horizon and restart")
        self.state = state


@dataclass
class PicardState:
    """Contraction history of one path.

    ``diffs[n]`` is ``max_c |Z_{n+1} - Z_n|_c`` and ``ratios[n - 1]`` is
    ``diffs[n] / diffs[n - 1]``; ``metric`` holds ``diffs ** p``.
    """

    p: float
    theta: float
    noise: np.ndarray
    Z: np.ndarray
    diffs: list[float] = field(default_factory=list)
    converged: bool = False
    u: np.ndarray | None = None

    @property
    def ratios(self) -> list[float]:
        d = self.diffs
        return [d[i] / d[i - 1] if d[i - 1] > 0 else 0.0 for i in range(1, len(d))]

    @property
    def metric(self) -> list[float]:
        return [v**self.p for v in self.diffs]

    @property
    def iterations(self) -> int:
        return len(self.diffs)


def check_solution_hypotheses(ds: DriftSpec, ns: NoiseSpec, p: float, theta: float) -> list[str]:
    """Parameter conditions on ``theta`` and ``p`` for the existence theorem."""
    d = ns.d
    issues = []
    if not theta > 0 or (ds.nu > 0 and not theta < 2 / ds.nu):
        issues.append(f"theta = {theta:g} outside (0, 2/nu) with nu = {ds.nu:g}")
    bound = max((1 + theta) * (d + 1) / theta, 2 * (d + 1) / ns.eta)
    if not p > bound:
        issues.append(f"p = {p:g} <= max{{(1+theta)(d+1)/theta, 2(d+1)/eta}} = {bound:g}")
    if not dalang_finite(ns, ns.eta):
        issues.append(f"strong Dalang integral diverges for eta = {ns.eta:g}")
    return issues


@dataclass
class PicardResult:
    u: np.ndarray
    states: list[PicardState]
    U0: np.ndarray


def picard_batch(u0: np.ndarray, ds: DriftSpec, ss: SigmaSpec, grid: GridSpec, noise: np.ndarray,
                 p: float, theta: float, tol: float = 1e-6, max_iter: int = 50, centers=None,
                 cfg: MSolverConfig | None = None, Z_init: np.ndarray | None = None,
                 S: HeatSemigroup | None = None, raise_on_divergence: bool = True) -> PicardResult:
    """Picard iteration for a batch of paths; ``noise`` has shape ``(B, M, N, ..., N)``.

    Paths leave the working set once converged, so each path's iterates do
    not depend on the others.
    """
    S = S or HeatSemigroup(grid)
    cfg = cfg or MSolverConfig(ds, mode="implicit")
    centers = centers if centers is not None else grid.default_centers()
    B = noise.shape[0]
    u0 = np.broadcast_to(np.asarray(u0, dtype=float), (B,) + grid.shape)
    U0 = semigroup_orbit(S, u0)
    Z = np.zeros((B, grid.M + 1) + grid.shape) if Z_init is None else np.array(Z_init, dtype=float)
    states = [PicardState(p, theta, noise[b], Z[b]) for b in range(B)]
    active = np.arange(B)
    for _ in range(max_iter):
        u = solve_m_array(U0[active] + Z[active], grid, cfg, S)
        Znew = stochastic_convolution(ss(u), noise[active], S)
        diffs = batch_weighted_sup(Znew - Z[active], grid, theta, centers, window=True).max(axis=1)
        Z[active] = Znew
        keep = []
        for j, b in enumerate(active):
            st = states[b]
            st.diffs.append(float(diffs[j]))
            st.Z = Z[b]
            if diffs[j] < tol:
                st.converged = True
                continue
            r = st.ratios
            if len(r) >= 3 and all(x >= 1 for x in r[-3:]):
                if raise_on_divergence:
                    raise PicardDivergence(st)
                continue
            keep.append(j)
        active = active[keep]
        log.debug("picard step: max diff %.3e, %d paths active", float(diffs.max()), active.size)
        if active.size == 0:
            break
    u = solve_m_array(U0 + Z, grid, cfg, S)
    for b, st in enumerate(states):
        st.u = u[b]
    return PicardResult(u, states, U0)


def picard_solve(u0: np.ndarray, ds: DriftSpec, ss: SigmaSpec, ns: NoiseSpec, grid: GridSpec,
                 p: float, theta: float, tol: float = 1e-6, max_iter: int = 50,
                 rng: np.random.Generator | None = None, noise: np.ndarray | None = None,
                 centers=None, cfg: MSolverConfig | None = None, Z_init=None,
                 S: HeatSemigroup | None = None) -> tuple[SpaceTimeField, PicardState]:
    """Mild solution on one noise path, with its contraction history."""
    for issue in check_solution_hypotheses(ds, ns, p, theta):
        warnings.warn(f"parameter condition violated: {issue}", RuntimeWarning, stacklevel=2)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if noise is None:
        if rng is None:
            raise ValueError("need a noise path or a generator")
        noise = sample_path(ns, grid, rng)
    Z_init = None if Z_init is None else np.asarray(Z_init)[None]
    res = picard_batch(np.asarray(u0), ds, ss, grid, np.asarray(noise)[None], p, theta, tol, max_iter,
                       centers, cfg, Z_init, S)
    return SpaceTimeField(grid, res.u[0], "u"), res.states[0]


def restart_horizon(u0: np.ndarray, ds: DriftSpec, ss: SigmaSpec, ns: NoiseSpec, grid: GridSpec,
                    segments: int, p: float, theta: float, tol: float = 1e-6, max_iter: int = 50,
                    rng: np.random.Generator | None = None, noise: np.ndarray | None = None,
                    centers=None, cfg: MSolverConfig | None = None):
    """Solve on ``[0, segments * T0]`` by restarting from each terminal slice.

    ``grid`` describes one segment. The noise path (``segments * M``
    increments) is drawn once and consumed in order. Each returned state
    keeps its segment solution in ``state.u``.
    """
    M0 = grid.M
    if noise is None:
        long_grid = grid.with_horizon(segments * grid.T, segments * M0)
        noise = sample_path(ns, long_grid, rng)
    S = HeatSemigroup(grid)
    pieces, states = [], []
    start = np.asarray(u0, dtype=float)
    for j in range(segments):
        u, st = picard_solve(start, ds, ss, ns, grid, p, theta, tol, max_iter,
                             noise=noise[j * M0:(j + 1) * M0], centers=centers, cfg=cfg, S=S)
        if not st.converged:
            raise PicardDivergence(st)
        pieces.append(u.values if j == 0 else u.values[1:])
        states.append(st)
        start = u.values[-1]
    full = grid.with_horizon(segments * grid.T, segments * M0)
    return SpaceTimeField(full, np.concatenate(pieces), "u"), states


def mild_residual(u, u0, ds: DriftSpec, ss: SigmaSpec, noise, S: HeatSemigroup, theta: float = 1.0,
                  centers=None) -> float:
    """``max_c |u - [S(t) u0 + int S f(u) + int S sigma(u) dW]|_c`` on the window.

    Every term is recomputed from scratch with the true drift ``f``.
    """
    grid = S.grid
    uv = u.values if isinstance(u, SpaceTimeField) else np.asarray(u, dtype=float)
    centers = centers if centers is not None else grid.default_centers()
    rebuilt = semigroup_orbit(S, u0) + space_time_convolve(S, ds(uv)) \
        + stochastic_convolution(ss(uv), noise, S)
    r = (uv - rebuilt)[None]
    return float(batch_weighted_sup(r, grid, theta, centers, window=True).max())
