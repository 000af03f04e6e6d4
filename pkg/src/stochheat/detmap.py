"""The deterministic map ``z -> M(z)`` and its diagnostics.

``u = M(z)`` solves ``u = int_0^t S(t - s) f(u(s)) ds + z``. Writing
``u = v + z`` the solver marches

    v_{k+1} = S(dt) [v_k + dt * f_n(v_k + z_k)],    v_0 = 0,

with the Yosida-regularized drift ``f_n``. In implicit mode ``n = 1 / dt``,
for which ``w + dt * phi_n(w)`` is exactly the backward-Euler drift step
``(I - dt * phi)^{-1}(w)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import lambertw

from .drift import DriftSpec, YosidaApprox
from .grid import GridSpec, SpaceTimeField, WeightParams, batch_weighted_sup, weighted_sup_norm
from .kernel import HeatSemigroup


@dataclass(frozen=True)
class MSolverConfig:
    """Settings for :func:`solve_m`.

    ``mode`` is ``"explicit"`` (Yosida index from ``n_schedule``) or
    ``"implicit"`` (index ``1 / dt``). With ``richardson=True`` and two
    indices the result is extrapolated linearly in ``1 / n``.
    """

    drift: DriftSpec
    n_schedule: tuple[float, ...] = (64,)
    mode: str = "explicit"
    richardson: bool = False
    tol: float = 1e-12

    def __post_init__(self):
        if self.mode not in ("explicit", "implicit"):
            raise ValueError(f"unknown mode {self.mode!r}")
        object.__setattr__(self, "n_schedule", tuple(self.n_schedule))

    def check_step(self, dt: float) -> None:
        if dt * max(self.drift.kappa, 0.0) >= 0.5:
            raise ValueError(f"dt * kappa = {dt * self.drift.kappa:g} must stay below 1/2")
        if self.mode == "explicit" and dt * max(self.n_schedule) > 0.25:
            warnings.warn(
                f"explicit Yosida step with n * dt = {dt * max(self.n_schedule):g} > 1/4; "
                "consider implicit mode", RuntimeWarning, stacklevel=3)

    def indices(self, dt: float) -> tuple[float, ...]:
        if self.mode == "implicit":
            return (1.0 / dt,)
        return self.n_schedule if self.richardson else self.n_schedule[:1]


def _is_zero_drift(ds: DriftSpec) -> bool:
    return ds.name == "zero"


def march(z: np.ndarray, S: HeatSemigroup, drift, dt: float) -> np.ndarray:
    """Return ``v`` for data ``z`` of shape ``(..., M + 1, N, ..., N)``."""
    d = S.grid.d
    tax = z.ndim - d - 1
    zt = np.moveaxis(z, tax, 0)
    v = np.zeros_like(zt)
    for k in range(zt.shape[0] - 1):
        incr = drift(v[k] + zt[k])
        if not np.all(np.isfinite(incr)):
            raise FloatingPointError(f"drift evaluation blew up at step {k}")
        v[k + 1] = S.apply(v[k] + dt * incr, dt)
    return np.moveaxis(v, 0, tax)


def solve_m_array(z: np.ndarray, grid: GridSpec, cfg: MSolverConfig,
                  S: HeatSemigroup | None = None) -> np.ndarray:
    """Array form of :func:`solve_m`; leading batch axes are allowed."""
    S = S or HeatSemigroup(grid)
    dt = grid.dt
    cfg.check_step(dt)
    z = np.asarray(z, dtype=float)
    if _is_zero_drift(cfg.drift):
        return z.copy()
    sols = []
    for n in cfg.indices(dt):
        y = YosidaApprox(cfg.drift, n, tol=cfg.tol)
        with np.errstate(over="raise", invalid="raise"):
            try:
                v = march(z, S, y, dt)
            except FloatingPointError as exc:
                raise FloatingPointError(
                    f"drift blow-up ({exc}); data outside the growth-safe range "
                    "may not be integrable") from None
        sols.append((n, v + z))
    if len(sols) == 1:
        return sols[0][1]
    (n1, u1), (n2, u2) = sols[0], sols[1]
    return (n2 * u2 - n1 * u1) / (n2 - n1)


def solve_m(z: SpaceTimeField, cfg: MSolverConfig, S: HeatSemigroup | None = None) -> SpaceTimeField:
    """``u = M(z)`` on the lattice; ``u(0) = z(0)``."""
    return SpaceTimeField(z.grid, solve_m_array(z.values, z.grid, cfg, S), "u")


def warn_if_growth_unsafe(z_sup: float, ds: DriftSpec) -> bool:
    """Warn when ``K exp(K |z|^nu)`` is close to float overflow."""
    with np.errstate(over="ignore"):
        expo = ds.K * z_sup**ds.nu if z_sup > 0 else 0.0
    if expo > 0.5 * math.log(np.finfo(float).max):
        warnings.warn(
            f"sup|z| = {z_sup:g} is outside the growth-safe range for {ds.name}; "
            "the drift of such data may not be integrable", RuntimeWarning, stacklevel=2)
        return True
    return False


# -- a-priori bound -------------------------------------------------------------


def apriori_factor(kappa: float, T: float) -> float:
    """``(exp((1 + 2 kappa) T) - 1) / (1 + 2 kappa)``, equal to ``T`` at ``kappa = -1/2``."""
    a = 1.0 + 2.0 * kappa
    if a == 0.0:
        return T
    return math.expm1(a * T) / a


@dataclass
class AprioriReport:
    lhs: float
    rhs: float
    passed: bool
    factor: float


def apriori_check(z: SpaceTimeField | np.ndarray, u: SpaceTimeField | np.ndarray, ds: DriftSpec,
                  T: float, grid: GridSpec | None = None) -> AprioriReport:
    """Compare ``sup |u|`` on the window with the a-priori bound.

    The right side uses ``z`` over the whole box since the window values of
    ``u`` depend on data outside it.
    """
    if isinstance(z, SpaceTimeField):
        grid = z.grid
        z = z.values
    if isinstance(u, SpaceTimeField):
        u = u.values
    win = (slice(None),) + grid.window_slices()
    lhs = float(np.max(np.abs(u[win])))
    factor = apriori_factor(ds.kappa, T)
    rhs = factor * float(np.max(np.abs(ds(z)))) + float(np.max(np.abs(z)))
    return AprioriReport(lhs, rhs, lhs <= rhs * (1 + 1e-3) + 1e-6, factor)


# -- Lipschitz diagnostics ---------------------------------------------------------


@dataclass
class LipschitzReport:
    ratios: list[float]
    centers: list[tuple[float, ...]]
    max_ratio: float
    spread: float
    skipped: bool = False


def relative_spread(values: Sequence[float]) -> float:
    v = np.asarray(values, dtype=float)
    return float((v.max() - v.min()) / v.max()) if v.max() > 0 else 0.0


def lipschitz_estimate(z1: SpaceTimeField, z2: SpaceTimeField, cfg: MSolverConfig,
                       wp_list: Sequence[WeightParams], window: bool = True,
                       S: HeatSemigroup | None = None) -> LipschitzReport:
    """Per-center ratio ``|M(z1) - M(z2)|_c / |z1 - z2|_c``."""
    grid = z1.grid
    centers = [wp.x0 for wp in wp_list]
    dz = z1.values - z2.values
    if not np.any(dz):
        return LipschitzReport([], centers, float("nan"), float("nan"), skipped=True)
    u = solve_m_array(np.stack([z1.values, z2.values]), grid, cfg, S)
    du = u[0] - u[1]
    ratios = [
        weighted_sup_norm(du, wp, grid=grid, window=window)
        / weighted_sup_norm(dz, wp, grid=grid, window=window)
        for wp in wp_list
    ]
    return LipschitzReport(ratios, centers, max(ratios), relative_spread(ratios))


def batch_lipschitz_ratios(z1: np.ndarray, z2: np.ndarray, grid: GridSpec, cfg: MSolverConfig,
                           theta: float, centers, window: bool = True,
                           S: HeatSemigroup | None = None) -> np.ndarray:
    """Ratios for a batch of pairs, shape ``(pairs, centers)``."""
    B = z1.shape[0]
    u = solve_m_array(np.concatenate([z1, z2]), grid, cfg, S)
    num = batch_weighted_sup(u[:B] - u[B:], grid, theta, centers, window)
    den = batch_weighted_sup(z1 - z2, grid, theta, centers, window)
    return num / den


def fit_exponential_envelope(horizons: Sequence[float], bounds: Sequence[float],
                             margin: float = 0.0) -> float:
    """Smallest ``C > 0`` with ``C exp(C T) >= bound`` for every pair, times ``1 + margin``.

    The minimal constant is tight on the fitting sample; a small relative
    margin keeps held-out samples from failing on sampling noise alone.
    """
    cs = []
    for T, m in zip(horizons, bounds):
        if m <= 0:
            continue
        cs.append(float(lambertw(m * T).real) / T)
    return (1.0 + margin) * max(cs) if cs else 0.0


def envelope(C: float, T: float) -> float:
    return C * math.exp(C * T)


# -- Gronwall-type lemma ---------------------------------------------------------


class GronwallAssumptionError(ValueError):
    def __init__(self, index: int, message: str):
        super().__init__(f"step {index}: {message}")
        self.index = index


@dataclass
class GronwallInputs:
    """Sampled inputs of the Grönwall-type lemma at times ``k * dt``."""

    C1: float
    C2: float
    psi: np.ndarray
    Theta: np.ndarray
    phi: np.ndarray
    dt: float

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=float)
        self.Theta = np.asarray(self.Theta, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        if self.C1 < 0 or self.C2 < 0:
            raise ValueError("C1 and C2 must be nonnegative")
        for name in ("psi", "Theta", "phi"):
            if np.any(getattr(self, name) < 0):
                raise ValueError(f"{name} must be nonnegative")
        if self.phi[0] != 0:
            raise ValueError("phi(0) must be 0")
        if not (self.psi.shape == self.Theta.shape == self.phi.shape):
            raise ValueError("psi, Theta and phi must share one time grid")


@dataclass
class GronwallReport:
    lhs_sup: float
    rhs: float
    passed: bool


def validate_gronwall_assumption(g: GronwallInputs, rtol: float = 1e-12) -> None:
    """Discrete form of the growth assumption, checked step by step.

    A step ``k -> k+1`` is admissible if the forward difference obeys
    ``C1 phi_k + C2`` (ordinary growth), or if ``phi_k < psi_k``, the
    difference obeys ``C1 phi_k + C2 + Theta_k`` and the new value does not
    overshoot ``psi_k + C2 dt`` (fast growth only below the threshold).
    """
    phi, psi, Th, dt = g.phi, g.psi, g.Theta, g.dt
    for k in range(phi.size - 1):
        slope = (phi[k + 1] - phi[k]) / dt
        slack = rtol * (1.0 + abs(slope))
        if slope <= g.C1 * phi[k] + g.C2 + slack:
            continue
        if (phi[k] < psi[k] and slope <= g.C1 * phi[k] + g.C2 + Th[k] + slack
                and phi[k + 1] <= psi[k] + g.C2 * dt + slack):
            continue
        raise GronwallAssumptionError(k, f"forward difference {slope:g} exceeds the admissible growth")


def gronwall_check(g: GronwallInputs, T: float | None = None) -> GronwallReport:
    """``sup phi <= (C2 T + sup psi) exp(C1 T)`` with a ``C2 dt exp(C1 T)`` slack."""
    validate_gronwall_assumption(g)
    T = g.dt * (g.phi.size - 1) if T is None else T
    n = min(g.phi.size, int(round(T / g.dt)) + 1)
    lhs = float(np.max(g.phi[:n]))
    rhs = (g.C2 * T + float(np.max(g.psi[:n]))) * math.exp(g.C1 * T)
    slack = g.C2 * g.dt * math.exp(g.C1 * T)
    return GronwallReport(lhs, rhs, lhs <= rhs * (1 + 1e-6) + slack)
