"""One-sided Lipschitz drifts and their Yosida regularization.

A drift ``f`` with ``f(u2) - f(u1) <= kappa (u2 - u1)`` for ``u1 < u2``
splits as ``f(u) = phi(u) + kappa u`` with ``phi`` non-increasing. The
Yosida approximation replaces ``phi`` by ``phi_n = n (J_n - I)`` where
``J_n = (I - phi / n)^{-1}`` is the resolvent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Evaluator = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DriftSpec:
    """Drift ``f`` with one-sided Lipschitz constant ``kappa``.

    ``K`` and ``nu`` are the constants of the growth bound
    ``|f(u)| <= K exp(K |u|^nu)``. ``f`` must accept numpy arrays.
    """

    f: Evaluator
    kappa: float
    K: float = 1.0
    nu: float = 1.0
    name: str = "custom"
    params: dict = field(default_factory=dict)
    dphi: Evaluator | None = None

    def __call__(self, u):
        return self.f(np.asarray(u, dtype=float))

    def phi(self, u):
        u = np.asarray(u, dtype=float)
        return self.f(u) - self.kappa * u

    def growth_bound(self, u):
        u = np.asarray(u, dtype=float)
        with np.errstate(over="ignore"):
            return self.K * np.exp(self.K * np.abs(u) ** self.nu)


# -- catalog ----------------------------------------------------------------


def _cantor(u: np.ndarray, digits: int = 40) -> np.ndarray:
    """Cantor staircase on [0, 1]; continuous, non-decreasing, not absolutely continuous."""
    x = np.clip(u, 0.0, 1.0)
    out = np.zeros_like(x)
    scale = 0.5
    done = np.zeros(x.shape, dtype=bool)
    for _ in range(digits):
        x = 3.0 * x
        digit = np.floor(x)
        mid = (digit == 1) & ~done
        out = np.where(mid, out + scale, out)
        done |= mid
        out = np.where(~done & (digit >= 2), out + scale, out)
        x = x - digit
        scale *= 0.5
    return out


def polynomial_kappa(coeffs) -> float:
    """``sup_u f'(u)`` for a polynomial with odd degree and negative leading term.

    ``coeffs`` are in increasing order ``a_0, a_1, ...``.
    """
    p = np.polynomial.Polynomial(coeffs)
    dp = p.deriv()
    crit = dp.deriv().roots()
    crit = crit[np.abs(crit.imag) < 1e-12].real
    if crit.size == 0:
        return float(dp(0.0)) if dp.degree() == 0 else float("inf")
    return float(np.max(dp(crit)))


def _dcubic(u):
    return -3.0 * u * u


def make_drift(name: str, **params) -> DriftSpec:
    """Build a catalog drift by name.

    Catalog: ``allen-cahn`` (u - u^3), ``neg-cubic`` (-u^3),
    ``damped-cubic`` (-u/2 - u^3), ``linear`` (a u), ``zero``,
    ``polynomial`` (coefficients ``coeffs``), ``neg-sinh`` (-sinh u),
    ``neg-cube-root`` (-sgn(u)|u|^(1/3)) and ``neg-cantor`` (minus the
    Cantor staircase extended periodically by integer steps).
    """
    if name == "allen-cahn":
        return DriftSpec(lambda u: u - u * u * u, kappa=1.0, K=3.0, nu=1.0, name=name, dphi=_dcubic)
    if name == "neg-cubic":
        return DriftSpec(lambda u: -(u * u * u), kappa=0.0, K=3.0, nu=1.0, name=name, dphi=_dcubic)
    if name == "damped-cubic":
        return DriftSpec(lambda u: -0.5 * u - u * u * u, kappa=-0.5, K=3.0, nu=1.0, name=name,
                         dphi=_dcubic)
    if name == "linear":
        a = float(params.get("a", -1.0))
        return DriftSpec(lambda u: a * u, kappa=a, K=max(abs(a), 1.0), nu=1.0, name=name,
                         params={"a": a}, dphi=np.zeros_like)
    if name == "zero":
        return DriftSpec(np.zeros_like, kappa=0.0, K=1.0, nu=0.0, name=name, dphi=np.zeros_like)
    if name == "polynomial":
        coeffs = [float(c) for c in params["coeffs"]]
        if (len(coeffs) - 1) % 2 == 0 or coeffs[-1] >= 0:
            raise ValueError("polynomial drift needs odd degree and a negative leading coefficient")
        poly = np.polynomial.Polynomial(coeffs)
        K = float(sum(abs(c) * math.factorial(k) for k, c in enumerate(coeffs))) + 1.0
        kappa = polynomial_kappa(coeffs)
        dpoly = poly.deriv()
        return DriftSpec(poly, kappa=kappa, K=K, nu=1.0, name=name, params={"coeffs": coeffs},
                         dphi=lambda u: dpoly(u) - kappa)
    if name == "neg-sinh":
        return DriftSpec(lambda u: -np.sinh(u), kappa=0.0, K=1.0, nu=1.0, name=name,
                         dphi=lambda u: -np.cosh(u))
    if name == "neg-cube-root":
        return DriftSpec(lambda u: -np.cbrt(u), kappa=0.0, K=1.0, nu=1.0, name=name)
    if name == "neg-cantor":
        def f(u):
            fl = np.floor(u)
            return -(fl + _cantor(u - fl))
        return DriftSpec(f, kappa=0.0, K=2.0, nu=1.0, name=name)
    raise ValueError(f"unknown drift {name!r}")


# -- checks -------------------------------------------------------------------


@dataclass
class OneSidedReport:
    max_violation: float
    sign_form_violation: float
    threshold: float
    passed: bool
    worst_pair: tuple[float, float]


def verify_one_sided_lipschitz(
    ds: DriftSpec, samples: int = 10_000, range_=(-5.0, 5.0), seed: int = 0,
    kappa: float | None = None,
) -> OneSidedReport:
    """Largest sampled ``f(u2) - f(u1) - kappa (u2 - u1)`` over pairs ``u1 < u2``.

    Pairs are all neighbours of the sorted sample plus as many random pairs.
    The sign form ``(f(u1) - f(u2)) sgn(u1 - u2) - kappa |u1 - u2|`` is
    evaluated on the same pairs.
    """
    a, b = range_
    if not a < b or samples < 2:
        raise ValueError("need a < b and at least two samples")
    kappa = ds.kappa if kappa is None else kappa
    rng = np.random.default_rng(seed)
    u = np.sort(np.concatenate([rng.uniform(a, b, samples), [a, b]]))
    fu = ds(u)
    i = np.concatenate([np.arange(u.size - 1), rng.integers(0, u.size, samples)])
    j = np.concatenate([np.arange(1, u.size), rng.integers(0, u.size, samples)])
    lo, hi = np.minimum(i, j), np.maximum(i, j)
    keep = u[hi] > u[lo]
    lo, hi = lo[keep], hi[keep]
    viol = (fu[hi] - fu[lo]) - kappa * (u[hi] - u[lo])
    sign_viol = (fu[lo] - fu[hi]) * np.sign(u[lo] - u[hi]) - kappa * np.abs(u[lo] - u[hi])
    k = int(np.argmax(viol))
    threshold = 1e-9 * (1.0 + float(np.max(np.abs(fu))))
    worst = float(viol[k])
    return OneSidedReport(worst, float(np.max(sign_viol)), threshold, worst <= threshold,
                          (float(u[lo[k]]), float(u[hi[k]])))


def check_growth(ds: DriftSpec, samples: int = 10_000, range_=(-5.0, 5.0), seed: int = 0) -> bool:
    """Sampled check of ``|f(u)| <= K exp(K |u|^nu)``."""
    u = np.random.default_rng(seed).uniform(*range_, samples)
    return bool(np.all(np.abs(ds(u)) <= ds.growth_bound(u)))


# -- Yosida ---------------------------------------------------------------------


class BracketError(RuntimeError):
    """Resolvent bracket did not produce a sign change."""


@dataclass(frozen=True)
class YosidaApprox:
    """Yosida regularization of ``base`` at index ``n``."""

    base: DriftSpec
    n: float
    tol: float = 1e-12
    growth: float = 2.0

    def __post_init__(self):
        if not self.n > 0:
            raise ValueError(f"Yosida index must be positive, got {self.n}")

    def resolvent(self, u):
        return yosida_resolvent(self, u)

    def phi_n(self, u):
        return yosida_phi_n(self, u)

    def __call__(self, u):
        return regularized_drift(self, u)


def _solve_increasing(g, lo, hi, tol, dg=None, max_iter=200):
    """Vectorized root of a strictly increasing ``g`` bracketed by ``[lo, hi]``.

    Newton when the derivative ``dg`` is known, otherwise Illinois false
    position with a bisection every third step; steps leaving the bracket
    fall back to bisection. Converged entries leave the working set.
    """
    x = 0.5 * (lo + hi)
    idx = np.arange(x.size)
    lo, hi, tol = lo.copy(), hi.copy(), np.broadcast_to(tol, x.shape).copy()
    glo, ghi = g(lo, idx), g(hi, idx)
    cur = x.copy()
    side = np.zeros(x.size, dtype=np.int8)
    eps = 4 * np.finfo(float).eps
    for it in range(max_iter):
        mid = 0.5 * (lo + hi)
        if dg is None and it % 3 == 2:
            cand = mid
        else:
            with np.errstate(invalid="ignore", divide="ignore"):
                if dg is not None:
                    gc = g(cur, idx)
                    cand = cur - gc / dg(cur, idx)
                else:
                    cand = (lo * ghi - hi * glo) / (ghi - glo)
            bad = ~np.isfinite(cand) | (cand <= lo) | (cand >= hi)
            cand[bad] = mid[bad]
        gx = g(cand, idx)
        fin = (np.abs(gx) <= tol) | (hi - lo <= eps * np.maximum(1.0, np.abs(cand)))
        x[idx[fin]] = cand[fin]
        keep = ~fin
        if not keep.any():
            return x
        idx, cand, gx = idx[keep], cand[keep], gx[keep]
        lo, hi, glo, ghi, tol, side = lo[keep], hi[keep], glo[keep], ghi[keep], tol[keep], side[keep]
        below = gx < 0
        above = ~below
        lo[below], glo[below] = cand[below], gx[below]
        hi[above], ghi[above] = cand[above], gx[above]
        # Illinois: halve the stale endpoint value when the same side repeats
        ghi[below & (side == -1)] *= 0.5
        glo[above & (side == 1)] *= 0.5
        side = np.where(below, -1, 1).astype(np.int8)
        cur = cand
    x[idx] = 0.5 * (lo + hi)
    return x


def yosida_resolvent(y: YosidaApprox, u):
    """Solve ``v - phi(v) / n = u`` for ``v`` elementwise."""
    u_arr = np.asarray(u, dtype=float)
    shape = u_arr.shape
    flat = u_arr.reshape(-1)
    phi = y.base.phi
    n = y.n

    def g(v, idx):
        return v - phi(v) / n - flat[idx]

    dphi = y.base.dphi
    dg = None if dphi is None else (lambda v, idx: 1.0 - dphi(v) / n)

    # the root lies between u and u + phi(u)/n because phi is non-increasing
    step = phi(flat) / n
    pad = 1e-12 * (1.0 + np.abs(flat))
    lo = np.minimum(flat, flat + step) - pad
    hi = np.maximum(flat, flat + step) + pad
    all_idx = np.arange(flat.size)
    half = 0.5 * (hi - lo)
    for _ in range(200):
        bad_lo, bad_hi = g(lo, all_idx) > 0, g(hi, all_idx) < 0
        if not (bad_lo.any() or bad_hi.any()):
            break
        half = np.where(bad_lo | bad_hi, (half + 1.0) * y.growth, half)
        lo = np.where(bad_lo, flat - half, lo)
        hi = np.where(bad_hi, flat + half, hi)
    else:
        raise BracketError("resolvent bracket expansion failed after 200 doublings")
    tol = y.tol * (1.0 + np.abs(flat))
    v = _solve_increasing(g, lo, hi, tol, dg)
    return float(v[0]) if u_arr.ndim == 0 else v.reshape(shape)


def yosida_phi_n(y: YosidaApprox, u):
    """``phi_n(u) = n (J_n(u) - u)``; evaluated as ``phi(J_n(u))``, which is equal at the root."""
    v = yosida_resolvent(y, u)
    out = y.base.phi(v)
    return float(out) if np.ndim(out) == 0 else out


def regularized_drift(y: YosidaApprox, u):
    """``f_n(u) = phi_n(u) + kappa u``."""
    out = yosida_phi_n(y, u) + y.base.kappa * np.asarray(u, dtype=float)
    return float(out) if np.ndim(out) == 0 else out
