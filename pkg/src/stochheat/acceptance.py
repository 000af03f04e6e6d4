"""The acceptance suite: one check per criterion, each writing a detail ledger.

Every check takes a :class:`Context` and returns a :class:`CriterionResult`.
Random streams are keyed by the criterion id, so checks can be run alone or
in any order with the same numbers.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .analysis import doubling_study, make_sampler
from .detmap import (GronwallAssumptionError, GronwallInputs, MSolverConfig, apriori_check,
                     batch_lipschitz_ratios, envelope, fit_exponential_envelope, gronwall_check,
                     relative_spread, solve_m_array)
from .drift import YosidaApprox, make_drift
from .grid import GridSpec, batch_weighted_sup
from .kernel import HeatSemigroup, heat_kernel_value, mass_check
from .ledger import LedgerSink
from .noise import (NoiseSpec, classify_trend, covariance_products, dalang_integral, sample_increments,
                    sample_path, summarize_products)
from .parallel import map_replicas
from .stochastic import (make_sigma, mild_residual, moment_from_sups, picard_batch, restart_horizon,
                         stochastic_convolution)

# Every tunable of the suite; echoed into the run manifest.
SETTINGS = {
    "grid": {"d": 1, "L": 32.0, "N": 1024, "dt": 1e-3},
    "c1": {"mass_times": [0.01, 0.1, 1.0], "semigroup_pair": [0.3, 0.7], "bump_variance": 0.5,
           "bump_time": 1.0},
    "c2": {"drifts": ["allen-cahn", "neg-cubic"], "n": [1, 10, 100], "samples": 10_000,
           "range": [-5.0, 5.0], "convergence_n": [1, 10, 100, 1000], "convergence_points": 20},
    "c3": {"T": 1.0, "dt": [1e-3, 5e-4], "N": 64, "abs_tol": 1e-3, "order_band": [1.8, 2.2]},
    "c4": {"fields": 100, "T": 0.5, "drifts": ["allen-cahn", "neg-cubic", "damped-cubic"],
           "z_range": [-2.0, 2.0], "smoothing_time": 0.02, "yosida_n": 64, "chunk": 10,
           "tight_pair": [64, 128]},
    "c5": {"pairs": 50, "centers": 9, "center_span": 8.0, "T": [0.1, 0.25, 0.5], "theta": 1.0,
           "spread_max": 0.10, "envelope_margin": 0.05, "amplitude": [0.5, 2.0],
           "shift": [-0.5, 0.5], "perturbation": [0.05, 0.5], "yosida_n": 64, "chunk": 10},
    "c6": {"ell": 1.0, "draws": 10_000, "lags": [0, 4, 8, 12, 16, 24, 32, 48], "se_band": 3.0,
           "eta": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9], "riesz_alpha_d1": [0.3, 0.7],
           "riesz_alpha_d2": [1.5], "cutoff": 1e3, "chunk": 500},
    "c7": {"T": 1.0, "eta": 0.25, "p": 8.0, "theta": 1.0, "replicas": 200, "se_band": 3.0,
           "shift_center": 8.0, "chunk": 10},
    "c8": {"T": 0.1, "p": 8.0, "theta": 1.0, "tol": 1e-6, "max_iter": 50, "paths": 50, "eta": 0.25,
           "u0_amplitude": 0.5, "ratio_max": 0.9, "fraction": 0.95, "residual_max": 1e-2,
           "uniqueness_factor": 10.0, "chunk": 25},
    "c9": {"T0": 0.1, "segments": 2, "tol": 1e-6, "u0_amplitude": 0.5, "p": 8.0, "theta": 1.0},
    "c10": {"theta": 0.75, "theta_low": 0.06, "p": 8.0, "replicas": 10_000, "L": 32.0, "dx": 1 / 16,
            "l_change_max": 0.10, "tail_se": 3.0},
    "c11": {"T": 1.0, "dt": 1e-3, "theta_values": [1e6, 1e12]},
}


@dataclass
class Context:
    seed: int
    workers: int
    sink: LedgerSink


@dataclass
class CriterionResult:
    id: int
    name: str
    anchor: str
    measured: str
    threshold: str
    passed: bool
    seconds: float = 0.0

    def row(self) -> dict:
        return {"id": self.id, "name": self.name, "anchor": self.anchor, "measured": self.measured,
                "threshold": self.threshold, "passed": self.passed}


def _grid(T: float, dt: float = SETTINGS["grid"]["dt"], N: int = SETTINGS["grid"]["N"]) -> GridSpec:
    g = SETTINGS["grid"]
    return GridSpec(d=g["d"], L=g["L"], N=N, T=T, M=int(round(T / dt)))


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def smooth_field(grid: GridSpec, S: HeatSemigroup, rng: np.random.Generator, amp: float,
                 low: float = -1.0, high: float = 1.0, smoothing: float = 0.02) -> np.ndarray:
    """Uniform noise smoothed by the heat flow and rescaled to sup norm ``amp``."""
    a = S.apply(rng.uniform(low, high, grid.shape), smoothing)
    return amp * a / np.max(np.abs(a))


def space_time_data(grid: GridSpec, S: HeatSemigroup, rng: np.random.Generator, amp: float,
                    **kw) -> np.ndarray:
    """Linear interpolation in time between two smooth random fields."""
    a = smooth_field(grid, S, rng, amp, **kw)
    b = smooth_field(grid, S, rng, amp, **kw)
    s = (grid.times / grid.T)[:, None]
    return a[None] * (1 - s) + b[None] * s


# -- 1 ------------------------------------------------------------------------------


def c1_kernel(ctx: Context) -> CriterionResult:
    cfg = SETTINGS["c1"]
    grid = _grid(1.0)
    S = HeatSemigroup(grid)
    x = grid.axis
    rows = []
    mass_err = 0.0
    for t in cfg["mass_times"]:
        e = abs(mass_check(S, t) - 1.0)
        mass_err = max(mass_err, e)
        rows.append({"check": "mass", "t": t, "error": e})
    rng = np.random.default_rng(np.random.SeedSequence(ctx.seed, spawn_key=(1,)))
    f = S.apply(rng.standard_normal(grid.shape), 0.05)
    s, t = cfg["semigroup_pair"]
    law_err = float(np.max(np.abs(S.apply(S.apply(f, s), t) - S.apply(f, s + t))))
    rows.append({"check": "semigroup", "t": s + t, "error": law_err})
    v, tb = cfg["bump_variance"], cfg["bump_time"]
    bump = heat_kernel_value(v, x)
    bump_err = float(np.max(np.abs(S.apply(bump, tb) - heat_kernel_value(v + tb, x))))
    rows.append({"check": "bump-variance", "t": tb, "error": bump_err})
    ctx.sink.write("c01_kernel.csv", rows)
    ok = mass_err <= 1e-8 and law_err <= 1e-10 and bump_err <= 1e-8
    return CriterionResult(1, "kernel calculus", "heat semigroup",
                           f"mass {_fmt(mass_err)}; law {_fmt(law_err)}; bump {_fmt(bump_err)}",
                           "1e-8; 1e-10; 1e-8", ok)


# -- 2 ------------------------------------------------------------------------------


def c2_yosida(ctx: Context) -> CriterionResult:
    cfg = SETTINGS["c2"]
    lo, hi = cfg["range"]
    rows = []
    failures = 0
    for k, name in enumerate(cfg["drifts"]):
        ds = make_drift(name)
        rng = np.random.default_rng(np.random.SeedSequence(ctx.seed, spawn_key=(2, k)))
        u = rng.uniform(lo, hi, cfg["samples"])
        a, b = np.sort(rng.uniform(lo, hi, (2, cfg["samples"])), axis=0)
        for n in cfg["n"]:
            y = YosidaApprox(ds, n)
            pa, pb = y.phi_n(a), y.phi_n(b)
            mono = float(np.max(pb - pa))
            lip = float(np.max(np.abs(pb - pa) - 2 * n * (b - a)))
            dom = float(np.max(np.abs(y.phi_n(u)) - np.abs(ds.phi(u))))
            # regularized drift: one-sided bound with constant kappa
            fa, fb = y(a), y(b)
            onesided = float(np.max((fb - fa) - ds.kappa * (b - a)))
            checks = {"non-increasing": (mono, 1e-9), "2n-Lipschitz": (lip, 1e-8),
                      "domination": (dom, 1e-8), "one-sided": (onesided, 1e-9)}
            for prop, (val, slack) in checks.items():
                ok = val <= slack
                failures += not ok
                rows.append({"drift": name, "n": n, "property": prop, "worst_excess": val,
                             "slack": slack, "passed": ok})
    pts = np.linspace(lo, hi, cfg["convergence_points"])
    not_decreasing = 0
    for name in cfg["drifts"]:
        ds = make_drift(name)
        errs = np.array([np.abs(YosidaApprox(ds, n).phi_n(pts) - ds.phi(pts)) for n in cfg["convergence_n"]])
        dec = np.all(np.diff(errs, axis=0) < 0, axis=0)
        not_decreasing += int(np.sum(~dec))
        for j, u0 in enumerate(pts):
            rows.append({"drift": name, "n": "all", "property": "convergence", "point": float(u0),
                         "errors": [float(e) for e in errs[:, j]], "passed": bool(dec[j])})
    ctx.sink.write("c02_yosida.csv", rows)
    return CriterionResult(2, "Yosida contract", "Yosida approximation properties",
                           f"{failures} property failures; {not_decreasing} points without strict error decrease",
                           "0; 0", failures == 0 and not_decreasing == 0)


# -- 3 ------------------------------------------------------------------------------


def c3_ode(ctx: Context) -> CriterionResult:
    cfg = SETTINGS["c3"]
    ds = make_drift("linear", a=-1.0)
    exact = math.exp(-cfg["T"])
    errs = []
    for dt in cfg["dt"]:
        grid = _grid(cfg["T"], dt, N=cfg["N"])
        z = np.ones((grid.M + 1,) + grid.shape)
        u = solve_m_array(z, grid, MSolverConfig(ds))
        errs.append(float(np.max(np.abs(u[-1] - exact))))
    ratio = errs[0] / errs[1]
    ctx.sink.write("c03_ode.csv", [{"dt": dt, "u_T_error": e} for dt, e in zip(cfg["dt"], errs)]
                   + [{"dt": "ratio", "u_T_error": ratio}])
    lo, hi = cfg["order_band"]
    ok = errs[0] < cfg["abs_tol"] and lo <= ratio <= hi
    return CriterionResult(3, "ODE reduction of M", "deterministic map",
                           f"error {_fmt(errs[0])}; halving ratio {_fmt(ratio)}",
                           f"< {cfg['abs_tol']:g}; in [{lo:g}, {hi:g}]", ok)


# -- 4 ------------------------------------------------------------------------------


def c4_apriori(ctx: Context) -> CriterionResult:
    cfg = SETTINGS["c4"]
    grid = _grid(cfg["T"])
    S = HeatSemigroup(grid)
    drifts = [make_drift(n) for n in cfg["drifts"]]
    lo, hi = cfg["z_range"]

    def job(ids, rngs):
        z = np.stack([S.apply(r.uniform(lo, hi, grid.shape), cfg["smoothing_time"]) for r in rngs])
        z2 = np.stack([S.apply(r.uniform(lo, hi, grid.shape), cfg["smoothing_time"]) for r in rngs])
        s = (grid.times / grid.T)[None, :, None]
        z = z[:, None] * (1 - s) + z2[:, None] * s
        out = [[] for _ in ids]
        for ds in drifts:
            u = solve_m_array(z, grid, MSolverConfig(ds, (cfg["yosida_n"],)), S)
            for j in range(len(ids)):
                rep = apriori_check(z[j], u[j], ds, grid.T, grid)
                out[j].append((ds.name, ds.kappa, rep.lhs, rep.rhs, rep.factor, rep.passed))
        return out

    res = map_replicas(job, cfg["fields"], ctx.seed, ctx.workers, stream=4, chunk=cfg["chunk"])
    rows = []
    violations = 0
    for i, per in enumerate(res):
        for name, kappa, lhs, rhs, factor, ok in per:
            violations += not ok
            rows.append({"field": i, "drift": name, "kappa": kappa, "lhs": lhs, "rhs": rhs,
                         "factor": factor, "passed": ok})
    # boundary-tight case: z = 1 is a fixed point of u - u^3. A single Yosida
    # index overshoots it by its regularization bias, so the extrapolated pair
    # decides; the single-index value is kept for reference.
    ac = make_drift("allen-cahn")
    z1 = np.ones((grid.M + 1,) + grid.shape)
    for label, msc in (("constant-one n=64", MSolverConfig(ac, (64,))),
                       ("constant-one extrapolated", MSolverConfig(ac, cfg["tight_pair"], richardson=True))):
        tight = apriori_check(z1, solve_m_array(z1, grid, msc, S), ac, grid.T, grid)
        rows.append({"field": label, "drift": ac.name, "kappa": ac.kappa, "lhs": tight.lhs,
                     "rhs": tight.rhs, "factor": tight.factor, "passed": tight.passed})
    special = [r for r in rows if r["kappa"] == -0.5]
    special_ok = bool(special) and all(r["factor"] == grid.T for r in special)
    ctx.sink.write("c04_apriori.csv", rows)
    ok = violations == 0 and tight.passed and special_ok
    return CriterionResult(4, "a-priori bound", "a-priori bound for M",
                           f"{violations} violations in {len(res) * len(drifts)}; kappa=-1/2 factor=T {special_ok}",
                           "0 violations", ok)


# -- 5 ------------------------------------------------------------------------------


def c5_lipschitz(ctx: Context) -> CriterionResult:
    cfg = SETTINGS["c5"]
    ds = make_drift("allen-cahn")
    msc = MSolverConfig(ds, (cfg["yosida_n"],))
    span = cfg["center_span"]
    centers = [(float(c),) for c in np.linspace(-span, span, cfg["centers"])]
    ratios = {}
    rows = []
    for T in cfg["T"]:
        grid = _grid(T)
        S = HeatSemigroup(grid)

        def job(ids, rngs):
            z1, z2 = [], []
            for i, r in zip(ids, rngs):
                a = space_time_data(grid, S, r, r.uniform(*cfg["amplitude"]))
                if i % 2 == 0:
                    d = np.full_like(a, r.uniform(*cfg["shift"]))
                else:
                    d = space_time_data(grid, S, r, r.uniform(*cfg["perturbation"]))
                z1.append(a)
                z2.append(a + d)
            return list(batch_lipschitz_ratios(np.array(z1), np.array(z2), grid, msc, cfg["theta"],
                                               centers, True, S))

        R = np.array(map_replicas(job, cfg["pairs"], ctx.seed, ctx.workers, stream=5, chunk=cfg["chunk"]))
        ratios[T] = R
        for i in range(R.shape[0]):
            for j, c in enumerate(centers):
                rows.append({"T": T, "pair": i, "center": c[0], "ratio": float(R[i, j])})
    half = cfg["pairs"] // 2
    C = fit_exponential_envelope(cfg["T"], [ratios[T][:half].max() for T in cfg["T"]],
                                 cfg["envelope_margin"])
    summary = []
    worst_excess = -math.inf
    spread = 0.0
    finite = True
    for T in cfg["T"]:
        R = ratios[T]
        finite &= bool(np.all(np.isfinite(R)))
        sp = relative_spread(R.max(axis=0))
        spread = max(spread, sp)
        held = float(R[half:].max())
        worst_excess = max(worst_excess, held / envelope(C, T) - 1.0)
        summary.append({"T": T, "max_ratio": float(R.max()), "center_spread": sp,
                        "fit_max": float(R[:half].max()), "heldout_max": held, "envelope": envelope(C, T)})
    ctx.sink.write("c05_lipschitz.csv", rows)
    ctx.sink.write("c05_lipschitz_summary.csv", summary + [{"T": "C", "max_ratio": C}])
    ctx.sink.plot("lipschitz_envelope", cfg["T"], [envelope(C, T) for T in cfg["T"]], "T", "envelope")
    ok = finite and spread <= cfg["spread_max"] and worst_excess <= 0
    return CriterionResult(5, "M-Lipschitz uniformity", "Lipschitz bound of M uniform in the center",
                           f"spread {_fmt(spread)}; C {_fmt(C)}; held-out excess {_fmt(worst_excess)}",
                           f"spread <= {cfg['spread_max']:g}; excess <= 0", ok)


# -- 6 ------------------------------------------------------------------------------


def _dalang_specs(cfg) -> list[NoiseSpec]:
    specs = [NoiseSpec("white"), NoiseSpec("gaussian", d=1), NoiseSpec("gaussian", d=2)]
    specs += [NoiseSpec("riesz", d=1, alpha=a) for a in cfg["riesz_alpha_d1"]]
    specs += [NoiseSpec("riesz", d=2, alpha=a) for a in cfg["riesz_alpha_d2"]]
    return specs


def c6_noise(ctx: Context) -> CriterionResult:
    cfg = SETTINGS["c6"]
    grid = _grid(1.0)
    dt = grid.dt
    ns = NoiseSpec("gaussian", ell=cfg["ell"])
    lags = cfg["lags"]

    def job(ids, rngs):
        arr = np.concatenate([sample_increments(ns, grid, dt, r, 1) for r in rngs])
        return list(covariance_products(arr, lags))

    prods = np.array(map_replicas(job, cfg["draws"], ctx.seed, ctx.workers, stream=6, chunk=cfg["chunk"]))
    cov = summarize_products(prods, lags, ns, dt, grid)
    worst = 0.0
    for r in cov:
        r["z"] = (r["empirical"] - r["target"]) / r["se"]
        worst = max(worst, abs(r["z"]))
    ctx.sink.write("c06_covariance.csv", cov)
    rows = []
    mismatch = 0
    for ns_d in _dalang_specs(cfg):
        for eta in cfg["eta"]:
            res = dalang_integral(ns_d, eta, cfg["cutoff"])
            numeric = classify_trend(res.trend)
            mismatch += numeric != res.finite
            rows.append({"kind": ns_d.kind, "d": ns_d.d, "alpha": ns_d.alpha if ns_d.kind == "riesz" else "",
                         "eta": eta, "analytic_finite": res.finite, "numeric_finite": numeric,
                         "trend": res.trend})
    ctx.sink.write("c06_dalang.csv", rows)
    ok = worst <= cfg["se_band"] and mismatch == 0
    return CriterionResult(6, "noise validation", "spatially homogeneous noise and Dalang condition",
                           f"max |z| {_fmt(worst)} over {len(lags)} lags; {mismatch}/{len(rows)} Dalang mismatches",
                           f"<= {cfg['se_band']:g} SE; 0 mismatches", ok)


# -- 7 ------------------------------------------------------------------------------


def _stoch_conv_stats(grid: GridSpec, ns: NoiseSpec, theta: float, centers, seed: int, workers: int,
                      replicas: int, chunk: int, stream: int) -> np.ndarray:
    """Per replica: weighted sups for each center set entry, then the mean of ``Z(T)^2``."""
    S = HeatSemigroup(grid)

    def job(ids, rngs):
        noise = np.stack([sample_path(ns, grid, r) for r in rngs])
        Z = stochastic_convolution(np.ones((grid.M + 1,) + grid.shape), noise, S)
        sups = batch_weighted_sup(Z, grid, theta, centers, window=True)
        var = np.mean(Z[:, -1] ** 2, axis=tuple(range(1, grid.d + 1)))
        return list(np.column_stack([sups, var]))

    return np.array(map_replicas(job, replicas, seed, workers, stream, chunk=chunk))


def c7_moments(ctx: Context) -> CriterionResult:
    cfg = SETTINGS["c7"]
    ns = NoiseSpec("white", eta=cfg["eta"])
    p, theta, R = cfg["p"], cfg["theta"], cfg["replicas"]
    T = cfg["T"]
    grid = _grid(T)
    centers = grid.default_centers()
    shift = grid.axis[grid.index_of([cfg["shift_center"]])[0]]
    all_centers = centers + [(0.0,), (float(shift),)]
    out = {}
    for label, g in (("T", grid), ("T/4", _grid(T / 4))):
        out[label] = _stoch_conv_stats(g, ns, theta, all_centers, ctx.seed, ctx.workers, R,
                                       cfg["chunk"], stream=7 if label == "T" else 70)
    C = len(centers)
    full = out["T"]
    var = full[:, -1]
    var_mean = float(var.mean())
    var_se = float(var.std(ddof=1) / math.sqrt(R))
    target = math.sqrt(T / math.pi)
    # exact variance of the lattice scheme, for reference
    S = HeatSemigroup(grid)
    delta = np.zeros(grid.shape)
    delta[grid.index_of([0.0])] = 1.0 / grid.dx
    lattice = sum(grid.dt * grid.dx * float(np.sum(S.apply(delta, k * grid.dt) ** 2))
                  for k in range(1, grid.M + 1))
    z_var = (var_mean - target) / var_se
    est = {k: moment_from_sups(v[:, :C], p, T if k == "T" else T / 4, theta, centers, ctx.seed)
           for k, v in out.items()}
    sep = (est["T"].value - est["T/4"].value) / math.hypot(est["T"].se, est["T/4"].se)
    e0 = moment_from_sups(full[:, C:C + 1], p, T, theta, [(0.0,)], ctx.seed)
    e8 = moment_from_sups(full[:, C + 1:C + 2], p, T, theta, [(float(shift),)], ctx.seed)
    shift_z = abs(e0.value - e8.value) / math.hypot(e0.se, e8.se)
    ctx.sink.write("c07_moments.csv", [
        {"quantity": "point variance", "value": var_mean, "se": var_se, "target": target,
         "lattice_target": lattice, "z": z_var},
        {"quantity": "moment T", "value": est["T"].value, "se": est["T"].se, "T": T},
        {"quantity": "moment T/4", "value": est["T/4"].value, "se": est["T/4"].se, "T": T / 4},
        {"quantity": "separation", "value": sep},
        {"quantity": "center 0", "value": e0.value, "se": e0.se},
        {"quantity": f"center {float(shift):g}", "value": e8.value, "se": e8.se},
        {"quantity": "center shift z", "value": shift_z},
    ])
    ctx.sink.plot("moment_vs_T", [T / 4, T], [est["T/4"].value, est["T"].value], "T", "moment")
    ok = abs(z_var) <= cfg["se_band"] and sep > cfg["se_band"]
    return CriterionResult(7, "stochastic-convolution moments", "moment bound for the stochastic convolution",
                           f"variance z {_fmt(z_var)}; T vs T/4 separation {_fmt(sep)} SE",
                           f"|z| <= {cfg['se_band']:g}; > {cfg['se_band']:g} SE", ok)


# -- 8 ------------------------------------------------------------------------------


def c8_picard(ctx: Context) -> CriterionResult:
    cfg = SETTINGS["c8"]
    grid = _grid(cfg["T"])
    S = HeatSemigroup(grid)
    ds, ss = make_drift("allen-cahn"), make_sigma("sin")
    ns = NoiseSpec("white", eta=cfg["eta"])
    u0 = cfg["u0_amplitude"] * np.cos(grid.axis)
    centers = grid.default_centers()
    p, theta, tol = cfg["p"], cfg["theta"], cfg["tol"]

    def job(ids, rngs):
        noise = np.stack([sample_path(ns, grid, r) for r in rngs])
        a = picard_batch(u0, ds, ss, grid, noise, p, theta, tol, cfg["max_iter"], centers, S=S,
                         raise_on_divergence=False)
        plain = stochastic_convolution(np.ones((grid.M + 1,) + grid.shape), noise, S)
        b = picard_batch(u0, ds, ss, grid, noise, p, theta, tol, cfg["max_iter"], centers, Z_init=plain,
                         S=S, raise_on_divergence=False)
        gap = batch_weighted_sup(np.stack([sa.Z - sb.Z for sa, sb in zip(a.states, b.states)]),
                                 grid, theta, centers, window=True).max(axis=1)
        out = []
        for j, (sa, sb) in enumerate(zip(a.states, b.states)):
            res = mild_residual(a.u[j], u0, ds, ss, noise[j], S, theta, centers)
            out.append({"ratios": sa.ratios, "diffs": sa.diffs, "converged": sa.converged,
                        "converged_alt": sb.converged, "residual": res, "gap": float(gap[j])})
        return out

    res = map_replicas(job, cfg["paths"], ctx.seed, ctx.workers, stream=8, chunk=cfg["chunk"])
    rows = []
    good = 0
    resid_ok = True
    gap_ok = True
    for i, r in enumerate(res):
        later = r["ratios"][1:]
        contracting = all(x < cfg["ratio_max"] for x in later)
        good += contracting
        if r["converged"]:
            resid_ok &= r["residual"] < cfg["residual_max"]
        both = r["converged"] and r["converged_alt"]
        gap_ok &= both and r["gap"] < cfg["uniqueness_factor"] * tol
        rows.append({"path": i, "iterations": len(r["diffs"]), "converged": r["converged"],
                     "contracting": contracting, "max_later_ratio": max(later) if later else 0.0,
                     "residual": r["residual"], "init_gap": r["gap"], "diffs": r["diffs"],
                     "seed": ctx.seed, "T": cfg["T"], "p": p, "theta": theta})
    frac = good / len(res)
    all_ratios = [x for r in res for x in r["ratios"]]
    ctx.sink.write("c08_picard.csv", rows)
    n_max = max(len(r["ratios"]) for r in res)
    mean_r = [float(np.mean([r["ratios"][k] for r in res if len(r["ratios"]) > k])) for k in range(n_max)]
    ctx.sink.plot("contraction_ratio_vs_n", range(1, n_max + 1), mean_r, "n", "mean_ratio")
    ok = frac >= cfg["fraction"] and resid_ok and gap_ok
    return CriterionResult(8, "Picard contraction", "Picard iteration for the mild solution",
                           f"contracting fraction {_fmt(frac)}; max ratio {_fmt(max(all_ratios))}; "
                           f"max residual {_fmt(max(r['residual'] for r in res))}; "
                           f"max init gap {_fmt(max(r['gap'] for r in res))}",
                           f">= {cfg['fraction']:g}; < {cfg['residual_max']:g}; < {cfg['uniqueness_factor'] * tol:g}",
                           ok)


# -- 9 ------------------------------------------------------------------------------


def c9_restart(ctx: Context) -> CriterionResult:
    cfg = SETTINGS["c9"]
    seg = _grid(cfg["T0"])
    ds, ss = make_drift("allen-cahn"), make_sigma("zero")
    ns = NoiseSpec("white", eta=0.25)
    u0 = cfg["u0_amplitude"] * np.cos(seg.axis)
    rng = np.random.default_rng(np.random.SeedSequence(ctx.seed, spawn_key=(9,)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        u, states = restart_horizon(u0, ds, ss, ns, seg, cfg["segments"], cfg["p"], cfg["theta"],
                                    cfg["tol"], rng=rng)
    full = u.grid
    S = HeatSemigroup(full)
    z = np.stack([S.apply(u0, k * full.dt) for k in range(full.M + 1)])
    single = solve_m_array(z, full, MSolverConfig(ds, mode="implicit"), S)
    diff = float(np.max(np.abs(u.values - single)))
    junction = all(np.array_equal(states[j].u[-1], states[j + 1].u[0]) for j in range(len(states) - 1))
    bound = 2 * full.dt
    ctx.sink.write("c09_restart.csv", [{"segments": cfg["segments"], "sup_diff": diff, "bound": bound,
                                        "junction_bit_exact": junction}])
    return CriterionResult(9, "horizon restart", "restarting the Picard scheme",
                           f"sup diff {_fmt(diff)}; junction exact {junction}",
                           f"<= {bound:g}; bit-exact", diff <= bound and junction)


# -- 10 -----------------------------------------------------------------------------


def c10_kolmogorov(ctx: Context) -> CriterionResult:
    cfg = SETTINGS["c10"]
    sampler = make_sampler("brownian", p=cfg["p"])
    rows = []
    results = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for k, th in enumerate((cfg["theta"], cfg["theta_low"])):
            r = doubling_study(sampler, th, cfg["p"], (0.0,), cfg["replicas"], ctx.seed, cfg["L"], cfg["dx"],
                               ctx.workers, stream=100 + k)
            results[th] = r
            rows.append({"theta": th, "estimate_L": r.estimate_L, "estimate_2L": r.estimate_2L,
                         "rel_change": r.rel_change, "tail_L": r.tail_L, "tail_2L": r.tail_2L,
                         "tail_diff_se": r.tail_diff_se, "replica_change": r.replica_change,
                         "replica_se": r.replica_se, "stable": r.stable, "tail_shrinks": r.tail_shrinks})
    ctx.sink.write("c10_kolmogorov.csv", rows)
    ctx.sink.plot("threshold_scan", [r["theta"] for r in rows], [r["rel_change"] for r in rows],
                  "theta", "rel_change")
    hi, low = results[cfg["theta"]], results[cfg["theta_low"]]
    tail_sep = (hi.tail_L - hi.tail_2L) / hi.tail_diff_se if hi.tail_diff_se > 0 else math.inf
    ok = hi.rel_change < cfg["l_change_max"] and hi.tail_shrinks and not low.stable
    return CriterionResult(10, "weighted Kolmogorov", "weighted Kolmogorov continuity",
                           f"L-doubling change {_fmt(hi.rel_change)}; tail drop {_fmt(tail_sep)} SE; "
                           f"theta={cfg['theta_low']:g} stable {low.stable}",
                           f"< {cfg['l_change_max']:g}; > {cfg['tail_se']:g} SE; unstable", ok)


# -- 11 -----------------------------------------------------------------------------


def c11_gronwall(ctx: Context) -> CriterionResult:
    cfg = SETTINGS["c11"]
    T, dt = cfg["T"], cfg["dt"]
    n = int(round(T / dt)) + 1
    t = np.arange(n) * dt
    zeros = np.zeros(n)
    rows = []
    # phi(t) = t with unit source
    a = gronwall_check(GronwallInputs(0.0, 1.0, zeros, zeros, t, dt), T)
    rows.append({"case": "linear", "Theta": 0.0, "lhs": a.lhs_sup, "rhs": a.rhs, "passed": a.passed})
    ok = a.passed and a.lhs_sup == T and a.rhs == T
    # a jump to psi then flat; the size of Theta must not matter
    jump = np.ones(n)
    jump[0] = 0.0
    rhs_seen = []
    for th in cfg["theta_values"]:
        b = gronwall_check(GronwallInputs(0.0, 0.0, np.ones(n), np.full(n, th), jump, dt), T)
        rows.append({"case": "jump", "Theta": th, "lhs": b.lhs_sup, "rhs": b.rhs, "passed": b.passed})
        ok &= b.passed and b.lhs_sup == 1.0 and b.rhs == 1.0
        rhs_seen.append(b.rhs)
    ok &= len(set(rhs_seen)) == 1
    c = gronwall_check(GronwallInputs(2.0, 0.5, np.full(n, 0.3), np.full(n, 5.0), zeros, dt), T)
    rows.append({"case": "zero", "Theta": 5.0, "lhs": c.lhs_sup, "rhs": c.rhs, "passed": c.passed})
    ok &= c.passed and c.lhs_sup == 0.0
    # negative control: overshooting psi must be rejected
    over = jump * 2.0
    try:
        gronwall_check(GronwallInputs(0.0, 0.0, np.ones(n), np.full(n, 1e6), over, dt), T)
        rejected = False
    except GronwallAssumptionError:
        rejected = True
    rows.append({"case": "overshoot", "Theta": 1e6, "passed": rejected})
    ok &= rejected
    ctx.sink.write("c11_gronwall.csv", rows)
    return CriterionResult(11, "Groenwall checker", "Groenwall-type lemma",
                           f"cases passed {sum(bool(r['passed']) for r in rows)}/{len(rows)}; "
                           f"Theta-insensitive {len(set(rhs_seen)) == 1}",
                           "all exact", ok)


CRITERIA: dict[int, Callable[[Context], CriterionResult]] = {
    1: c1_kernel, 2: c2_yosida, 3: c3_ode, 4: c4_apriori, 5: c5_lipschitz, 6: c6_noise,
    7: c7_moments, 8: c8_picard, 9: c9_restart, 10: c10_kolmogorov, 11: c11_gronwall,
}


def run_criteria(ctx: Context, ids=None, progress: Callable[[CriterionResult], None] | None = None
                 ) -> list[CriterionResult]:
    """Run the selected criteria (all by default) in id order."""
    out = []
    for cid in sorted(ids or CRITERIA):
        t0 = time.perf_counter()
        res = CRITERIA[cid](ctx)
        res.seconds = time.perf_counter() - t0
        out.append(res)
        if progress:
            progress(res)
    return out
