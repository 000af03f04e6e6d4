"""Experiment pipelines, run manifests and reports."""

from __future__ import annotations

import filecmp
import json
import logging
import os
import platform
import time
import traceback
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .acceptance import SETTINGS, Context, CriterionResult, run_criteria, space_time_data
from .analysis import make_sampler, threshold_scan
from .config import ExperimentConfig
from .detmap import MSolverConfig, apriori_check, batch_lipschitz_ratios, relative_spread, solve_m_array
from .drift import YosidaApprox
from .grid import SpaceTimeField, save_field
from .kernel import HeatSemigroup
from .ledger import LedgerSink, read_ledger
from .noise import (classify_trend, covariance_products, dalang_integral, sample_increments, sample_path,
                    summarize_products)
from .parallel import default_workers, map_replicas
from .stochastic import StochConvSetup, mild_residual, moment_bound_estimate, picard_batch

log = logging.getLogger(__name__)

OUT_ENV = "STOCHHEAT_OUT"
SUMMARY = "summary.csv"
SUMMARY_COLUMNS = ["id", "name", "anchor", "measured", "threshold", "passed"]


def resolve_out(cfg_out: str, cli_out: str | None = None) -> Path:
    """``--out`` wins over the environment, which wins over the config file."""
    return Path(cli_out or os.environ.get(OUT_ENV) or cfg_out)


@dataclass
class RunResult:
    path: Path
    status: str
    summary: list[dict] = field(default_factory=list)
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.status == "completed" and all(r["passed"] for r in self.summary)


def _row(i, name, anchor, measured, threshold, passed) -> dict:
    return {"id": i, "name": name, "anchor": anchor, "measured": measured, "threshold": threshold,
            "passed": bool(passed)}


def _msolver(cfg: ExperimentConfig) -> MSolverConfig:
    o = cfg.options
    return MSolverConfig(cfg.drift_spec(), tuple(o.get("yosida_n", [64])), o.get("mode", "explicit"),
                         bool(o.get("richardson", False)))


# -- pipelines ----------------------------------------------------------------------


def _deterministic_map(cfg: ExperimentConfig, sink: LedgerSink, workers: int) -> list[dict]:
    grid = cfg.grid_spec()
    S = HeatSemigroup(grid)
    ds = cfg.drift_spec()
    msc = _msolver(cfg)
    centers = cfg.center_list()
    amp = cfg.options.get("amplitude", [0.5, 2.0])
    pert = cfg.options.get("perturbation", [0.05, 0.5])

    def job(ids, rngs):
        z1 = np.stack([space_time_data(grid, S, r, r.uniform(*amp)) for r in rngs])
        z2 = z1 + np.stack([space_time_data(grid, S, r, r.uniform(*pert)) for r in rngs])
        R = batch_lipschitz_ratios(z1, z2, grid, msc, cfg.theta, centers, True, S)
        u = solve_m_array(z1, grid, msc, S)
        ap = [apriori_check(z1[j], u[j], ds, grid.T, grid) for j in range(len(ids))]
        return [(R[j], ap[j].lhs, ap[j].rhs, ap[j].passed) for j in range(len(ids))]

    res = map_replicas(job, cfg.replicas, cfg.seed, workers, chunk=10)
    R = np.array([r[0] for r in res])
    rows = [{"pair": i, "center": c[0] if len(c) == 1 else list(c), "T": grid.T, "ratio": float(R[i, j])}
            for i in range(len(res)) for j, c in enumerate(centers)]
    sink.write("lipschitz_ratios.csv", rows)
    sink.write("apriori.csv", [{"field": i, "lhs": r[1], "rhs": r[2], "passed": r[3]} for i, r in enumerate(res)])
    spread = relative_spread(R.max(axis=0))
    violations = sum(not r[3] for r in res)
    return [
        _row(1, "finite Lipschitz ratios", "Lipschitz bound of M", f"max {R.max():.6g}", "finite",
             np.all(np.isfinite(R))),
        _row(2, "center spread", "Lipschitz bound of M uniform in the center", f"{spread:.6g}", "<= 0.1",
             spread <= 0.1),
        _row(3, "a-priori bound", "a-priori bound for M", f"{violations} violations", "0", violations == 0),
    ]


def _yosida(cfg: ExperimentConfig, sink: LedgerSink, workers: int) -> list[dict]:
    ds = cfg.drift_spec()
    ns_list = cfg.options.get("n", [1, 10, 100])
    lo, hi = cfg.options.get("range", [-5.0, 5.0])
    samples = int(cfg.options.get("samples", 10_000))
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0,)))
    u = rng.uniform(lo, hi, samples)
    a, b = np.sort(rng.uniform(lo, hi, (2, samples)), axis=0)
    rows, out = [], []
    for n in ns_list:
        y = YosidaApprox(ds, n)
        pa, pb = y.phi_n(a), y.phi_n(b)
        checks = {
            "non-increasing": (float(np.max(pb - pa)), 1e-9),
            "2n-Lipschitz": (float(np.max(np.abs(pb - pa) - 2 * n * (b - a))), 1e-8),
            "domination": (float(np.max(np.abs(y.phi_n(u)) - np.abs(ds.phi(u)))), 1e-8),
        }
        for prop, (val, slack) in checks.items():
            rows.append({"n": n, "property": prop, "worst_excess": val, "slack": slack, "passed": val <= slack})
    sink.write("yosida_properties.csv", rows)
    pts = np.linspace(lo, hi, 20)
    errs = np.array([np.abs(YosidaApprox(ds, n).phi_n(pts) - ds.phi(pts)) for n in ns_list])
    sink.plot("yosida_error_vs_n", ns_list, errs.max(axis=1), "n", "max_error")
    dec = bool(np.all(np.diff(errs, axis=0) < 0))
    for i, r in enumerate(rows, 1):
        out.append(_row(i, f"{r['property']} n={r['n']}", "Yosida approximation properties",
                        f"{r['worst_excess']:.3g}", f"<= {r['slack']:g}", r["passed"]))
    out.append(_row(len(out) + 1, "pointwise convergence", "Yosida approximation properties",
                    f"strictly decreasing {dec}", "strictly decreasing", dec))
    return out


def _noise_validate(cfg: ExperimentConfig, sink: LedgerSink, workers: int) -> list[dict]:
    grid = cfg.grid_spec()
    ns = cfg.noise_spec()
    lags = cfg.options.get("lags", [0, 4, 8, 12, 16, 24, 32, 48])
    draws = max(100, cfg.replicas)

    def job(ids, rngs):
        arr = np.concatenate([sample_increments(ns, grid, grid.dt, r, 1) for r in rngs])
        return list(covariance_products(arr, lags))

    prods = np.array(map_replicas(job, draws, cfg.seed, workers, chunk=500))
    cov = summarize_products(prods, lags, ns, grid.dt, grid)
    worst = 0.0
    for r in cov:
        r["z"] = (r["empirical"] - r["target"]) / r["se"]
        worst = max(worst, abs(r["z"]))
    sink.write("covariance.csv", cov)
    sink.plot("covariance_vs_lag", [r["lag"] * grid.dx for r in cov], [r["empirical"] for r in cov],
              "distance", "covariance")
    rows, mismatch = [], 0
    for eta in cfg.options.get("eta", [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]):
        res = dalang_integral(ns, eta)
        numeric = classify_trend(res.trend)
        mismatch += numeric != res.finite
        rows.append({"eta": eta, "analytic_finite": res.finite, "numeric_finite": numeric, "trend": res.trend})
    sink.write("dalang.csv", rows)
    return [
        _row(1, "covariance", "spatially homogeneous noise", f"max |z| {worst:.4g}", "<= 3 SE", worst <= 3),
        _row(2, "Dalang classification", "strong Dalang condition", f"{mismatch} mismatches", "0", mismatch == 0),
    ]


def _stoch_conv(cfg: ExperimentConfig, sink: LedgerSink, workers: int) -> list[dict]:
    grid = cfg.grid_spec()
    setup = StochConvSetup(cfg.noise_spec(), grid, float(cfg.options.get("sigma", 1.0)))
    fracs = cfg.options.get("fractions", [0.25, 0.5, 1.0])
    centers = cfg.center_list()
    ests = []
    for k, f in enumerate(fracs):
        e = moment_bound_estimate(setup, f * grid.T, cfg.p, cfg.theta, cfg.replicas, cfg.seed, centers,
                                  workers, stream=k)
        ests.append(e)
    sink.write("moments.csv", [{"T": e.T, "p": e.p, "theta": e.theta, "value": e.value, "se": e.se,
                                "replicas": e.replicas, "ratio": e.ratio, "per_center": e.per_center}
                               for e in ests])
    sink.plot("moment_vs_T", [e.T for e in ests], [e.value for e in ests], "T", "moment")
    vals = [e.value for e in ests]
    mono = all(b >= a for a, b in zip(vals, vals[1:]))
    return [_row(1, "moment grows with T", "moment bound for the stochastic convolution",
                 " ".join(f"{v:.4g}" for v in vals), "non-decreasing", mono)]


def _picard(cfg: ExperimentConfig, sink: LedgerSink, workers: int) -> list[dict]:
    grid = cfg.grid_spec()
    S = HeatSemigroup(grid)
    ds, ss, ns = cfg.drift_spec(), cfg.sigma_spec(), cfg.noise_spec()
    u0 = cfg.u0["amplitude"] * np.cos(cfg.u0["frequency"] * grid.coords()[0])
    centers = cfg.center_list()
    msc = MSolverConfig(ds, mode=cfg.options.get("mode", "implicit"))
    dump = bool(cfg.options.get("dump_fields", False))

    def job(ids, rngs):
        noise = np.stack([sample_path(ns, grid, r) for r in rngs])
        res = picard_batch(u0, ds, ss, grid, noise, cfg.p, cfg.theta, cfg.tol, cfg.max_iter, centers, msc,
                           S=S, raise_on_divergence=False)
        out = []
        for j, (i, st) in enumerate(zip(ids, res.states)):
            r = mild_residual(res.u[j], u0, ds, ss, noise[j], S, cfg.theta, centers)
            if dump and i == 0:
                save_field(SpaceTimeField(grid, res.u[j], "u"), sink.root / "fields" / "u_0.shef")
            out.append({"path": i, "seed": cfg.seed, "T": grid.T, "p": cfg.p, "theta": cfg.theta,
                        "iterations": st.iterations, "converged": st.converged, "diffs": st.diffs,
                        "ratios": st.ratios, "residual": r})
        return out

    if dump:
        (sink.root / "fields").mkdir(parents=True, exist_ok=True)
    rows = map_replicas(job, cfg.replicas, cfg.seed, workers, chunk=25)
    sink.write("picard.csv", rows)
    n_max = max(len(r["ratios"]) for r in rows)
    mean_r = [float(np.mean([r["ratios"][k] for r in rows if len(r["ratios"]) > k])) for k in range(n_max)]
    sink.plot("contraction_ratio_vs_n", range(1, n_max + 1), mean_r, "n", "mean_ratio")
    conv = sum(r["converged"] for r in rows) / len(rows)
    worst = max((r["residual"] for r in rows if r["converged"]), default=float("nan"))
    return [
        _row(1, "converged paths", "Picard iteration for the mild solution", f"{conv:.3g}", "1", conv == 1),
        _row(2, "mild residual", "mild formulation", f"{worst:.4g}", "< 0.01", worst < 1e-2),
    ]


def _kolmogorov(cfg: ExperimentConfig, sink: LedgerSink, workers: int) -> list[dict]:
    o = cfg.options
    sampler = make_sampler(o.get("sampler", "brownian"), p=cfg.p, **o.get("sampler_params", {}))
    thr = sampler.spec.threshold(cfg.p) if sampler.spec is not None else 0.0
    thetas = o.get("thetas", [0.1 * thr, 2 * thr])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rows = threshold_scan(sampler, cfg.p, thetas, (0.0,), cfg.replicas, cfg.seed,
                              float(o.get("L", 32.0)), float(o.get("dx", 1 / 16)), workers)
    sink.write("threshold_scan.csv", rows)
    sink.plot("threshold_scan", [r["theta"] for r in rows], [r["rel_change"] for r in rows], "theta", "rel_change")
    out = []
    for i, r in enumerate(rows, 1):
        th = r["theta"]
        if th >= 2 * thr or th <= 0.1 * thr:
            expect = th > thr
            out.append(_row(i, f"theta={th:.4g}", "weighted Kolmogorov continuity",
                            f"stable {r['stable']}", f"stable {expect}", r["stable"] == expect))
        else:
            out.append(_row(i, f"theta={th:.4g}", "weighted Kolmogorov continuity",
                            f"stable {r['stable']}", "informational (near threshold)", True))
    return out


def compare_ledgers(a: Path, b: Path, exclude: tuple[str, ...] = ()) -> list[str]:
    """Relative paths of CSV files that differ (or exist on one side only)."""
    def files(root):
        return {str(p.relative_to(root)) for p in root.rglob("*.csv")
                if not any(str(p.relative_to(root)).startswith(e) for e in exclude)}
    fa, fb = files(a), files(b)
    diff = sorted(fa ^ fb)
    diff += sorted(f for f in fa & fb if not filecmp.cmp(a / f, b / f, shallow=False))
    return diff


def _full_acceptance(cfg: ExperimentConfig, sink: LedgerSink, workers: int) -> list[dict]:
    ids = cfg.options.get("criteria")
    results = run_criteria(Context(cfg.seed, workers, sink), ids,
                           lambda r: log.info("criterion %d %s: %s", r.id, "pass" if r.passed else "FAIL",
                                              r.measured))
    rows = [r.row() for r in results]
    rerun_workers = cfg.options.get("rerun_workers", 4 if workers == 1 else 1)
    if rerun_workers:
        rerun = LedgerSink(sink.root / "rerun")
        run_criteria(Context(cfg.seed, int(rerun_workers), rerun), ids)
        diff = compare_ledgers(sink.root, rerun.root, exclude=("rerun",))
        det = CriterionResult(12, "determinism", "seeded replica scheduling",
                              f"{len(diff)} differing ledgers (workers {workers} vs {rerun_workers})"
                              + (": " + " ".join(diff) if diff else ""), "0; bit-identical", not diff)
        rows.append(det.row())
    return rows


PIPELINES = {
    "deterministic-map": _deterministic_map,
    "yosida": _yosida,
    "noise-validate": _noise_validate,
    "stoch-conv": _stoch_conv,
    "picard": _picard,
    "kolmogorov": _kolmogorov,
    "full-acceptance": _full_acceptance,
}


def run_experiment(cfg: ExperimentConfig, workers: int | None = None, out: str | Path | None = None,
                   defaulted=()) -> RunResult:
    """Run one pipeline and write the manifest, ledgers and plot data.

    Module errors do not propagate: the run is marked failed in the manifest
    and whatever was written so far is kept.
    """
    workers = workers or default_workers()
    root = Path(out) if out is not None else resolve_out(cfg.out)
    sink = LedgerSink(root)
    manifest = {
        "package": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "config": cfg.to_dict(),
        "defaulted": list(defaulted),
        "seed": cfg.seed,
        "workers": workers,
        "status": "running",
    }
    if cfg.kind == "full-acceptance":
        manifest["acceptance_settings"] = SETTINGS
    t0 = time.perf_counter()
    summary: list[dict] = []
    error = None
    try:
        if cfg.kind != "full-acceptance":
            ds = cfg.drift_spec()
            manifest["derived"] = {"grid": {"dx": cfg.grid_spec().dx, "dt": cfg.grid_spec().dt},
                                   "drift": {"kappa": ds.kappa, "K": ds.K, "nu": ds.nu},
                                   "centers": cfg.center_list()}
        summary = PIPELINES[cfg.kind](cfg, sink, workers)
        status = "completed"
    except Exception as exc:  # recorded, not raised: partial outputs stay usable
        status = "failed"
        error = f"{type(exc).__name__}: {exc}"
        manifest["traceback"] = traceback.format_exc()
        log.error("run failed: %s", error)
    if summary:
        sink.write(SUMMARY, summary, SUMMARY_COLUMNS)
    manifest.update(status=status, error=error, wall_time=time.perf_counter() - t0, ledgers=list(sink.files))
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return RunResult(root, status, summary, error)


def emit_report(run_dir) -> tuple[str, list[dict], int]:
    """Summary text, machine-readable rows and the exit status of a finished run."""
    root = Path(run_dir)
    csvs = list(root.rglob("*.csv")) if root.is_dir() else []
    if not csvs:
        raise FileNotFoundError(f"no ledgers found in {root}")
    manifest_path = root / "manifest.json"
    manifest = json.loads(manifest_path.read_text()) if manifest_path.exists() else {}
    missing = [f for f in manifest.get("ledgers", []) if not (root / f).exists()]
    if missing:
        raise FileNotFoundError(f"missing ledger files: {', '.join(missing)}")
    if not (root / SUMMARY).exists():
        raise FileNotFoundError(f"missing ledger files: {SUMMARY}")
    rows = read_ledger(root / SUMMARY)
    for r in rows:
        r["passed"] = r["passed"] == "true"
    lines = []
    for r in rows:
        tag = "PASS" if r["passed"] else "FAIL"
        lines.append(f"[{tag}] {r['id']:>2} {r['name']} ({r['anchor']}): measured {r['measured']}; "
                     f"threshold {r['threshold']}")
    failed = [r["name"] for r in rows if not r["passed"]]
    status = manifest.get("status", "completed")
    if status != "completed":
        lines.append(f"run status: {status} ({manifest.get('error')})")
    lines.append(f"{len(rows) - len(failed)}/{len(rows)} passed" + (f"; failed: {', '.join(failed)}" if failed else ""))
    code = 0 if not failed and status == "completed" else 1
    return "\n".join(lines), rows, code
