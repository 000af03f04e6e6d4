"""Experiment configuration: YAML loading, validation and the run manifest."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .drift import DriftSpec, make_drift
from .grid import GridSpec
from .noise import NoiseSpec, dalang_finite
from .stochastic import SigmaSpec, make_sigma

KINDS = ("deterministic-map", "yosida", "noise-validate", "stoch-conv", "picard", "kolmogorov",
         "full-acceptance")


class ConfigError(ValueError):
    """Malformed or inadmissible configuration."""


@dataclass
class ExperimentConfig:
    """Everything one run consumes; defaults are written to the manifest."""

    kind: str = "picard"
    grid: dict = field(default_factory=lambda: {"d": 1, "L": 32.0, "N": 1024, "T": 0.1, "M": 100})
    drift: dict = field(default_factory=lambda: {"name": "allen-cahn"})
    sigma: dict = field(default_factory=lambda: {"name": "sin"})
    noise: dict = field(default_factory=lambda: {"kind": "white", "eta": 0.25})
    u0: dict = field(default_factory=lambda: {"amplitude": 0.5, "frequency": 1.0})
    p: float = 40.0
    theta: float = 0.5
    centers: Any = 3
    replicas: int = 50
    seed: int = 0
    tol: float = 1e-6
    max_iter: int = 50
    out: str = "runs/latest"
    options: dict = field(default_factory=dict)

    # -- derived objects ----------------------------------------------------------

    def grid_spec(self) -> GridSpec:
        return GridSpec(**self.grid)

    def drift_spec(self) -> DriftSpec:
        params = {k: v for k, v in self.drift.items() if k != "name"}
        return make_drift(self.drift["name"], **params)

    def sigma_spec(self) -> SigmaSpec:
        params = {k: v for k, v in self.sigma.items() if k != "name"}
        return make_sigma(self.sigma["name"], **params)

    def noise_spec(self) -> NoiseSpec:
        params = dict(self.noise)
        params.setdefault("d", self.grid.get("d", 1))
        return NoiseSpec(**params)

    def center_list(self) -> list[tuple[float, ...]]:
        if isinstance(self.centers, int):
            return self.grid_spec().default_centers(self.centers)
        return [tuple(float(v) for v in (c if isinstance(c, (list, tuple)) else [c])) for c in self.centers]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _line_of(data_text: str, key: str) -> int | None:
    for i, line in enumerate(data_text.splitlines(), 1):
        if line.lstrip().startswith(f"{key}:"):
            return i
    return None


def parse_config(text: str, source: str = "<string>") -> tuple[ExperimentConfig, list[str]]:
    """Parse YAML text; returns the config and the names of defaulted fields."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"{source}: parse error at {where}: {problem}") from None
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        line = _line_of(text, unknown[0])
        at = f" (line {line})" if line else ""
        raise ConfigError(f"{source}: unknown key {unknown[0]!r}{at}")
    base = ExperimentConfig()
    merged = {}
    for name in known:
        default = getattr(base, name)
        if name in raw and isinstance(default, dict) and name not in ("options",):
            if not isinstance(raw[name], dict):
                raise ConfigError(f"{source}: {name!r} must be a mapping")
            # a new drift/sigma/noise selection replaces the default parameters
            replace = name in ("drift", "sigma") and "name" in raw[name] \
                or name == "noise" and "kind" in raw[name]
            merged[name] = dict(raw[name]) if replace else {**default, **raw[name]}
        elif name in raw:
            merged[name] = raw[name]
    cfg = ExperimentConfig(**merged)
    defaulted = sorted(known - set(raw))
    for name in ("grid", "drift", "sigma", "noise", "u0"):
        if name in raw:
            defaulted += [f"{name}.{k}" for k in getattr(base, name) if k not in raw[name]]
    return cfg, defaulted


def validate(cfg: ExperimentConfig) -> None:
    """Structural checks plus the parameter conditions of the existence theory.

    Violations raise :class:`ConfigError` naming the failed inequality.
    """
    if cfg.kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {cfg.kind!r}; expected one of {', '.join(KINDS)}")
    try:
        grid = cfg.grid_spec()
        ds = cfg.drift_spec()
        cfg.sigma_spec()
        ns = cfg.noise_spec()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if ns.d != grid.d:
        raise ConfigError("noise and grid dimensions differ")
    if cfg.replicas < 1 or cfg.tol <= 0 or cfg.max_iter < 1:
        raise ConfigError("replicas and max_iter must be positive and tol > 0")
    if cfg.kind in ("picard", "stoch-conv"):
        if not dalang_finite(ns, ns.eta):
            raise ConfigError(
                f"strong Dalang integral diverges for {ns.kind} noise in d = {ns.d} with eta = {ns.eta:g}")
    if cfg.kind in ("picard", "deterministic-map"):
        if not cfg.theta > 0:
            raise ConfigError(f"theta = {cfg.theta:g} must be positive")
        if ds.nu * cfg.theta >= 2:
            raise ConfigError(
                f"theta * nu = {cfg.theta * ds.nu:g} >= 2: exponential moments of the data "
                "may not be integrable")
    if cfg.kind == "picard":
        d = grid.d
        a = (1 + cfg.theta) * (d + 1) / cfg.theta
        b = 2 * (d + 1) / ns.eta
        if not cfg.p > a:
            raise ConfigError(f"p = {cfg.p:g} <= (1+theta)(d+1)/theta = {a:g} violates the moment condition on p")
        if not cfg.p > b:
            raise ConfigError(f"p = {cfg.p:g} <= 2(d+1)/eta = {b:g} violates the moment condition on p")


def load_config(path) -> tuple[ExperimentConfig, list[str]]:
    """Read, parse and validate a YAML experiment file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    cfg, defaulted = parse_config(text, str(path))
    validate(cfg)
    return cfg, defaulted


def acceptance_config(seed: int = 0, out: str = "runs/acceptance") -> ExperimentConfig:
    """Built-in configuration for the full acceptance suite."""
    return ExperimentConfig(kind="full-acceptance", grid={"d": 1, "L": 32.0, "N": 1024, "T": 1.0, "M": 1000},
                            p=8.0, theta=1.0, seed=seed, out=out)
