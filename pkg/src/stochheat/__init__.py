"""Simulation and verification tools for the stochastic heat equation with
one-sided Lipschitz drift and spatially homogeneous Gaussian noise."""

__version__ = "0.1.0"

from .drift import DriftSpec, YosidaApprox, make_drift
from .grid import GridSpec, SpaceTimeField, WeightParams, weighted_sup_norm
from .kernel import HeatSemigroup
from .noise import NoiseSpec
from .stochastic import SigmaSpec, make_sigma, picard_solve

__all__ = [
    "DriftSpec", "GridSpec", "HeatSemigroup", "NoiseSpec", "SigmaSpec", "SpaceTimeField",
    "WeightParams", "YosidaApprox", "make_drift", "make_sigma", "picard_solve", "weighted_sup_norm",
]
