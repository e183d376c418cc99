"""Simulation and verification tools for semilinear SPDEs driven by
cylindrical symmetric stable noise with Holder drift.

Modules: stable (laws, densities, jump decompositions), spectral (diagonal
operator/noise data and admissibility checks), mehler (semigroup Monte
Carlo with score-weighted derivatives), kolmogorov (nonlocal elliptic
solver), simulator (path integration, shared-noise refinement, identity
residuals), registry (named drifts/test functions/presets), cli.
"""

__version__ = "1.0.0"

from . import cli, kolmogorov, mehler, registry, rng, simulator, spectral, stable

__all__ = [
    "cli",
    "kolmogorov",
    "mehler",
    "registry",
    "rng",
    "simulator",
    "spectral",
    "stable",
    "__version__",
]
