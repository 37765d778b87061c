"""Numerics for Ornstein-Uhlenbeck semigroups, Kolmogorov resolvents with gradient drifts,
Galerkin SPDE simulation and weak-uniqueness diagnostics."""

from .spectral import SpectralModel, derive_c1, derive_constants, model_from_config
from .semigroup import dpt_apply, dpt_gradient, pt_apply
from .kolmogorov import fixed_point_solve, resolvent
from .simulator import simulate
from .harness import compare_marginals, laplace_crosscheck

__version__ = "0.1.0"

__all__ = [
    "SpectralModel", "derive_c1", "derive_constants", "model_from_config", "pt_apply", "dpt_apply", "dpt_gradient",
    "resolvent", "fixed_point_solve", "simulate", "compare_marginals", "laplace_crosscheck",
]
