"""Simulation and verification toolkit for SPDEs driven by cylindrical Lévy noise."""

from .hilbert import ContractionSemigroup, DomainError
from .metrics import MetricEstimate, estimate_dem, estimate_ducp, estimate_rho_em
from .noise import (NoiseModel, NoisePathBundle, alpha_stable, brownian, compound_poisson,
                    sample_bundle, uniform_grid)
from .paths import GridPath, SimpleHsProcess, SimpleOperatorProcess, stochastic_integral
from .solver import SdeProblem, euler_peano_solve, lambda_operator, picard_solve

__version__ = "0.1.0"
