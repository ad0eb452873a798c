"""Ensemble estimation of drift and diffusion coefficients of coarse-grained SDEs."""

from .core import (DegeneratePathError, EnsembleConfig, EstimateSeries, IntegrationDivergedError,
                   InvalidInputError, LinearSystem, ModelKind, ModelSpec, MomentTable,
                   MonomialParam, MsestError, NotAvailableError, eval_monomial)
from .estimator import (EstimationRequest, assemble_diffusion_system, assemble_drift_system,
                        estimate_diffusion, estimate_diffusion_matrix, estimate_drift,
                        estimate_drift_matrix, estimate_series, series_from_table)
from .models import effective_truth, get_model, list_models
from .numerics import bessel_i0, solve_min_norm_ls, trapezoid
from .simulate import em_step, generate_moment_table, rk4_substep_integrate, simulate_path

__version__ = "0.1.0"
