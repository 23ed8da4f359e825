"""Oversampled adaptive sensing with Bayesian posterior tracking."""
from .baselines import OrthogonalConfig, orthogonal_mse_quadrature, orthogonal_trial
from .errors import CalibrationError, ConfigurationError, DomainError, NumericalError, StructuralError
from .harness import ExperimentConfig, run_sweep
from .oracle import posterior_oracle
from .posterior import ObservationSummary, PosteriorEstimate, estimate, posterior_mse, reconstruct
from .priors import SourceKind, SourceModel, sample_source
from .scheduler import (BudgetModel, ScheduleTrace, asymptotic_run, asymptotic_runs, calibrate_target_mse,
                        parallel_asymptotic_run, worst_component_run)
from .thresholds import StoppingThresholds, compute_thresholds

__all__ = [
    "BudgetModel", "CalibrationError", "ConfigurationError", "DomainError", "ExperimentConfig",
    "NumericalError", "ObservationSummary", "OrthogonalConfig", "PosteriorEstimate", "ScheduleTrace",
    "SourceKind", "SourceModel", "StoppingThresholds", "StructuralError", "asymptotic_run",
    "asymptotic_runs", "calibrate_target_mse", "compute_thresholds", "estimate", "orthogonal_mse_quadrature",
    "orthogonal_trial", "parallel_asymptotic_run", "posterior_mse", "posterior_oracle", "reconstruct",
    "run_sweep", "sample_source", "worst_component_run",
]
