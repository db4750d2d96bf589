"""Spectral Galerkin + tamed exponential Euler solver for the stochastic
Cahn-Hilliard equation with additive Q-Wiener noise."""

__version__ = "0.1.0"

from .spectral import (
    BasisSpec,
    SpectralField,
    GridBuffer,
    CollocationTransform,
    eigenvalue,
    eigenfunction_eval,
    apply_semigroup,
    apply_phi,
    project,
    to_grid,
    to_spectral,
    save_field,
    load_field,
)
from .noise import (
    NoiseKind,
    NoiseSpec,
    NoisePath,
    sample_path,
    increments_on_grid,
    regularity_exponent,
)
from .dynamics import (
    Scheme,
    SchemeConfig,
    StepState,
    SolverError,
    nemytskii_F,
    taming_factor,
    step_tamed,
    step_plain,
    step_backward_euler,
    evolve,
)
from .experiments import (
    ExperimentPlan,
    ErrorReport,
    CompareReport,
    BlowupTable,
    initial_field,
    fit_rate,
    strong_temporal_error,
    strong_spatial_error,
    compare_schemes,
    blowup_table,
)

__all__ = [
    "BasisSpec",
    "SpectralField",
    "GridBuffer",
    "CollocationTransform",
    "eigenvalue",
    "eigenfunction_eval",
    "apply_semigroup",
    "apply_phi",
    "project",
    "to_grid",
    "to_spectral",
    "save_field",
    "load_field",
    "NoiseKind",
    "NoiseSpec",
    "NoisePath",
    "sample_path",
    "increments_on_grid",
    "regularity_exponent",
    "Scheme",
    "SchemeConfig",
    "StepState",
    "SolverError",
    "nemytskii_F",
    "taming_factor",
    "step_tamed",
    "step_plain",
    "step_backward_euler",
    "evolve",
    "ExperimentPlan",
    "ErrorReport",
    "CompareReport",
    "BlowupTable",
    "initial_field",
    "fit_rate",
    "strong_temporal_error",
    "strong_spatial_error",
    "compare_schemes",
    "blowup_table",
]
