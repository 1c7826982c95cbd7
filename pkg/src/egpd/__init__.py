"""Threshold-excess modelling with the generalised Pareto distribution and
its extended (shape-augmented) families: distribution kernels, maximum
likelihood fitting, return-level inference, threshold diagnostics,
penultimate tail analysis and a seeded Monte Carlo study harness.
"""

from .models import (
    ModelFamily,
    ModelParams,
    XI_ZERO_TOL,
    cdf,
    density,
    fv_cdf,
    log_density,
    quantile,
    sample,
    survival,
)
from .fitting import (
    ExcessSample,
    FitError,
    FitOptions,
    FitResult,
    PooledFitResult,
    PoolingScheme,
    fit_mle,
    fit_pooled,
    log_likelihood,
    profile_ci,
    standard_errors,
)
from .tail import (
    LrtResult,
    ReturnLevelEstimate,
    ThresholdProfile,
    lrt_kappa,
    lrt_nested,
    qq_data,
    return_level,
    return_level_se,
    select_threshold,
    threshold_profile,
)
from .penultimate import (
    SFunctionSpec,
    convergence_rate_check,
    fv_from_s,
    hazard_derivative,
    penultimate_table,
    power_law_s_function,
    verify_tail_index,
)
from .simulation import (
    RmseCell,
    StudyConfig,
    StudyResult,
    build_threshold_grid,
    optimal_threshold,
    run_study,
    true_return_level,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
