"""Pooled versus average quantile estimation for parallel steady-state simulation."""

from .errors import ConfigError, DomainError, ReplicationError
from .processes import (
    Ar1Params,
    Mm1Params,
    ProcessModel,
    SamplePath,
    generate,
    generate_ar1,
    generate_mm1,
    true_density_at_quantile,
    true_quantile,
)
from .estimators import (
    Method,
    QuantileEstimate,
    ReplicationSet,
    average_quantile,
    empirical_cdf,
    pooled_quantile,
    single_path_quantile,
)
from .asymptotics import (
    AsymptoticProfile,
    BahadurDiagnostic,
    NormalityReport,
    Source,
    analytic_v2,
    asymptotic_profile,
    bahadur_residual,
    estimate_v2_batch_means,
    estimate_v2_truncated,
    normality_check,
    standardized_errors,
)
from .engine import MicroPlan, MicroTable, RunPlan, derive, run_micro_experiment, run_replications

__version__ = "0.1.0"
