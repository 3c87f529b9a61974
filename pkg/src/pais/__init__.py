"""Parallel adaptive importance sampling for Bayesian inverse problems.

An ensemble of M chains proposes jointly, weights every proposal against
the ensemble mixture, and returns to uniform weights through optimal
transport (or cheaper surrogate) resampling. The package bundles the
benchmark posteriors, proposal kernels, resamplers, the sampling engine
with golden-section step-size adaptation, weighted-sample diagnostics and
a deterministic experiment CLI.
"""

from .diagnostics import (
    DiagnosticsRecord,
    HistogramGrid,
    build_histogram,
    ess,
    ess_from_log,
    kl_divergence,
    relative_l2_error,
    relative_moment_error,
    weight_variance,
    weight_variance_from_log,
)
from .engine import (
    AdaptationConfig,
    GoldenSectionAdapter,
    RunConfig,
    SamplerOutput,
    ScoutConfig,
    adapt_beta,
    detect_burn_in,
    epoch_schedule,
    pais_step,
    pooled_stream,
    pooled_weights,
    run_mh,
    run_pais,
)
from .errors import (
    ConfigError,
    DiagnosticError,
    IntegrationError,
    IterationError,
    PaisError,
    ParameterError,
)
from .kernels import (
    ProposalKernel,
    compute_weights,
    log_kernel_density,
    make_kernel,
    mixture_log_density,
    normalize_log_weights,
    sample_kernel,
)
from .resamplers import (
    CouplingPlan,
    SubMultinomials,
    amr_resample,
    amr_split,
    bootstrap_resample,
    etpf_resample,
    solve_transport,
)
from .targets import (
    AnalyticReference,
    ChemicalModel,
    TargetPosterior,
    default_chemical_model,
    full_system_trajectory,
    generate_data,
    make_bimodal_target,
    make_chemical_target,
    make_gaussian_target,
    qssa_trajectory,
)
from .config import (
    CONFIG_SCHEMA,
    SCHEMA_VERSION,
    ExperimentSpec,
    build_spec,
    parse_config,
    serialize_config,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptationConfig",
    "AnalyticReference",
    "CONFIG_SCHEMA",
    "ChemicalModel",
    "ConfigError",
    "CouplingPlan",
    "DiagnosticError",
    "DiagnosticsRecord",
    "ExperimentSpec",
    "GoldenSectionAdapter",
    "HistogramGrid",
    "IntegrationError",
    "IterationError",
    "PaisError",
    "ParameterError",
    "ProposalKernel",
    "RunConfig",
    "SCHEMA_VERSION",
    "SamplerOutput",
    "ScoutConfig",
    "SubMultinomials",
    "TargetPosterior",
    "adapt_beta",
    "amr_resample",
    "amr_split",
    "bootstrap_resample",
    "build_histogram",
    "build_spec",
    "compute_weights",
    "default_chemical_model",
    "detect_burn_in",
    "epoch_schedule",
    "ess",
    "ess_from_log",
    "etpf_resample",
    "full_system_trajectory",
    "generate_data",
    "kl_divergence",
    "log_kernel_density",
    "make_bimodal_target",
    "make_chemical_target",
    "make_gaussian_target",
    "make_kernel",
    "mixture_log_density",
    "normalize_log_weights",
    "pais_step",
    "parse_config",
    "pooled_stream",
    "pooled_weights",
    "qssa_trajectory",
    "relative_l2_error",
    "relative_moment_error",
    "run_mh",
    "run_pais",
    "sample_kernel",
    "serialize_config",
    "solve_transport",
    "weight_variance",
    "weight_variance_from_log",
]
