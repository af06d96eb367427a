"""Matrix completion for sparse binary-mixture property data.

The pipeline ingests observation records into a sparse solute-by-solvent
matrix, fits a flat bilinear latent-factor model by mean-field variational
inference, completes the matrix, groups similar components by
complete-linkage clustering of the completed rows and columns, and refits
a hierarchical model whose class-level priors pool information across
similar components.
"""

from ._core import BACKEND, available_backends, backend_name
from .clustering import (
    ClassAssignment,
    LinkageTree,
    Merge,
    col_profiles,
    cut_tree,
    hac_complete,
    row_profiles,
    sorted_order,
)
from .config import PipelineConfig, default_config, parse_config, validate_config
from .errors import (
    ConfigError,
    ContractError,
    CsvParseError,
    DomainError,
    GenerationError,
    MixcompError,
    NumericalError,
)
from .evaluate import (
    EvalReport,
    FoldRecord,
    Histogram,
    LooReport,
    Residual,
    SyntheticSpec,
    generate_synthetic,
    histogram,
    loo_run,
    metrics,
    thin_component,
)
from .hmcm import (
    HierarchicalParams,
    HmcmConfig,
    fit_hmcm,
    log_joint_hmcm,
    predict_cold,
    predict_hmcm,
)
from .ingest import (
    ObservationRecord,
    PropertyMatrix,
    build_matrix,
    deduplicate,
    filter_min_systems,
    filter_quality,
    parse_observations,
    preprocess,
)
from .kernels import Cauchy, Exponential, Normal, constrain, log_pdf, log_pdf_grad, unconstrain
from .smcm import LatentFactorSet, SmcmConfig, complete_matrix, fit_smcm, log_joint_smcm, predict
from .vi import Block, FitConfig, FitResult, ParameterSpace, VariationalPosterior, elbo, fit, grad_estimate

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Block",
    "Cauchy",
    "ClassAssignment",
    "ConfigError",
    "ContractError",
    "CsvParseError",
    "DomainError",
    "EvalReport",
    "Exponential",
    "FitConfig",
    "FitResult",
    "FoldRecord",
    "GenerationError",
    "HierarchicalParams",
    "Histogram",
    "HmcmConfig",
    "LatentFactorSet",
    "LinkageTree",
    "LooReport",
    "Merge",
    "MixcompError",
    "Normal",
    "NumericalError",
    "ObservationRecord",
    "ParameterSpace",
    "PipelineConfig",
    "PropertyMatrix",
    "Residual",
    "SmcmConfig",
    "SyntheticSpec",
    "VariationalPosterior",
    "available_backends",
    "backend_name",
    "build_matrix",
    "col_profiles",
    "complete_matrix",
    "constrain",
    "cut_tree",
    "deduplicate",
    "default_config",
    "elbo",
    "filter_min_systems",
    "filter_quality",
    "fit",
    "fit_hmcm",
    "fit_smcm",
    "generate_synthetic",
    "grad_estimate",
    "hac_complete",
    "histogram",
    "log_joint_hmcm",
    "log_joint_smcm",
    "log_pdf",
    "log_pdf_grad",
    "loo_run",
    "metrics",
    "parse_config",
    "parse_observations",
    "predict",
    "predict_cold",
    "predict_hmcm",
    "preprocess",
    "row_profiles",
    "sorted_order",
    "thin_component",
    "unconstrain",
    "validate_config",
]
