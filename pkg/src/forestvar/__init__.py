"""forestvar: variance estimation for subbagged ensemble predictions.

The ensemble is fit on matched groups of mutually exclusive subsamples;
within-group spread estimates the single-tree variance, the overall spread
estimates the subset-average variance, and their combination is an unbiased
estimate of the variance of the ensemble prediction, from which normal
confidence intervals follow.  Includes a bootstrap-assisted variant for
subsample sizes above n/2, a locally smoothed variant, exact combinatorial
oracles, and a simulation harness.
"""

from ._backend import BACKEND
from .config import ConfigViolation, ForestConfig, require_valid, validate_config
from .data import Dataset, TargetPoint
from .errors import (
    CombinatorialBlowup,
    DegenerateEnsemble,
    DimensionMismatch,
    EmptySubsample,
    ForestVarError,
    GroupTooSmall,
    IndexOutOfRange,
    InvalidConfig,
    KOutOfRange,
    KTooLarge,
    KTooLargeForVh,
    MalformedCsv,
    MTooLarge,
    NegativeVariance,
    NonFiniteValue,
    UnknownColumn,
)
from .forest import (
    Forest,
    PredictionMatrix,
    fit_forest,
    load_forest,
    point_estimate,
    predict_all,
    predict_matrix,
    save_forest,
)
from .harness import (
    EvalRow,
    ExperimentConfig,
    SimModel,
    aggregate_rows,
    generate,
    get_model,
    ground_truth,
    read_results_csv,
    resolve_targets,
    run_experiment,
    run_replication,
)
from .kernels import Kernel, MeanKernel, OneNearestNeighborKernel, TreeKernel
from .rng import RandomStream, split_stream
from .sampling import (
    SamplingPlan,
    sample_bootstrap_plan,
    sample_matched_groups,
    sample_subset_plan,
)
from .tree import Tree, active_backend, fit_tree, format_tree, predict_tree
from .variance import (
    VarianceReport,
    bootstrap_variance_estimate,
    confidence_interval,
    estimate_vh_matched,
    estimate_vs,
    generate_neighbors,
    matched_variance_estimate,
    normal_quantile,
    smoothed_variance_estimate,
)

__version__ = "0.1.0"
