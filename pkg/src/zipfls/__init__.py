"""Rank-based Zipf soft labels, dense-vote ranking, losses, and power-law stats."""

from .dataset import SyntheticDataset, generate_dataset
from .dense_ranking import (
    FeatureMap,
    SharedClassifier,
    VoteHistogram,
    local_predictions,
    logit_ranking,
    rank_from_votes,
    stack_feature_maps,
    vote_histogram,
)
from .losses import (
    LossValue,
    SmoothingConfig,
    combined_loss,
    cross_entropy,
    label_smoothing_loss,
    normalized_nontarget_probs,
    zipf_loss,
)
from .network import TinyNet
from .numerics import (
    InvalidInputError,
    SeededRng,
    SupportViolationError,
    js_divergence,
    kl_divergence,
    log_softmax,
    softmax,
    sort_desc_with_indices,
)
from .rankstats import (
    FAMILIES,
    ConvergenceError,
    EmpiricalRankDistribution,
    FitReport,
    SnrCurve,
    collect_model_rank_distribution,
    fit_exponential_mle,
    fit_lognormal_mle,
    fit_params,
    fit_report,
    fit_zipf_mle,
    goodness_battery,
    simulate_gaussian_softmax,
    snr_curve,
)
from .training import (
    METHODS,
    MetricsHistory,
    TrainConfig,
    TrainingDivergedError,
    mean_nontarget_entropy,
    run_experiment,
    train_model,
)
from .zipf_label import RankAssignment, ZipfParams, ZipfSoftLabel, make_zipf_soft_label, zipf_pmf

__all__ = [
    "FAMILIES",
    "METHODS",
    "ConvergenceError",
    "EmpiricalRankDistribution",
    "FeatureMap",
    "FitReport",
    "InvalidInputError",
    "LossValue",
    "MetricsHistory",
    "RankAssignment",
    "SeededRng",
    "SharedClassifier",
    "SmoothingConfig",
    "SnrCurve",
    "SupportViolationError",
    "SyntheticDataset",
    "TinyNet",
    "TrainConfig",
    "TrainingDivergedError",
    "VoteHistogram",
    "ZipfParams",
    "ZipfSoftLabel",
    "collect_model_rank_distribution",
    "combined_loss",
    "cross_entropy",
    "fit_exponential_mle",
    "fit_lognormal_mle",
    "fit_params",
    "fit_report",
    "fit_zipf_mle",
    "generate_dataset",
    "goodness_battery",
    "js_divergence",
    "kl_divergence",
    "label_smoothing_loss",
    "local_predictions",
    "log_softmax",
    "logit_ranking",
    "make_zipf_soft_label",
    "mean_nontarget_entropy",
    "normalized_nontarget_probs",
    "rank_from_votes",
    "run_experiment",
    "simulate_gaussian_softmax",
    "snr_curve",
    "softmax",
    "sort_desc_with_indices",
    "stack_feature_maps",
    "train_model",
    "vote_histogram",
    "zipf_loss",
    "zipf_pmf",
]
