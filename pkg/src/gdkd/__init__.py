"""Generalized decoupled knowledge distillation.

Partitioned KL-divergence losses over classifier logits, their exact
gradients, teacher-distribution diagnostics, and a small deterministic
distillation trainer.
"""

__version__ = "0.1.0"

from .numeric import kl_divergence, log_softmax, softmax, subset_softmax
from .partition import (
    DecomposedDistribution,
    Partition,
    decompose,
    make_partition,
    partition_gdkd3,
    partition_target,
    partition_topk,
)
from .losses import (
    LossBreakdown,
    LossConfig,
    cross_entropy,
    distillation_loss,
    distill_term,
    dkd_loss,
    gdkd2_loss,
    gdkd_dynamic_loss,
    gdkd_loss,
    gdkd_n_loss,
    kd_loss,
    kd_loss_decomposed,
    logit_standardize,
    total_objective,
    warmup_factor,
)
from .presets import pair_weights, preset
from .gradients import (
    GradMagnitudeReport,
    finite_diff,
    grad_distill_term,
    grad_kd,
    grad_loss,
    grad_magnitude_report,
    grad_otherkd,
    grad_topkd,
    grad_total_objective,
)
from .analysis import (
    ClassPredictionProfile,
    DiscrepancyMatrix,
    class_profiles,
    discrepancy_matrix,
    enhancement_check,
    knee_point_k,
    multimodality_ratio,
)
from .training import (
    DistillationClassifier,
    MlpClassifier,
    MlpSpec,
    SyntheticTaskSpec,
    TrainRecord,
    distill,
    gen_synthetic,
    train_teacher,
)

__all__ = [
    "__version__",
    "softmax",
    "log_softmax",
    "subset_softmax",
    "kl_divergence",
    "Partition",
    "DecomposedDistribution",
    "make_partition",
    "partition_topk",
    "partition_target",
    "partition_gdkd3",
    "decompose",
    "LossConfig",
    "LossBreakdown",
    "kd_loss",
    "kd_loss_decomposed",
    "dkd_loss",
    "gdkd_loss",
    "gdkd_n_loss",
    "gdkd2_loss",
    "gdkd_dynamic_loss",
    "logit_standardize",
    "cross_entropy",
    "warmup_factor",
    "distillation_loss",
    "distill_term",
    "total_objective",
    "preset",
    "pair_weights",
    "finite_diff",
    "grad_kd",
    "grad_topkd",
    "grad_otherkd",
    "grad_loss",
    "grad_distill_term",
    "grad_total_objective",
    "GradMagnitudeReport",
    "grad_magnitude_report",
    "ClassPredictionProfile",
    "DiscrepancyMatrix",
    "class_profiles",
    "enhancement_check",
    "knee_point_k",
    "multimodality_ratio",
    "discrepancy_matrix",
    "SyntheticTaskSpec",
    "MlpSpec",
    "TrainRecord",
    "gen_synthetic",
    "MlpClassifier",
    "DistillationClassifier",
    "train_teacher",
    "distill",
]
