from .lof import lof_scores, pairwise_distances
from .mcd import RobustEstimate, fast_mcd, robust_distance_sq
from .ocsvm import OcsvmModel, median_gamma, ocsvm_decision, rbf_kernel, train_ocsvm

__all__ = [
    "RobustEstimate",
    "fast_mcd",
    "robust_distance_sq",
    "lof_scores",
    "pairwise_distances",
    "OcsvmModel",
    "train_ocsvm",
    "ocsvm_decision",
    "median_gamma",
    "rbf_kernel",
]
