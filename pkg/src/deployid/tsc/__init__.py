"""Time-series clustering of angular-rate trajectories."""

from .clustering import (
    ClusterModel,
    apply_label_mapping,
    barycenter_objective,
    classify,
    f1_permutation_map,
    kmeans_fit,
    load_model,
    macro_f1,
    pad_series,
    save_model,
    soft_dtw_barycenter,
)
from .metrics import (
    dtw_distance,
    soft_dtw,
    soft_dtw_gradient,
    soft_dtw_value_and_gradient,
)

__all__ = [
    "ClusterModel",
    "apply_label_mapping",
    "barycenter_objective",
    "classify",
    "dtw_distance",
    "f1_permutation_map",
    "kmeans_fit",
    "load_model",
    "macro_f1",
    "pad_series",
    "save_model",
    "soft_dtw",
    "soft_dtw_barycenter",
    "soft_dtw_gradient",
    "soft_dtw_value_and_gradient",
]
