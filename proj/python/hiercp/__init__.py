"""Hierarchical conformal prediction over ragged label taxonomies."""

from ._hiercp import (
    IoError,
    SoftmaxModel,
    Taxonomy,
    ValidationError,
    calibrate_threshold,
    default_alpha_grid,
    generate_synthetic,
    lcp_predict,
    nonconformity,
    pcp_predict,
    run_sweep,
    stratified_split,
    train_softmax,
)

__all__ = [
    "IoError",
    "SoftmaxModel",
    "Taxonomy",
    "ValidationError",
    "calibrate_threshold",
    "default_alpha_grid",
    "generate_synthetic",
    "lcp_predict",
    "nonconformity",
    "pcp_predict",
    "run_sweep",
    "stratified_split",
    "train_softmax",
]

__version__ = "0.1.0"
