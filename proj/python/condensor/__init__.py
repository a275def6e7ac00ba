"""Dataset distillation engine: DC / MTT distillation, random baselines, share-or-distill indicator."""

from ._core import (
    ConfigError,
    DataError,
    Dataset,
    Error,
    FormatError,
    __version__,
    git_blob_sha1,
    indicator_report,
    load_dataset,
    load_synthetic,
    make_texture_dataset,
    pearson_r,
    save_dataset,
    selftest,
    sharing_decision,
    trajectory_loss,
)

__all__ = [
    "ConfigError",
    "DataError",
    "Dataset",
    "Error",
    "FormatError",
    "git_blob_sha1",
    "indicator_report",
    "load_dataset",
    "load_synthetic",
    "make_texture_dataset",
    "pearson_r",
    "save_dataset",
    "selftest",
    "sharing_decision",
    "trajectory_loss",
]
