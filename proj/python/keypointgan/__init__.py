"""Python bindings for the keypointgan library."""

import torch  # noqa: F401  loads libtorch before the extension

from ._core import (
    ConfigError,
    TrainConfig,
    TrainingAborted,
    Model,
    keypoints_from_heatmaps,
    normalized_error_pct,
    render_skeleton,
    render_skeleton_gradient,
    stick_figure_edges,
    train,
)

__all__ = [
    "ConfigError",
    "TrainConfig",
    "TrainingAborted",
    "Model",
    "keypoints_from_heatmaps",
    "normalized_error_pct",
    "render_skeleton",
    "render_skeleton_gradient",
    "stick_figure_edges",
    "train",
]
