"""
Data Sources Package

This package contains the sources of offline sets and online streams: the
synthetic drifting Gaussian mixture with its exact density ratios, and the
CSV reader for streams of precomputed features.
"""

from .csv_stream import CsvStream, load_csv_stream
from .synthetic import (
    GaussianMixtureSpec,
    ShiftSchedule,
    alpha_at,
    alpha_path,
    sample_batch,
    true_ratio,
    variation_V,
)

__all__ = [
    "CsvStream",
    "GaussianMixtureSpec",
    "ShiftSchedule",
    "alpha_at",
    "alpha_path",
    "load_csv_stream",
    "sample_batch",
    "true_ratio",
    "variation_V",
]
