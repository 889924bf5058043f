"""
Learners Package

This package contains the online density-ratio estimators: the ONS base
learner, the ensemble that combines ONS learners over a geometric covering,
and the one-step baselines refit at every round.
"""

from .baselines import kliep_fit, olre_estimator, ulsif_fit
from .ensemble import GeometricCovering, OnlineRatioEstimator, SingleInterval
from .ons import ons_init, ons_step, proj_weighted_ball

__all__ = [
    "GeometricCovering",
    "OnlineRatioEstimator",
    "SingleInterval",
    "kliep_fit",
    "olre_estimator",
    "ons_init",
    "ons_step",
    "proj_weighted_ball",
    "ulsif_fit",
]
