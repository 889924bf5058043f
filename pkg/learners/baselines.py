"""
One-Step Density-Ratio Baselines

uLSIF and KLIEP in their parametric forms (linear and exponential links),
refit from scratch each round on (S₀, S_t) alone, and the OLRE configuration:
a single ONS run over the whole history.
"""

import logging
from typing import Optional

import numpy as np
import scipy.linalg

from bregman import DivergenceKind, DivergenceSpec, Link, RatioModel, empirical_grad, empirical_loss
from core import ConfigError, DomainError, Hyperparams
from learners.ensemble import OnlineRatioEstimator, SingleInterval
from tools.solvers import project_ball

logger = logging.getLogger(__name__)

ARMIJO_C = 1e-4
MAX_HALVINGS = 30
KL_SPEC = DivergenceSpec(kind=DivergenceKind.KL)


def _finite_matrix(data: np.ndarray, what: str) -> np.ndarray:
    xs = np.atleast_2d(np.asarray(data, dtype=float))
    if xs.shape[0] == 0:
        raise DomainError(f"{what} sample list is empty")
    if not np.all(np.isfinite(xs)):
        raise DomainError(f"{what} samples contain non-finite values")
    return xs


def ulsif_system(offline: np.ndarray, batch: np.ndarray, reg: float):
    """Return (Ĥ + λI, ĥ) for the regularized least-squares ratio fit."""
    x0 = _finite_matrix(offline, "offline")
    xt = _finite_matrix(batch, "online")
    H = x0.T @ x0 / x0.shape[0]
    h_vec = xt.mean(axis=0)
    return H + reg * np.eye(H.shape[0]), h_vec


def ulsif_fit(offline: np.ndarray, batch: np.ndarray, reg: float, radius: float) -> RatioModel:
    """
    Closed-form least-squares ratio fit with a linear link.

    θ = (Ĥ + λ_u I)⁻¹ĥ with Ĥ = mean_{S₀} xxᵀ and ĥ = mean_{S_t} x, then
    rescaled radially onto ‖θ‖₂ ≤ S when it falls outside.

    Args:
        offline: Offline features S₀
        batch: Online features S_t
        reg: Ridge parameter λ_u > 0
        radius: Parameter-norm bound S

    Returns:
        RatioModel: Linear-link model (ratios may be negative; floor downstream)

    Raises:
        ConfigError: If reg is not positive
        DomainError: On empty or non-finite data

    Example:
        >>> ulsif_fit(np.eye(2) * np.sqrt(2), np.array([[1.0, 0.0]]), 1.0, 10.0).theta
        array([0.5, 0. ])
    """
    if not reg > 0:
        raise ConfigError(f"uLSIF regularization must be positive, got {reg}")
    lhs, rhs = ulsif_system(offline, batch, reg)
    theta = scipy.linalg.solve(lhs, rhs, assume_a="pos")
    if not np.any(theta):
        logger.warning("uLSIF produced theta = 0; every ratio is 0 before flooring")
    return RatioModel(link=Link.LINEAR, theta=project_ball(theta, radius), radius=radius)


def kliep_fit(
    offline: np.ndarray,
    batch: np.ndarray,
    radius: float,
    steps: int = 100,
    step_size: float = 1.0,
) -> RatioModel:
    """
    KL ratio fit with an exponential link by projected gradient descent.

    Minimizes mean_{S₀} exp(xᵀθ) − mean_{S_t} xᵀθ over ‖θ‖₂ ≤ S from θ = 0.
    Each step starts from ``step_size`` and halves it (at most 30 times)
    until the Armijo condition with constant 1e−4 holds, so the loss never
    increases.

    Raises:
        ConfigError: If steps < 1 or step_size ≤ 0
        DomainError: On empty data or a non-finite loss
    """
    if steps < 1:
        raise ConfigError(f"KLIEP needs at least one step, got {steps}")
    if not step_size > 0:
        raise ConfigError(f"KLIEP step size must be positive, got {step_size}")
    x0 = _finite_matrix(offline, "offline")
    xt = _finite_matrix(batch, "online")

    model = RatioModel.zeros(Link.EXPONENTIAL, x0.shape[1], radius)
    loss = empirical_loss(KL_SPEC, model, x0, xt)
    for _ in range(steps):
        grad = empirical_grad(KL_SPEC, model, x0, xt)
        eta = step_size
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            candidate = RatioModel(
                Link.EXPONENTIAL, project_ball(model.theta - eta * grad, radius), radius
            )
            cand_loss = empirical_loss(KL_SPEC, candidate, x0, xt)
            decrease = float(grad @ (model.theta - candidate.theta))
            if np.isfinite(cand_loss) and cand_loss <= loss - ARMIJO_C * decrease:
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            break
        model, loss = candidate, cand_loss
    if not np.isfinite(loss):
        raise DomainError("KLIEP loss is not finite")
    return model


def olre_estimator(
    h: Hyperparams,
    T: Optional[int] = None,
    spec: Optional[DivergenceSpec] = None,
) -> OnlineRatioEstimator:
    """
    The OLRE baseline: one ONS over all rounds, wrapped in the ensemble.

    With a single interval [1, T], K = 1 and θ̂_t is exactly that learner's θ.
    """
    horizon = T or h.horizon
    return OnlineRatioEstimator(h, spec or DivergenceSpec(), schedule=SingleInterval(horizon))
