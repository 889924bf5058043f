"""
Online Newton Step Base Learner

One ONS learner runs on a single round interval [s, e]. Each step adds the
observed gradient to the curvature matrix A, keeps A⁻¹ current with a
rank-one (Sherman-Morrison) update, takes the Newton-like step
θ − γA⁻¹g and maps the result back onto the parameter ball with the
A-weighted projection.
"""

import logging
from dataclasses import dataclass, field
from typing import Protocol, Tuple, Union

import numpy as np
import scipy.linalg
from scipy.optimize import brentq

from core import DomainError, Hyperparams, ProjectionError

logger = logging.getLogger(__name__)

# Full re-factorization cadence for the maintained inverse.
REFACTOR_EVERY = 512
PROJECTION_TOL = 1e-10
PROJECTION_MAX_ITER = 200


@dataclass
class OnsState:
    """
    State of one ONS base learner.

    Attributes:
        theta (np.ndarray): Current prediction θ̂_{t,i}
        A (np.ndarray): Curvature matrix λI + Σ g gᵀ
        A_inv (np.ndarray): Maintained inverse of ``A``
        start (int): First round of the learner's interval
        end (int): Last round of the learner's interval
        gamma (float): Step parameter γ
        lam (float): Regularizer λ
        radius (float): Parameter-norm bound S
        steps (int): Number of steps taken
        projections (int): Number of steps whose projection was active
        inverse_drift (float): ‖A·A_inv − I‖_max at the last re-factorization
    """

    theta: np.ndarray
    A: np.ndarray
    A_inv: np.ndarray
    start: int
    end: int
    gamma: float
    lam: float
    radius: float
    steps: int = 0
    projections: int = 0
    inverse_drift: float = field(default=0.0)

    @property
    def length(self) -> int:
        return self.end - self.start + 1


class HasBounds(Protocol):
    start: int
    end: int


IntervalLike = Union[Tuple[int, int], HasBounds]


def _interval_bounds(interval: IntervalLike) -> Tuple[int, int]:
    if isinstance(interval, tuple):
        return int(interval[0]), int(interval[1])
    return int(interval.start), int(interval.end)


def ons_init(interval: IntervalLike, h: Hyperparams) -> OnsState:
    """
    Create a fresh ONS learner for an interval.

    Args:
        interval: (start, end) rounds, or any object with ``start``/``end``
        h: Validated hyperparameters (supplies d, S, γ and λ)

    Returns:
        OnsState: θ = 0, A = λI, A_inv = I/λ

    Raises:
        DomainError: If the interval is empty or starts before round 1
    """
    start, end = _interval_bounds(interval)
    if end < start:
        raise DomainError(f"Empty interval [{start}, {end}]")
    if start < 1:
        raise DomainError(f"Interval [{start}, {end}] starts before round 1")
    dim = h.dim
    return OnsState(
        theta=np.zeros(dim),
        A=h.lambda_ons * np.eye(dim),
        A_inv=np.eye(dim) / h.lambda_ons,
        start=start,
        end=end,
        gamma=float(h.gamma_ons),
        lam=h.lambda_ons,
        radius=h.S,
    )


def _check_spd(A: np.ndarray) -> None:
    if not np.all(np.isfinite(A)):
        raise ProjectionError("Projection matrix has non-finite entries")
    try:
        scipy.linalg.cho_factor(A, check_finite=False)
    except scipy.linalg.LinAlgError as e:
        raise ProjectionError(f"Projection matrix is not positive definite: {e}") from e


def proj_weighted_ball(A: np.ndarray, theta_prime: np.ndarray, radius: float) -> np.ndarray:
    """
    Project onto {‖θ‖₂ ≤ S} in the norm induced by A.

    Solves min (θ − θ′)ᵀA(θ − θ′) s.t. ‖θ‖₂ ≤ S. For an exterior point the
    minimizer is θ(ν) = (A + νI)⁻¹Aθ′ where the multiplier ν ≥ 0 makes
    ‖θ(ν)‖₂ = S. ‖θ(ν)‖₂ decreases monotonically in ν, so ν is found by
    bracketed root finding on [0, ‖A‖₂‖θ′‖₂/S].

    Args:
        A: Symmetric positive-definite matrix
        theta_prime: Point to project
        radius: Ball radius S

    Returns:
        np.ndarray: The projected point (θ′ itself when already inside)

    Raises:
        ProjectionError: If A is not SPD or the root finding fails

    Example:
        >>> proj_weighted_ball(np.diag([4.0, 1.0]), np.array([2.0, 0.0]), 1.0)
        array([1., 0.])
    """
    theta_prime = np.asarray(theta_prime, dtype=float)
    _check_spd(A)
    norm = float(np.linalg.norm(theta_prime))
    if norm <= radius:
        return theta_prime.copy()

    target = A @ theta_prime
    eye = np.eye(A.shape[0])

    def excess(nu: float) -> float:
        return float(np.linalg.norm(np.linalg.solve(A + nu * eye, target))) - radius

    upper = float(np.linalg.norm(A, 2)) * norm / radius
    try:
        nu = brentq(
            excess,
            0.0,
            upper,
            xtol=1e-14,
            rtol=4 * np.finfo(float).eps,
            maxiter=PROJECTION_MAX_ITER,
        )
    except (RuntimeError, ValueError) as e:
        raise ProjectionError(f"Multiplier search failed: {e}") from e

    theta = np.linalg.solve(A + nu * eye, target)
    # Root finding stops on ν; pull residual excess back onto the sphere.
    theta_norm = float(np.linalg.norm(theta))
    if theta_norm > radius:
        theta = theta * (radius / theta_norm)
    elif radius - theta_norm > PROJECTION_TOL:
        logger.debug(f"Projection landed {radius - theta_norm:.3g} inside the sphere")
    return theta


def ons_step(state: OnsState, grad: np.ndarray) -> OnsState:
    """
    Take one ONS step with the gradient observed at the learner's own θ.

    The curvature matrix absorbs the current gradient first, so the step uses
    A_t, which already includes round t.

    Args:
        state: Learner to update (updated in place and returned)
        grad: Gradient of the round's loss at ``state.theta``

    Returns:
        OnsState: The updated learner

    Raises:
        DomainError: If the gradient has the wrong length or non-finite entries
    """
    grad = np.asarray(grad, dtype=float)
    if grad.shape != state.theta.shape:
        raise DomainError(f"Gradient has shape {grad.shape}, expected {state.theta.shape}")
    if not np.all(np.isfinite(grad)):
        raise DomainError("ONS received a non-finite gradient")

    state.steps += 1
    moved = bool(np.any(grad))
    if moved:
        state.A = state.A + np.outer(grad, grad)
        ainv_g = state.A_inv @ grad
        state.A_inv = state.A_inv - np.outer(ainv_g, ainv_g) / (1.0 + float(grad @ ainv_g))
    if state.steps % REFACTOR_EVERY == 0:
        _refactor(state)
    if not moved:
        return state

    proposal = state.theta - state.gamma * (state.A_inv @ grad)
    if float(np.linalg.norm(proposal)) > state.radius:
        state.projections += 1
        state.theta = proj_weighted_ball(state.A, proposal, state.radius)
    else:
        state.theta = proposal
    return state


def _refactor(state: OnsState) -> None:
    """Rebuild A_inv from A by Cholesky; runs every REFACTOR_EVERY calls, zero-gradient steps included."""
    eye = np.eye(state.A.shape[0])
    state.inverse_drift = float(np.max(np.abs(state.A @ state.A_inv - eye)))
    factor = scipy.linalg.cho_factor(state.A)
    state.A_inv = scipy.linalg.cho_solve(factor, eye)
    state.A_inv = 0.5 * (state.A_inv + state.A_inv.T)
    logger.debug(f"Re-factorized ONS inverse at step {state.steps}, drift {state.inverse_drift:.3g}")
