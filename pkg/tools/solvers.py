"""
Projected First-Order Solver

Accelerated projected gradient descent over a Euclidean ball, shared by the
importance-weighted predictor, the full-batch comparator used by the regret
diagnostics and the tests' oracles. The method is deterministic: the same
inputs always walk the same iterates.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

logger = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], float]
Gradient = Callable[[np.ndarray], np.ndarray]


@dataclass
class SolverResult:
    """
    Outcome of a projected solve.

    Attributes:
        x (np.ndarray): Best iterate found (lowest objective)
        objective (float): Objective value at ``x``
        iterations (int): Number of iterations performed
        converged (bool): Whether the projected-gradient norm reached ``tol``
        grad_norm (float): Projected-gradient norm at the last iterate
    """

    x: np.ndarray
    objective: float
    iterations: int
    converged: bool
    grad_norm: float


def project_ball(x: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto {x : ‖x‖₂ ≤ radius}."""
    norm = float(np.linalg.norm(x))
    if norm <= radius:
        return x
    return x * (radius / norm)


def minimize_in_ball(
    objective: Objective,
    gradient: Gradient,
    x0: np.ndarray,
    radius: float,
    lipschitz: Optional[float] = None,
    max_iter: int = 200,
    tol: float = 1e-6,
) -> SolverResult:
    """
    Minimize a smooth convex function over a ball with FISTA.

    Momentum is reset whenever it points against the last step (gradient
    restart). When ``lipschitz`` is omitted the step size is found by
    backtracking, starting from L = 1.

    Args:
        objective: f(x)
        gradient: ∇f(x)
        x0: Starting point (projected onto the ball first)
        radius: Ball radius
        lipschitz: Known Lipschitz constant of ∇f, if any
        max_iter: Iteration cap
        tol: Stop once ‖L·(x − Π(x − ∇f(x)/L))‖₂ ≤ tol

    Returns:
        SolverResult: The best iterate and convergence information
    """
    backtrack = lipschitz is None
    step_l = 1.0 if lipschitz is None else max(float(lipschitz), 1e-12)

    x = project_ball(np.asarray(x0, dtype=float).copy(), radius)
    f_x = objective(x)
    best_x, best_f = x, f_x
    origin = np.zeros_like(x)
    f_origin = objective(origin)
    if f_origin < best_f:
        best_x, best_f = origin, f_origin

    y = x.copy()
    t = 1.0
    grad_norm = math.inf
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        g_y = gradient(y)
        f_y = objective(y) if backtrack else 0.0
        while True:
            x_new = project_ball(y - g_y / step_l, radius)
            if not backtrack:
                break
            step = x_new - y
            bound = f_y + float(g_y @ step) + 0.5 * step_l * float(step @ step)
            f_new = objective(x_new)
            if f_new <= bound + 1e-12 * max(1.0, abs(f_y)):
                break
            step_l *= 2.0

        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        if float((y - x_new) @ (x_new - x)) > 0.0:
            t_new = 1.0
            y = x_new.copy()
        else:
            y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t = x_new, t_new

        f_x = objective(x)
        if f_x < best_f:
            best_x, best_f = x, f_x

        g_x = gradient(x)
        grad_norm = step_l * float(np.linalg.norm(x - project_ball(x - g_x / step_l, radius)))
        if grad_norm <= tol:
            converged = True
            break

    if not converged:
        logger.debug(f"Projected solver stopped after {iterations} iterations, |pg|={grad_norm:.3g}")
    return SolverResult(
        x=best_x,
        objective=float(best_f),
        iterations=iterations,
        converged=converged,
        grad_norm=grad_norm,
    )
