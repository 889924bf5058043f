"""
Tools Package

This package contains the shared numerical helpers (the projected solver)
and the invariant check suites behind ``app.py check``.
"""

from .solvers import SolverResult, minimize_in_ball, project_ball

__all__ = ["SolverResult", "minimize_in_ball", "project_ball"]
