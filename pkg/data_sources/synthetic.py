"""
Synthetic Covariate-Shift Streams

Generates a stream whose input density drifts between two Gaussian
components while the labelling rule stays fixed:

    D_t(x) = (1 − α_t)·φ₁(x) + α_t·φ₂(x),   y = +1 iff ‖x‖₂ ≤ r

The label radius r defaults to the median norm of the truncated even mixture,
so about half of the points are positive.
The offline set is drawn with a fixed coefficient α₀. Both components share
the covariance c·I and are truncated to the ball ‖x‖₂ ≤ R by rejection, so
every sample satisfies the feature bound and the true ratio D_t/D₀ is known
in closed form.
"""

import functools
import logging
import math
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.optimize import brentq
from scipy.special import logsumexp
from scipy.stats import multivariate_normal, ncx2

from core import DomainError, LabeledSet

logger = logging.getLogger(__name__)

# Rejection-sampling rounds before giving up on a batch.
MAX_REJECTION_ROUNDS = 1000


class GaussianMixtureSpec(BaseModel):
    """
    Two-component Gaussian mixture with a shared isotropic covariance.

    Attributes:
        dim (int): Feature dimension d
        mean1 (Optional[List[float]]): μ₁, defaults to the all-ones vector
        mean2 (Optional[List[float]]): μ₂, defaults to minus the all-ones vector
        cov_scale (float): c in Σ = c·I
        clip_sigmas (float): Radius of the clipping ball in units of √c·√d
        label_radius (Optional[float]): r in y = +1 iff ‖x‖₂ ≤ r; defaults to the
            median norm of the truncated mixture at α = 1/2
    """

    model_config = ConfigDict(frozen=True)

    dim: int = Field(default=5, gt=0)
    mean1: Optional[List[float]] = None
    mean2: Optional[List[float]] = None
    cov_scale: float = Field(default=2.0, gt=0)
    clip_sigmas: float = Field(default=6.0, gt=0)
    label_radius: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _mean_lengths(self) -> "GaussianMixtureSpec":
        for name in ("mean1", "mean2"):
            value = getattr(self, name)
            if value is not None and len(value) != self.dim:
                raise ValueError(f"{name} has length {len(value)}, expected {self.dim}")
        return self

    @property
    def mu1(self) -> np.ndarray:
        return np.ones(self.dim) if self.mean1 is None else np.asarray(self.mean1, dtype=float)

    @property
    def mu2(self) -> np.ndarray:
        return -np.ones(self.dim) if self.mean2 is None else np.asarray(self.mean2, dtype=float)

    @property
    def clip_radius(self) -> float:
        """R = max‖μ‖₂ + clip_sigmas·√c·√d."""
        mean_scale = max(float(np.linalg.norm(self.mu1)), float(np.linalg.norm(self.mu2)))
        return mean_scale + self.clip_sigmas * math.sqrt(self.cov_scale * self.dim)

    def truncation_mass(self, mean: np.ndarray) -> float:
        """P(‖X‖₂ ≤ R) for X ∼ N(mean, c·I)."""
        noncentrality = float(mean @ mean) / self.cov_scale
        return float(ncx2.cdf(self.clip_radius**2 / self.cov_scale, self.dim, noncentrality))

    @property
    def label_threshold(self) -> float:
        """Radius r of the labelling rule y = +1 iff ‖x‖₂ ≤ r."""
        if self.label_radius is not None:
            return self.label_radius
        return _median_radius(
            self.dim,
            self.cov_scale,
            self.clip_radius,
            float(self.mu1 @ self.mu1) / self.cov_scale,
            float(self.mu2 @ self.mu2) / self.cov_scale,
        )


@functools.lru_cache(maxsize=32)
def _median_radius(dim: int, cov_scale: float, clip_radius: float, lam1: float, lam2: float) -> float:
    # Median of ‖x‖₂ under the even mixture, each component truncated to the clip ball.
    top = clip_radius**2 / cov_scale
    mass1, mass2 = ncx2.cdf(top, dim, lam1), ncx2.cdf(top, dim, lam2)

    def excess(u: float) -> float:
        return 0.5 * (ncx2.cdf(u, dim, lam1) / mass1 + ncx2.cdf(u, dim, lam2) / mass2) - 0.5

    return math.sqrt(cov_scale * brentq(excess, 0.0, top))


class Pattern(str, Enum):
    LIN = "lin"
    SQU = "squ"
    SIN = "sin"
    BER = "ber"
    CONST = "const"


class BerMode(str, Enum):
    FLIP = "flip"
    LITERAL = "literal"


class ShiftSchedule(BaseModel):
    """
    How the mixture coefficient α_t moves over the horizon.

    Attributes:
        pattern (Pattern): lin, squ, sin, ber or const
        horizon (int): Number of rounds T
        period (Optional[int]): M for squ and sin, defaults to ⌈√T⌉
        keep_prob (Optional[float]): Probability that ber keeps the current α
        ber_mode (BerMode): Default keep probability for ber when
            ``keep_prob`` is unset: flip → 1 − 1/√T, literal → 1/√T
        alpha0 (float): Mixture coefficient of the offline distribution
    """

    model_config = ConfigDict(frozen=True)

    pattern: Pattern = Pattern.SQU
    horizon: int = Field(gt=0)
    period: Optional[int] = Field(default=None, ge=1)
    keep_prob: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    ber_mode: BerMode = BerMode.FLIP
    alpha0: float = Field(default=0.9, ge=0.0, le=1.0)

    @field_validator("pattern", mode="before")
    @classmethod
    def _lower_pattern(cls, value):
        return value.lower() if isinstance(value, str) else value

    @property
    def M(self) -> int:
        return self.period if self.period is not None else math.ceil(math.sqrt(self.horizon))

    @property
    def p(self) -> float:
        if self.keep_prob is not None:
            return self.keep_prob
        root = math.sqrt(self.horizon)
        return 1.0 - 1.0 / root if self.ber_mode is BerMode.FLIP else 1.0 / root


def _check_round(s: ShiftSchedule, t: int) -> None:
    if not 1 <= t <= s.horizon:
        raise DomainError(f"Round {t} is outside [1, {s.horizon}]")


def alpha_at(s: ShiftSchedule, t: int, ber_path: Optional[np.ndarray] = None) -> float:
    """
    Mixture coefficient α_t at round t.

    The ber pattern is stateful and must be read from a path materialized by
    ``alpha_path``.

    Raises:
        DomainError: If t is outside [1, T] or a ber path is missing

    Example:
        >>> alpha_at(ShiftSchedule(pattern="lin", horizon=10), 5)
        0.5
    """
    _check_round(s, t)
    if s.pattern is Pattern.LIN:
        return t / s.horizon
    if s.pattern is Pattern.SQU:
        return 1.0 if math.ceil(t / s.M) % 2 == 1 else 0.0
    if s.pattern is Pattern.SIN:
        return math.sin((t % s.M) * math.pi / s.M)
    if s.pattern is Pattern.CONST:
        return s.alpha0
    if ber_path is None:
        raise DomainError("The ber pattern needs a materialized path; call alpha_path first")
    return float(ber_path[t - 1])


def alpha_path(s: ShiftSchedule, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    Materialize α_1..α_T.

    For ber, α₁ = 0 and each later round keeps the previous value with
    probability p and flips it otherwise; the draws come from ``rng``.

    Raises:
        DomainError: If the pattern is ber and no rng is given
    """
    if s.pattern is not Pattern.BER:
        return np.array([alpha_at(s, t) for t in range(1, s.horizon + 1)])
    if rng is None:
        raise DomainError("The ber pattern needs a random stream")
    flips = rng.random(s.horizon - 1) >= s.p
    path = np.zeros(s.horizon)
    path[1:] = np.cumsum(flips) % 2
    logger.info(f"Materialized ber schedule ({s.ber_mode.value}, keep_prob={s.p:.4g}), {int(flips.sum())} flips")
    return path


def sample_batch(g: GaussianMixtureSpec, alpha: float, n: int, rng: np.random.Generator) -> LabeledSet:
    """
    Draw n labelled points from (1 − α)·φ₁ + α·φ₂, truncated to ‖x‖₂ ≤ R.

    Raises:
        DomainError: If α is outside [0, 1] or n < 1
    """
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"Mixture coefficient {alpha} is outside [0, 1]")
    if n < 1:
        raise DomainError(f"Batch size must be >= 1, got {n}")
    radius = g.clip_radius
    scale = math.sqrt(g.cov_scale)
    second = rng.random(n) < alpha
    xs = np.empty((n, g.dim))
    pending = np.arange(n)
    for _ in range(MAX_REJECTION_ROUNDS):
        means = np.where(second[pending, None], g.mu2, g.mu1)
        draws = means + scale * rng.standard_normal((pending.size, g.dim))
        inside = np.linalg.norm(draws, axis=1) <= radius
        xs[pending[inside]] = draws[inside]
        pending = pending[~inside]
        if pending.size == 0:
            break
    else:
        raise DomainError("Rejection sampling did not fill the batch; clip radius is too small")
    ys = np.where(np.linalg.norm(xs, axis=1) <= g.label_threshold, 1, -1)
    return LabeledSet(xs=xs, ys=ys)


def component_log_densities(g: GaussianMixtureSpec, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Log densities of the two truncated components at each row of x."""
    xs = np.atleast_2d(np.asarray(x, dtype=float))
    cov = g.cov_scale * np.eye(g.dim)
    log1 = np.atleast_1d(multivariate_normal.logpdf(xs, mean=g.mu1, cov=cov))
    log2 = np.atleast_1d(multivariate_normal.logpdf(xs, mean=g.mu2, cov=cov))
    return log1 - math.log(g.truncation_mass(g.mu1)), log2 - math.log(g.truncation_mass(g.mu2))


def mixture_logpdf(log1: np.ndarray, log2: np.ndarray, alpha: float) -> np.ndarray:
    stacked = np.vstack([log1, log2])
    return logsumexp(stacked, axis=0, b=np.array([[1.0 - alpha], [alpha]]))


def true_ratio(g: GaussianMixtureSpec, alpha_t: float, alpha0: float, x: np.ndarray):
    """
    Exact density ratio D_t(x)/D₀(x) of the truncated mixtures.

    Never used by the learners; it feeds the diagnostics only.

    Returns:
        A float for a single point, an array for a matrix
    """
    for value in (alpha_t, alpha0):
        if not 0.0 <= value <= 1.0:
            raise DomainError(f"Mixture coefficient {value} is outside [0, 1]")
    log1, log2 = component_log_densities(g, x)
    ratio = np.exp(mixture_logpdf(log1, log2, alpha_t) - mixture_logpdf(log1, log2, alpha0))
    return ratio if np.ndim(x) > 1 else float(ratio[0])


def alpha_variation(path: np.ndarray) -> float:
    """Σ_{t=2..T} |α_t − α_{t−1}|."""
    return float(np.abs(np.diff(np.asarray(path, dtype=float))).sum())


def component_l1_distance(g: GaussianMixtureSpec, n_mc: int, rng: np.random.Generator) -> float:
    """
    Monte Carlo estimate of ‖φ₂ − φ₁‖₁.

    Draws come from the equal mixture m = (φ₁ + φ₂)/2, where
    |φ₁ − φ₂|/m = 2·|tanh((log φ₁ − log φ₂)/2)| stays in [0, 2].
    """
    if n_mc < 1:
        raise DomainError(f"n_mc must be >= 1, got {n_mc}")
    draws = sample_batch(g, 0.5, n_mc, rng).xs
    log1, log2 = component_log_densities(g, draws)
    return float(np.mean(2.0 * np.abs(np.tanh(0.5 * (log1 - log2)))))


def variation_V(
    s: ShiftSchedule,
    g: GaussianMixtureSpec,
    n_mc: int,
    rng: np.random.Generator,
    path: Optional[np.ndarray] = None,
) -> float:
    """
    Estimate the input-density variation Σ_t ‖D_t − D_{t−1}‖₁.

    With shared components each term is |α_t − α_{t−1}|·‖φ₂ − φ₁‖₁, so the
    L1 factor is estimated once.

    Args:
        s: Shift schedule
        g: Mixture spec
        n_mc: Monte Carlo draws for the L1 factor
        rng: Random stream for the Monte Carlo draws
        path: Materialized α path (required for ber)
    """
    if n_mc < 1:
        raise DomainError(f"n_mc must be >= 1, got {n_mc}")
    if path is None:
        path = alpha_path(s)
    total_change = alpha_variation(path)
    if total_change == 0.0:
        return 0.0
    return total_change * component_l1_distance(g, n_mc, rng)


def ratio_bound_diagnostics(
    g: GaussianMixtureSpec,
    path: np.ndarray,
    alpha0: float,
    rng: np.random.Generator,
    n_points: int = 10_000,
) -> Tuple[float, float]:
    """
    Empirical and analytic bounds on r*_t over the run.

    The empirical bound is the largest r*_t(x) over ``n_points`` uniform
    points in the clipping ball and every distinct α_t in the path. The
    analytic bound is max_t max((1 − α_t)/(1 − α₀), α_t/α₀).

    Returns:
        Tuple[float, float]: (empirical bound, analytic bound)
    """
    directions = rng.standard_normal((n_points, g.dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = g.clip_radius * rng.random(n_points) ** (1.0 / g.dim)
    points = directions * radii[:, None]

    alphas = np.unique(np.asarray(path, dtype=float))
    log1, log2 = component_log_densities(g, points)
    denominator = mixture_logpdf(log1, log2, alpha0)
    empirical = max(float(np.exp(mixture_logpdf(log1, log2, a) - denominator).max()) for a in alphas)

    analytic = 0.0
    for a in alphas:
        first = (1.0 - a) / (1.0 - alpha0) if alpha0 < 1.0 else (math.inf if a < 1.0 else 1.0)
        second = a / alpha0 if alpha0 > 0.0 else (math.inf if a > 0.0 else 1.0)
        analytic = max(analytic, first, second)
    logger.info(f"Ratio bound: empirical {empirical:.4g}, analytic {analytic:.4g}")
    return empirical, analytic
