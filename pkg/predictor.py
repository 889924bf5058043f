"""
Importance-Weighted Predictor

Trains a binary logistic classifier on the labelled offline set, weighting
each offline point by its estimated density ratio so that the weighted
offline risk matches the risk under the current online distribution.
Ratios can be flattened and are capped before use. The FIX baseline is the
same trainer with unit weights, run once.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import expit

from bregman import RatioModel, ratio_eval
from core import ConfigError, DomainError, LabeledSet, UnlabeledBatch
from tools.solvers import minimize_in_ball

logger = logging.getLogger(__name__)


class FlattenKind(str, Enum):
    IDENTITY = "identity"
    POWER = "power"
    MIXTURE = "mixture"


class FlattenSpec(BaseModel):
    """
    A flattening transform g applied to ratios before they become weights.

    Attributes:
        kind (FlattenKind): identity, power (g(r) = r^γ) or mixture
            (g(r) = r / (α + (1 − α)r))
        param (float): γ for power, α for mixture; ignored for identity
    """

    model_config = ConfigDict(frozen=True)

    kind: FlattenKind = Field(default=FlattenKind.IDENTITY)
    param: float = Field(default=1.0, description="Flattening parameter in (0, 1]")

    @model_validator(mode="after")
    def _param_in_range(self) -> "FlattenSpec":
        if self.kind is not FlattenKind.IDENTITY and not 0.0 < self.param <= 1.0:
            raise ValueError(f"{self.kind.value} parameter must lie in (0, 1], got {self.param}")
        return self

    @classmethod
    def parse(cls, text: Optional[str]) -> "FlattenSpec":
        """
        Parse ``identity``, ``power:0.5`` or ``mixture:0.5``.

        Raises:
            ConfigError: If the text is not one of those forms
        """
        if not text or text.strip().lower() in ("identity", "none"):
            return cls()
        kind, _, value = text.strip().lower().partition(":")
        try:
            return cls(kind=FlattenKind(kind), param=float(value))
        except ValueError as e:
            raise ConfigError(f"Invalid flatten spec '{text}': {e}") from e

    def __str__(self) -> str:
        if self.kind is FlattenKind.IDENTITY:
            return "identity"
        return f"{self.kind.value}:{self.param!r}"


def flatten_weight(f: FlattenSpec, r: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """
    Apply the flattening transform to nonnegative ratios.

    Raises:
        DomainError: If any ratio is negative

    Example:
        >>> flatten_weight(FlattenSpec(kind="power", param=0.5), 4.0)
        2.0
    """
    arr = np.asarray(r, dtype=float)
    if np.any(arr < 0):
        raise DomainError("Cannot flatten a negative ratio")
    if f.kind is FlattenKind.POWER:
        out = np.power(arr, f.param)
    elif f.kind is FlattenKind.MIXTURE:
        out = arr / (f.param + (1.0 - f.param) * arr)
    else:
        out = arr
    return out if np.ndim(r) else float(out)


@dataclass
class PreparedWeights:
    """Importance weights for the offline set plus how many were clipped."""

    weights: np.ndarray
    cap_clips: int
    floor_clips: int

    @property
    def clip_count(self) -> int:
        return self.cap_clips + self.floor_clips


def prepare_weights(
    model: RatioModel,
    f: FlattenSpec,
    offline: np.ndarray,
    cap: float,
) -> PreparedWeights:
    """
    Turn a ratio model into capped importance weights for the offline points.

    w_i = min(cap, g(max(0, r̂(x_i)))). Negative ratios (linear link) are
    floored at 0 and ratios above the cap are truncated; both are counted.

    Raises:
        ConfigError: If cap < 1
    """
    if not cap >= 1.0:
        raise ConfigError(f"Weight cap must be >= 1, got {cap}")
    raw = np.atleast_1d(ratio_eval(model, np.atleast_2d(offline)))
    floor_clips = int(np.count_nonzero(raw < 0))
    flattened = flatten_weight(f, np.maximum(raw, 0.0))
    cap_clips = int(np.count_nonzero(flattened > cap))
    weights = np.minimum(flattened, cap)
    if cap_clips or floor_clips:
        logger.debug(f"Clipped {cap_clips} weights at the cap and {floor_clips} at zero")
    return PreparedWeights(weights=weights, cap_clips=cap_clips, floor_clips=floor_clips)


class SolverConfig(BaseModel):
    """
    Settings of the predictor's projected solver.

    Attributes:
        max_iter (int): Iteration cap
        tol (float): Projected-gradient tolerance
        radius (Optional[float]): Norm bound D_w on (w, bias); defaults to 10·d
        fit_intercept (bool): Whether the classifier learns a bias term
    """

    model_config = ConfigDict(frozen=True)

    max_iter: int = Field(default=200, gt=0)
    tol: float = Field(default=1e-6, gt=0)
    radius: Optional[float] = Field(default=None, gt=0)
    fit_intercept: bool = True

    def radius_for(self, dim: int) -> float:
        return self.radius if self.radius is not None else 10.0 * dim


@dataclass
class LinearClassifier:
    """
    A linear classifier sign(wᵀx + bias) with ties predicted as +1.

    Attributes:
        w (np.ndarray): Weight vector of length d
        bias (float): Intercept (0 when the intercept is disabled)
        trained (bool): Whether the classifier has been fit
    """

    w: np.ndarray
    bias: float = 0.0
    trained: bool = False
    objective: float = field(default=float("nan"), compare=False)

    @classmethod
    def untrained(cls, dim: int) -> "LinearClassifier":
        return cls(w=np.zeros(dim))

    @property
    def params(self) -> np.ndarray:
        return np.append(self.w, self.bias)


def _augment(xs: np.ndarray, fit_intercept: bool) -> np.ndarray:
    if fit_intercept:
        return np.hstack([xs, np.ones((xs.shape[0], 1))])
    return xs


def _weighted_logistic(xa: np.ndarray, ys: np.ndarray, weights: np.ndarray):
    n = xa.shape[0]

    def objective(params: np.ndarray) -> float:
        margins = ys * (xa @ params)
        return float(weights @ np.logaddexp(0.0, -margins) / n)

    def gradient(params: np.ndarray) -> np.ndarray:
        margins = ys * (xa @ params)
        coeffs = -weights * ys * expit(-margins)
        return coeffs @ xa / n

    return objective, gradient


def iwerm_train(
    offline: LabeledSet,
    weights: np.ndarray,
    warm: Optional[LinearClassifier] = None,
    cfg: Optional[SolverConfig] = None,
) -> LinearClassifier:
    """
    Importance-weighted logistic regression over a norm ball.

    Minimizes (1/N₀)·Σ w̃_n·log(1 + exp(−y_n(wᵀx_n + b))) over ‖(w, b)‖₂ ≤ D_w,
    where w̃ are the weights divided by their mean. Dividing by the mean
    leaves the minimizer unchanged and makes the result invariant to a
    positive rescaling of the weights.

    Args:
        offline: Labelled offline set S₀
        weights: Nonnegative weight per offline point
        warm: Previous classifier to start from
        cfg: Solver settings

    Returns:
        LinearClassifier: The trained classifier

    Raises:
        DomainError: If the weights are misshapen, negative, non-finite or all zero
    """
    cfg = cfg or SolverConfig()
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(offline),):
        raise DomainError(f"Expected {len(offline)} weights, got shape {weights.shape}")
    if not np.all(np.isfinite(weights)):
        raise DomainError("Importance weights contain non-finite values")
    if np.any(weights < 0):
        raise DomainError("Importance weights must be nonnegative")
    mean_weight = float(weights.mean())
    if not mean_weight > 0:
        raise DomainError("All importance weights are zero")

    xa = _augment(offline.xs, cfg.fit_intercept)
    normalized = weights / mean_weight
    objective, gradient = _weighted_logistic(xa, offline.ys.astype(float), normalized)
    lipschitz = 0.25 * float(np.linalg.eigvalsh((xa.T * normalized) @ xa / xa.shape[0])[-1])

    x0 = np.zeros(xa.shape[1])
    if warm is not None and warm.trained:
        x0 = warm.params if cfg.fit_intercept else warm.w.copy()
    result = minimize_in_ball(
        objective,
        gradient,
        x0,
        cfg.radius_for(offline.dim),
        lipschitz=max(lipschitz, 1e-12),
        max_iter=cfg.max_iter,
        tol=cfg.tol,
    )
    if not result.converged:
        logger.debug(f"IWERM solver hit max_iter with |pg|={result.grad_norm:.3g}")
    w = result.x[: offline.dim].copy()
    bias = float(result.x[-1]) if cfg.fit_intercept else 0.0
    return LinearClassifier(w=w, bias=bias, trained=True, objective=result.objective)


def fix_train(offline: LabeledSet, cfg: Optional[SolverConfig] = None) -> LinearClassifier:
    """Train the FIX baseline: unit weights, trained once on S₀."""
    return iwerm_train(offline, np.ones(len(offline)), cfg=cfg)


def _require_trained(c: LinearClassifier) -> None:
    if not c.trained:
        raise DomainError("Classifier has not been trained")


def predict(c: LinearClassifier, x: np.ndarray) -> Union[int, np.ndarray]:
    """
    Predict ±1 labels; a score of exactly 0 predicts +1.

    Returns:
        An int for a single point, an array of labels for a matrix
    """
    _require_trained(c)
    scores = np.asarray(x, dtype=float) @ c.w + c.bias
    labels = np.where(scores >= 0, 1, -1)
    return labels if np.ndim(scores) else int(labels)


def error_rate(c: LinearClassifier, batch: Union[LabeledSet, UnlabeledBatch]) -> float:
    """
    Fraction of misclassified points in a labelled batch.

    Raises:
        DomainError: If the classifier is untrained or the batch carries no labels
    """
    _require_trained(c)
    ys = batch.ys if isinstance(batch, LabeledSet) else batch.hidden_ys
    if ys is None:
        raise DomainError("Batch has no labels to evaluate against")
    if len(ys) == 0:
        raise DomainError("Cannot compute an error rate on an empty batch")
    predictions = predict(c, np.atleast_2d(batch.xs))
    return float(np.mean(predictions != ys))
