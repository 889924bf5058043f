"""
Core Types for Shift Tracker

This module holds the pieces every other module relies on: the validated
hyperparameters of the online density-ratio estimator, the sample containers
for the offline set and the unlabeled online batches, the exception
hierarchy, the flat key=value config reader and the seeded random-stream
contract that makes every experiment reproducible bit for bit.
"""

import hashlib
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import numpy as np
from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

logger = logging.getLogger(__name__)

# Slack allowed when checking ‖x‖₂ ≤ R on ingested data.
NORM_SLACK = 1e-9


class ShiftTrackerError(ValueError):
    """Base class for every error raised by this package."""


class ConfigError(ShiftTrackerError):
    """Invalid hyperparameters or experiment configuration."""


class DomainError(ShiftTrackerError):
    """A value outside the mathematical domain of an operation."""


class ProjectionError(DomainError):
    """The weighted projection received a matrix that is not SPD."""


class DataFormatError(ShiftTrackerError):
    """A data file could not be parsed into samples."""


class InvariantViolation(ShiftTrackerError):
    """An empirical invariant check failed."""


def _safe_exp(value: float) -> float:
    try:
        return math.exp(value)
    except OverflowError:
        return math.inf


class Hyperparams(BaseModel):
    """
    Validated hyperparameters of the online density-ratio estimator.

    ``beta`` is not a stored field: it is recomputed from ``radius`` and
    ``feature_bound`` every time it is read, so it can never disagree with
    them.

    Attributes:
        dim (int): Feature dimension d
        radius (Optional[float]): Parameter-norm bound S, ‖θ‖₂ ≤ S (default d/2)
        feature_bound (float): Feature-norm bound R, ‖x‖₂ ≤ R
        gamma_ons (Optional[float]): ONS step parameter (default 6(1+β))
        lambda_ons (float): ONS curvature regularizer λ
        ratio_cap (float): Truncation threshold for importance weights
        horizon (int): Number of online rounds T
        n_offline (int): Offline sample size N₀
        n_online (int): Online batch size N_t
    """

    model_config = ConfigDict(frozen=True)

    dim: int = Field(gt=0, description="Feature dimension d")
    radius: Optional[float] = Field(
        default=None, description="Parameter-norm bound S; defaults to d/2"
    )
    feature_bound: float = Field(description="Maximum feature norm R")
    gamma_ons: Optional[float] = Field(
        default=None, description="ONS step parameter; defaults to 6(1+beta)"
    )
    lambda_ons: float = Field(default=1.0, description="ONS regularizer lambda")
    ratio_cap: float = Field(default=100.0, description="Importance weight cap")
    horizon: int = Field(description="Number of online rounds T")
    n_offline: int = Field(default=1000, description="Offline sample size N0")
    n_online: int = Field(default=1, description="Online batch size N_t")

    @field_validator("radius", "feature_bound", "gamma_ons", "lambda_ons")
    @classmethod
    def _positive(cls, value: Optional[float]) -> Optional[float]:
        if value is not None and not (math.isfinite(value) and value > 0):
            raise ValueError(f"must be a positive finite number, got {value}")
        return value

    @field_validator("horizon", "n_offline", "n_online")
    @classmethod
    def _positive_count(cls, value: int) -> int:
        if value <= 0:
            raise ValueError(f"must be a positive integer, got {value}")
        return value

    @field_validator("ratio_cap")
    @classmethod
    def _cap_at_least_one(cls, value: float) -> float:
        if not value >= 1.0:
            raise ValueError(f"ratio_cap must be >= 1, got {value}")
        return value

    @property
    def beta(self) -> float:
        """β = exp(S·R), the range bound of exponential-link ratios."""
        return _safe_exp(self.S * self.feature_bound)

    @property
    def S(self) -> float:
        if self.radius is None:
            raise ConfigError("radius is unset; call validate_hyperparams first")
        return self.radius

    @property
    def R(self) -> float:
        return self.feature_bound

    def to_dict(self) -> Dict[str, Any]:
        """
        Convert the hyperparameters to a plain dictionary.

        Returns:
            Dict[str, Any]: All fields plus the derived ``beta``
        """
        data = self.model_dump()
        if self.radius is not None:
            data["beta"] = self.beta
        return data


def validate_hyperparams(raw: Union[Hyperparams, Mapping[str, Any]]) -> Hyperparams:
    """
    Validate raw hyperparameter values and fill in the defaults.

    Missing ``radius`` becomes d/2 and missing ``gamma_ons`` becomes 6(1+β).
    Validating an already-validated object returns an equal object.

    Args:
        raw: A Hyperparams instance or a mapping of raw field values

    Returns:
        Hyperparams: Normalized hyperparameters with every default filled

    Raises:
        ConfigError: If any value is missing, non-positive or inconsistent

    Example:
        >>> h = validate_hyperparams({"dim": 5, "feature_bound": 1.0, "horizon": 10})
        >>> h.radius, round(h.beta, 3)
        (2.5, 12.182)
    """
    data = raw.model_dump() if isinstance(raw, Hyperparams) else dict(raw)
    data = {key: value for key, value in data.items() if value is not None}
    data.pop("beta", None)
    try:
        partial = Hyperparams.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid hyperparameters: {e}") from e

    filled = partial.model_dump()
    if filled["radius"] is None:
        filled["radius"] = partial.dim / 2.0
    beta = _safe_exp(filled["radius"] * partial.feature_bound)
    if filled["gamma_ons"] is None:
        filled["gamma_ons"] = 6.0 * (1.0 + beta)
    if not math.isfinite(filled["gamma_ons"]):
        raise ConfigError(
            "gamma_ons default 6(1+beta) overflows; set gamma_ons explicitly"
        )
    return Hyperparams.model_validate(filled)


class SeedSpec(BaseModel):
    """Master seed from which every labelled random stream is derived."""

    model_config = ConfigDict(frozen=True)

    master_seed: int = Field(ge=0, lt=2**64, description="64-bit master seed")


def _label_key(label: str) -> int:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_stream(seed: Union[SeedSpec, int], label: str) -> np.random.Generator:
    """
    Derive an independent, reproducible random stream for a labelled purpose.

    The same (seed, label) pair always yields the same sequence; different
    labels or different master seeds yield statistically independent ones.

    Args:
        seed: The master seed (a SeedSpec or a plain non-negative integer)
        label: Stream purpose, e.g. "datagen" or "schedule"

    Returns:
        np.random.Generator: A fresh generator positioned at the stream start

    Raises:
        ConfigError: If the label is empty
    """
    if not label:
        raise ConfigError("stream label must be nonempty")
    if not isinstance(seed, SeedSpec):
        seed = SeedSpec(master_seed=seed)
    sequence = np.random.SeedSequence(
        entropy=seed.master_seed, spawn_key=(_label_key(label),)
    )
    return np.random.Generator(np.random.PCG64(sequence))


@dataclass
class LabeledSet:
    """
    A labelled sample set S₀ stored column-wise.

    Attributes:
        xs (np.ndarray): Features, shape (n, d)
        ys (np.ndarray): Labels in {-1, +1}, shape (n,)
    """

    xs: np.ndarray
    ys: np.ndarray

    def __len__(self) -> int:
        return int(self.xs.shape[0])

    @property
    def dim(self) -> int:
        return int(self.xs.shape[1])


@dataclass
class UnlabeledBatch:
    """
    The unlabeled data S_t received at one online round.

    ``hidden_ys`` is kept for evaluation only and never reaches a training path.
    """

    round: int
    xs: np.ndarray
    hidden_ys: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return int(self.xs.shape[0])

    def blinded(self) -> "UnlabeledBatch":
        """Return a copy of the batch without its evaluation labels."""
        return UnlabeledBatch(round=self.round, xs=self.xs, hidden_ys=None)


def check_feature_bound(xs: np.ndarray, bound: float, what: str = "samples") -> None:
    """
    Assert that every row of ``xs`` satisfies ‖x‖₂ ≤ R.

    Raises:
        DomainError: If any row exceeds the bound or is non-finite
    """
    xs = np.atleast_2d(xs)
    if not np.all(np.isfinite(xs)):
        raise DomainError(f"{what} contain non-finite values")
    norms = np.linalg.norm(xs, axis=1)
    worst = float(norms.max()) if norms.size else 0.0
    if worst > bound * (1.0 + NORM_SLACK):
        raise DomainError(f"{what} violate the feature bound: max norm {worst:.6g} > R={bound:.6g}")


def read_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """
    Read a flat key=value config file with # comments.

    Args:
        path: Path to the config file

    Returns:
        Dict[str, str]: Raw string values keyed by field name

    Raises:
        ConfigError: If the file does not exist or a key has no value
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    values = dotenv_values(path)
    missing = [key for key, value in values.items() if value is None or value == ""]
    if missing:
        raise ConfigError(f"Config keys without values in {path}: {', '.join(missing)}")
    logger.info(f"Loaded {len(values)} config values from {path}")
    return {key: str(value) for key, value in values.items()}


def merge_config(*layers: Mapping[str, Any]) -> Dict[str, Any]:
    """Merge config layers left to right; ``None`` values never override."""
    merged: Dict[str, Any] = {}
    for layer in layers:
        merged.update({key: value for key, value in layer.items() if value is not None})
    return merged


if __name__ == "__main__":
    print("Hyperparameter Validation")
    print("=" * 50)

    h = validate_hyperparams({"dim": 5, "feature_bound": 1.0, "horizon": 100})
    print(f"S={h.radius}, beta={h.beta:.4f}, gamma_ons={h.gamma_ons:.4f}")

    stream = derive_stream(42, "datagen")
    print(f"First draws of (42, 'datagen'): {stream.random(3)}")
