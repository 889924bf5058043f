"""
Run Records and Output Files

Pydantic models for what a run reports (one record per round, one summary
per seed, an aggregate over seeds) and the writers that turn them into
``rounds_<seed>.csv``, ``summary.json`` and ``heatmap.csv``.
"""

import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator, model_validator

logger = logging.getLogger(__name__)

METHOD_ORDER = ("accous", "olre", "fix", "ulsif", "kliep")
ROUND_COLUMNS = [
    "t",
    "alpha",
    "err_accous",
    "err_olre",
    "err_fix",
    "err_ulsif",
    "err_kliep",
    "loss_hat",
    "est_err",
    "clip_count",
]
FLOAT_FORMAT = "%.9g"
MASS_TOL = 1e-9
SOURCE_DIRS = (".", "learners", "data_sources", "tools")


def bucket_column(length: int) -> str:
    return f"w_len_{length}"


class RoundRecord(BaseModel):
    """
    What one round of a run reports.

    Attributes:
        t (int): Round index
        alpha (Optional[float]): Mixture coefficient α_t (synthetic runs only)
        errors (Dict[str, Optional[float]]): Classification error per method;
            None when the batch carries no labels
        loss_hat (Optional[float]): L̂_t(θ̂_t) of the online estimator
        est_err (Optional[float]): E_{S₀}|r̂_t − r*_t| (synthetic runs only)
        clip_count (int): Weights clipped at the cap or at zero
        bucket_mass (Dict[int, float]): Combination weight per interval length
    """

    t: int = Field(ge=1)
    alpha: Optional[float] = None
    errors: Dict[str, Optional[float]] = Field(default_factory=dict)
    loss_hat: Optional[float] = None
    est_err: Optional[float] = None
    clip_count: int = 0
    bucket_mass: Dict[int, float] = Field(default_factory=dict)

    @field_validator("errors")
    @classmethod
    def _errors_in_unit_interval(cls, value: Dict[str, Optional[float]]) -> Dict[str, Optional[float]]:
        for method, err in value.items():
            if err is not None and not 0.0 <= err <= 1.0:
                raise ValueError(f"error of {method} is {err}, outside [0, 1]")
        return value

    @model_validator(mode="after")
    def _masses_on_simplex(self) -> "RoundRecord":
        if self.bucket_mass:
            total = sum(self.bucket_mass.values())
            if abs(total - 1.0) > MASS_TOL:
                raise ValueError(f"bucket masses sum to {total}, expected 1")
        return self

    def to_row(self, buckets: Sequence[int]) -> Dict[str, Any]:
        row: Dict[str, Any] = {
            "t": self.t,
            "alpha": self.alpha,
            "loss_hat": self.loss_hat,
            "est_err": self.est_err,
            "clip_count": self.clip_count,
        }
        for method in METHOD_ORDER:
            row[f"err_{method}"] = self.errors.get(method)
        for length in buckets:
            row[bucket_column(length)] = self.bucket_mass.get(length, 0.0 if self.bucket_mass else None)
        return row


class Prop2Check(BaseModel):
    """Both sides of the cumulative estimation-error bound."""

    lhs: float
    rhs: float
    holds: bool
    mu: float


class RegretReport(BaseModel):
    """Dynamic regret against the per-round best parameter, on sampled rounds."""

    rounds: List[int]
    regret: Dict[str, float]
    realizability_gap: float


class Summary(BaseModel):
    """
    Per-seed summary of a run.

    Attributes:
        seed (int): Master seed of the run
        failed (bool): Whether a module error aborted the seed
        error (Optional[str]): The error message of a failed seed
        mean_error (Dict[str, float]): Mean classification error per method
        cumulative_est_error (Optional[float]): Σ_t E_{S₀}|r̂_t − r*_t|
        prop2 (Optional[Prop2Check]): The estimation-error bound check
        variation (Optional[float]): Estimate of Σ_t ‖D_t − D_{t−1}‖₁
        ratio_bound_empirical (Optional[float]): Largest r*_t seen
        ratio_bound_analytic (Optional[float]): max_t max((1−α_t)/(1−α₀), α_t/α₀)
        projection_fraction (Optional[float]): Share of ONS steps that projected
        max_inverse_drift (Optional[float]): Worst ‖A·A⁻¹ − I‖_max seen
        regret (Optional[RegretReport]): Dynamic regret diagnostics
        wall_time (float): Seconds spent on the seed
    """

    seed: int
    failed: bool = False
    error: Optional[str] = None
    mean_error: Dict[str, float] = Field(default_factory=dict)
    cumulative_est_error: Optional[float] = None
    prop2: Optional[Prop2Check] = None
    variation: Optional[float] = None
    ratio_bound_empirical: Optional[float] = None
    ratio_bound_analytic: Optional[float] = None
    projection_fraction: Optional[float] = None
    max_inverse_drift: Optional[float] = None
    regret: Optional[RegretReport] = None
    wall_time: float = 0.0


class Aggregate(BaseModel):
    """Cross-seed mean and standard deviation of each method's mean error."""

    mean: Dict[str, float] = Field(default_factory=dict)
    std: Dict[str, float] = Field(default_factory=dict)
    seeds: List[int] = Field(default_factory=list)
    failed_seeds: List[int] = Field(default_factory=list)


class RunReport(BaseModel):
    """Contents of summary.json."""

    build_id: str
    config: Dict[str, Any]
    aggregate: Aggregate
    summaries: List[Summary]


def mean_errors(records: Sequence[RoundRecord]) -> Dict[str, float]:
    """Simple per-method average of the recorded errors."""
    totals: Dict[str, List[float]] = {}
    for record in records:
        for method, err in record.errors.items():
            if err is not None:
                totals.setdefault(method, []).append(err)
    return {method: float(np.mean(values)) for method, values in totals.items()}


def aggregate(summaries: Sequence[Summary]) -> Aggregate:
    """Mean ± std over the seeds that finished."""
    ok = [s for s in summaries if not s.failed]
    methods = [m for m in METHOD_ORDER if any(m in s.mean_error for s in ok)]
    mean, std = {}, {}
    for method in methods:
        values = np.array([s.mean_error[method] for s in ok if method in s.mean_error])
        mean[method] = float(values.mean())
        std[method] = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return Aggregate(
        mean=mean,
        std=std,
        seeds=[s.seed for s in ok],
        failed_seeds=[s.seed for s in summaries if s.failed],
    )


def build_id(root: Union[str, Path, None] = None) -> str:
    """Content hash of the package sources, stable across checkouts."""
    base = Path(root) if root is not None else Path(__file__).resolve().parent
    digest = hashlib.sha256()
    for directory in SOURCE_DIRS:
        for path in sorted((base / directory).glob("*.py")):
            digest.update(path.relative_to(base).as_posix().encode("utf-8"))
            digest.update(path.read_bytes())
    return digest.hexdigest()[:12]


def rounds_frame(records: Sequence[RoundRecord], buckets: Sequence[int]) -> pd.DataFrame:
    columns = ROUND_COLUMNS + [bucket_column(length) for length in buckets]
    return pd.DataFrame([r.to_row(buckets) for r in records], columns=columns)


def _clean_floats(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _clean_floats(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_clean_floats(v) for v in value]
    return value


def emit_outputs(
    records: Dict[int, Sequence[RoundRecord]],
    summaries: Sequence[Summary],
    config: Dict[str, Any],
    heatmap: pd.DataFrame,
    buckets: Sequence[int],
    out_dir: Union[str, Path],
) -> List[Path]:
    """
    Write the per-seed round tables, the run summary and the heatmap.

    Args:
        records: Round records keyed by seed
        summaries: Per-seed summaries
        config: The fully resolved flat configuration
        heatmap: Output of ``weight_heatmap`` for every seed
        buckets: Interval lengths that get a weight column
        out_dir: Output directory (created if missing)

    Returns:
        List[Path]: The files written

    Raises:
        OSError: If the directory or a file cannot be written
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []

    for seed in sorted(records):
        path = out / f"rounds_{seed}.csv"
        rounds_frame(records[seed], buckets).to_csv(path, index=False, float_format=FLOAT_FORMAT)
        written.append(path)

    report = RunReport(
        build_id=build_id(),
        config=config,
        aggregate=aggregate(summaries),
        summaries=list(summaries),
    )
    summary_path = out / "summary.json"
    payload = _clean_floats(report.model_dump(mode="json"))
    summary_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(summary_path)

    heatmap_path = out / "heatmap.csv"
    heatmap.to_csv(heatmap_path, index=False, float_format=FLOAT_FORMAT)
    written.append(heatmap_path)

    for path in written:
        logger.info(f"Wrote {path}")
    return written


def load_report(path: Union[str, Path]) -> RunReport:
    """Parse a summary.json written by ``emit_outputs``."""
    return RunReport.model_validate_json(Path(path).read_text(encoding="utf-8"))
