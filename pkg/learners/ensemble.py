"""
Online Ensemble Density-Ratio Estimator

A two-layer estimator that tracks a drifting density ratio. Base learners are
ONS instances living on the intervals of a geometric covering of the
horizon, so at any round there is one learner per dyadic history length. A
second-order expert combiner (Adapt-ML-Prod) mixes their parameters into the
round's estimate θ̂_t.

Round protocol (``ensemble_round``):
    1. advance the round, spawn the learners whose interval starts now
    2. emit θ̂_t = Σ p_i θ_i before the round's batch is looked at
    3. update the combiner with the gradient at θ̂_t
    4. step every active learner with the gradient at its own θ_i
    5. retire learners whose interval ends now
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from bregman import DivergenceSpec, RatioModel, empirical_grad, empirical_loss
from core import ConfigError, DomainError, Hyperparams, UnlabeledBatch
from learners.ons import OnsState, ons_init, ons_step

logger = logging.getLogger(__name__)

EPS_FLOOR = 1e-8
DEFAULT_MIN_LEN = 4

IntervalId = Tuple[int, int]


@dataclass(frozen=True)
class CoveringInterval:
    """
    One interval [start, end] of the covering, of length 2^level.

    ``id`` is (level, start): stable across rounds and totally ordered.
    """

    start: int
    end: int
    level: int

    @property
    def id(self) -> IntervalId:
        return (self.level, self.start)

    @property
    def length(self) -> int:
        return self.end - self.start + 1


@dataclass
class CoveringSnapshot:
    """Intervals starting, active and retiring at one round."""

    starting: List[CoveringInterval]
    active: List[CoveringInterval]
    retiring: List[CoveringInterval]


def covering_at(t: int, T: int, min_len: int = DEFAULT_MIN_LEN) -> CoveringSnapshot:
    """
    Enumerate the geometric-covering intervals that contain round t.

    Level k contributes [i·2^k, (i+1)·2^k − 1] with i = ⌊t/2^k⌋ ≥ 1, so only
    levels with 2^k ≤ t appear; levels shorter than ``min_len`` are skipped.

    Args:
        t: Current round (1-based)
        T: Horizon
        min_len: Minimum interval length kept (1 keeps every level)

    Returns:
        CoveringSnapshot: Intervals containing t, split by start/end at t

    Raises:
        DomainError: If t lies outside [1, T]

    Example:
        >>> [iv.length for iv in covering_at(4, 8, min_len=1).active]
        [1, 2, 4]
    """
    if not 1 <= t <= T:
        raise DomainError(f"Round {t} is outside [1, {T}]")
    active: List[CoveringInterval] = []
    level = 0
    while (1 << level) <= t:
        length = 1 << level
        if length >= min_len:
            start = (t // length) * length
            active.append(CoveringInterval(start=start, end=start + length - 1, level=level))
        level += 1
    return CoveringSnapshot(
        starting=[iv for iv in active if iv.start == t],
        active=active,
        retiring=[iv for iv in active if iv.end == t],
    )


def covering_size(T: int, min_len: int = DEFAULT_MIN_LEN) -> int:
    """Exact number K of covering intervals that start within [1, T]."""
    total = 0
    level = 0
    while (1 << level) <= T:
        if (1 << level) >= min_len:
            total += T // (1 << level)
        level += 1
    return total


class GeometricCovering:
    """Dyadic covering schedule of the horizon."""

    def __init__(self, horizon: int, min_len: int = DEFAULT_MIN_LEN):
        if min_len < 1:
            raise ConfigError(f"min_len must be >= 1, got {min_len}")
        self.horizon = horizon
        self.min_len = min_len
        self.size = covering_size(horizon, min_len)

    def at(self, t: int) -> CoveringSnapshot:
        return covering_at(t, self.horizon, self.min_len)


class SingleInterval:
    """A schedule with one interval [1, T]: a lone ONS over all history."""

    def __init__(self, horizon: int):
        self.horizon = horizon
        self.size = 1
        self._interval = CoveringInterval(start=1, end=horizon, level=-1)

    def at(self, t: int) -> CoveringSnapshot:
        if not 1 <= t <= self.horizon:
            raise DomainError(f"Round {t} is outside [1, {self.horizon}]")
        iv = self._interval
        return CoveringSnapshot(
            starting=[iv] if t == 1 else [],
            active=[iv],
            retiring=[iv] if t == self.horizon else [],
        )


@dataclass
class MetaEntry:
    """
    Combiner bookkeeping for one active base learner.

    The potential v is stored as log v so that it cannot underflow over long
    horizons.
    """

    interval: CoveringInterval
    log_v: float
    eps: float
    sum_m_sq: float
    learner: OnsState

    @property
    def v(self) -> float:
        return math.exp(self.log_v)


@dataclass
class EnsembleState:
    """
    Full state of the ensemble estimator.

    Attributes:
        schedule: GeometricCovering or SingleInterval
        active (Dict[IntervalId, MetaEntry]): Entries keyed by interval id
        K (int): Total interval count of the schedule
        combined (np.ndarray): Last emitted estimate θ̂_t
        weights (Dict[IntervalId, float]): Combination weights used for θ̂_t
        round (int): Last completed round
        retired_steps (int): ONS steps taken by learners already retired
        retired_projections (int): Active projections among those steps
        max_inverse_drift (float): Largest inverse drift seen at any re-factorization
    """

    schedule: object
    active: Dict[IntervalId, MetaEntry]
    K: int
    combined: np.ndarray
    weights: Dict[IntervalId, float] = field(default_factory=dict)
    round: int = 0
    retired_steps: int = 0
    retired_projections: int = 0
    max_inverse_drift: float = 0.0


@dataclass
class RoundDiagnostics:
    """What the estimator reports for one round."""

    t: int
    theta: np.ndarray
    loss_hat: float
    weights: Dict[IntervalId, float]
    lengths: Dict[IntervalId, int]
    n_active: int


def init_state(schedule: object, dim: int) -> EnsembleState:
    return EnsembleState(
        schedule=schedule,
        active={},
        K=int(getattr(schedule, "size")),
        combined=np.zeros(dim),
    )


def spawn_entry(state: EnsembleState, interval: CoveringInterval, h: Hyperparams) -> MetaEntry:
    """
    Start a base learner and its combiner bookkeeping for a new interval.

    v starts at 1/K and ε at min{1/2, ln K}, floored at EPS_FLOOR so that a
    single-interval schedule (K = 1) stays well defined.

    Raises:
        DomainError: If the interval already has an entry
    """
    if interval.id in state.active:
        raise DomainError(f"Interval {interval.id} already has a base learner")
    eps = max(EPS_FLOOR, min(0.5, math.log(state.K)))
    entry = MetaEntry(
        interval=interval,
        log_v=-math.log(state.K),
        eps=eps,
        sum_m_sq=0.0,
        learner=ons_init(interval, h),
    )
    state.active[interval.id] = entry
    logger.debug(f"Spawned learner on [{interval.start}, {interval.end}]")
    return entry


def _sorted_entries(state: EnsembleState) -> List[MetaEntry]:
    return [state.active[key] for key in sorted(state.active)]


def combination_weights(state: EnsembleState) -> Dict[IntervalId, float]:
    """
    Weights p_i ∝ ε_i·v_i over the active entries, normalized in log space.

    Raises:
        DomainError: If there is no active entry or every ε·v vanishes
    """
    entries = _sorted_entries(state)
    if not entries:
        raise DomainError("No active base learner to combine")
    logits = np.array([math.log(e.eps) + e.log_v for e in entries])
    if not np.any(np.isfinite(logits)):
        raise DomainError("All combiner weights vanished")
    logits = logits - np.max(logits[np.isfinite(logits)])
    raw = np.exp(logits)
    total = float(raw.sum())
    if not total > 0.0:
        raise DomainError("All combiner weights vanished")
    probs = raw / total
    return {e.interval.id: float(p) for e, p in zip(entries, probs)}


def combine(state: EnsembleState) -> np.ndarray:
    """
    Combine the active learners' parameters into θ̂_t = Σ p_i θ_i.

    Returns:
        np.ndarray: The combined estimate (a convex combination of ball points)
    """
    weights = combination_weights(state)
    entries = _sorted_entries(state)
    thetas = np.stack([e.learner.theta for e in entries])
    probs = np.array([weights[e.interval.id] for e in entries])
    state.weights = weights
    state.combined = probs @ thetas if len(entries) > 1 else thetas[0].copy()
    return state.combined


def meta_update(state: EnsembleState, grad_at_combined: np.ndarray, h: Hyperparams) -> EnsembleState:
    """
    Update potentials and learning rates after observing the round's loss.

    For each active entry, with m = ⟨g, θ̂_t − θ_i⟩/(S·R) clamped to [−1, 1]:
        Σm² ← Σm² + m²
        ε′  = min{1/2, sqrt(ln K / (1 + Σm²))}
        log v ← (ε′/ε)·(log v + log(1 + ε·m))

    Args:
        state: Ensemble state after ``combine`` for this round
        grad_at_combined: Gradient of L̂_t at θ̂_t
        h: Hyperparameters (supply S and R)

    Raises:
        DomainError: If the gradient is non-finite
    """
    grad = np.asarray(grad_at_combined, dtype=float)
    if not np.all(np.isfinite(grad)):
        raise DomainError("Combiner received a non-finite gradient")
    scale = h.S * h.R
    log_k = math.log(state.K)
    for entry in _sorted_entries(state):
        m = float(grad @ (state.combined - entry.learner.theta)) / scale
        m = min(1.0, max(-1.0, m))
        entry.sum_m_sq += m * m
        eps_old = max(entry.eps, EPS_FLOOR)
        eps_new = max(EPS_FLOOR, min(0.5, math.sqrt(log_k / (1.0 + entry.sum_m_sq))))
        entry.log_v = (eps_new / eps_old) * (entry.log_v + math.log1p(eps_old * m))
        entry.eps = eps_new
    return state


def ensemble_round(
    state: EnsembleState,
    offline: np.ndarray,
    batch: UnlabeledBatch,
    spec: DivergenceSpec,
    h: Hyperparams,
) -> Tuple[np.ndarray, RoundDiagnostics]:
    """
    Run one round of the estimator on a new unlabeled batch.

    θ̂_t is fixed before the batch enters any computation, so it only
    depends on rounds 1..t−1.

    Args:
        state: Ensemble state (updated in place)
        offline: Offline features S₀
        batch: The round's unlabeled batch; ``batch.round`` must be state.round + 1
        spec: Divergence choice for the loss
        h: Hyperparameters

    Returns:
        Tuple[np.ndarray, RoundDiagnostics]: θ̂_t and the round's diagnostics

    Raises:
        DomainError: If the batch arrives out of order
    """
    t = state.round + 1
    if batch.round != t:
        raise DomainError(f"Expected batch for round {t}, got round {batch.round}")
    state.round = t

    snapshot = state.schedule.at(t)  # type: ignore[attr-defined]
    for interval in snapshot.starting:
        spawn_entry(state, interval, h)

    link = spec.link
    if not state.active:
        state.combined = np.zeros(h.dim)
        state.weights = {}
        theta_hat = state.combined.copy()
        loss_hat = empirical_loss(spec, RatioModel(link, theta_hat, h.S), offline, batch.xs)
        return theta_hat, RoundDiagnostics(t, theta_hat, loss_hat, {}, {}, 0)

    theta_hat = combine(state).copy()
    combined_model = RatioModel(link, theta_hat, h.S)
    loss_hat = empirical_loss(spec, combined_model, offline, batch.xs)
    meta_update(state, empirical_grad(spec, combined_model, offline, batch.xs), h)

    for entry in _sorted_entries(state):
        own = RatioModel(link, entry.learner.theta, h.S)
        ons_step(entry.learner, empirical_grad(spec, own, offline, batch.xs))

    diagnostics = RoundDiagnostics(
        t=t,
        theta=theta_hat,
        loss_hat=loss_hat,
        weights=dict(state.weights),
        lengths={key: e.interval.length for key, e in state.active.items()},
        n_active=len(state.active),
    )
    for entry in state.active.values():
        state.max_inverse_drift = max(state.max_inverse_drift, entry.learner.inverse_drift)
    for interval in snapshot.retiring:
        retired = state.active.pop(interval.id, None)
        if retired is not None:
            state.retired_steps += retired.learner.steps
            state.retired_projections += retired.learner.projections
            logger.debug(f"Retired learner on [{interval.start}, {interval.end}]")
    return theta_hat, diagnostics


class OnlineRatioEstimator:
    """
    Streaming density-ratio estimator backed by the ensemble.

    Example:
        >>> est = OnlineRatioEstimator(h, DivergenceSpec(kind="LR"))
        >>> theta_hat, diag = est.step(offline_xs, batch)
    """

    def __init__(
        self,
        h: Hyperparams,
        spec: DivergenceSpec,
        schedule: Optional[object] = None,
        min_len: int = DEFAULT_MIN_LEN,
    ):
        self.h = h
        self.spec = spec
        self.state = init_state(schedule or GeometricCovering(h.horizon, min_len), h.dim)

    @property
    def round(self) -> int:
        return self.state.round

    def step(self, offline: np.ndarray, batch: UnlabeledBatch) -> Tuple[np.ndarray, RoundDiagnostics]:
        return ensemble_round(self.state, offline, batch, self.spec, self.h)

    def current_model(self) -> RatioModel:
        return RatioModel(self.spec.link, self.state.combined.copy(), self.h.S)

    def projection_fraction(self) -> float:
        """Fraction of base-learner steps whose projection was active."""
        active = self.state.active.values()
        steps = self.state.retired_steps + sum(e.learner.steps for e in active)
        hits = self.state.retired_projections + sum(e.learner.projections for e in active)
        return hits / steps if steps else 0.0

    @property
    def max_inverse_drift(self) -> float:
        return self.state.max_inverse_drift
