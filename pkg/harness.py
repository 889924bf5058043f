"""
Experiment Harness

Runs the online estimator and its contenders on one shared stream per seed,
trains an importance-weighted classifier per method every round, and
collects the per-round records, per-seed summaries and diagnostics.

Round protocol for every seed:
    1. draw (or read) the round's batch
    2. each method produces its ratio model from information before the batch
    3. each method retrains its classifier on the reweighted offline set
    4. every classifier is scored on the batch
    5. the online estimators consume the batch
"""

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterator, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from bregman import (
    DivergenceSpec,
    RatioModel,
    empirical_grad,
    empirical_loss,
    estimation_error,
    functional_loss,
    ratio_eval,
)
from core import (
    ConfigError,
    DomainError,
    Hyperparams,
    LabeledSet,
    ShiftTrackerError,
    UnlabeledBatch,
    derive_stream,
    validate_hyperparams,
)
from data_sources.csv_stream import load_csv_stream
from data_sources.synthetic import (
    GaussianMixtureSpec,
    ShiftSchedule,
    alpha_path,
    component_log_densities,
    mixture_logpdf,
    ratio_bound_diagnostics,
    sample_batch,
    true_ratio,
    variation_V,
)
from learners.baselines import kliep_fit, olre_estimator, ulsif_fit
from learners.ensemble import OnlineRatioEstimator, RoundDiagnostics
from predictor import (
    FlattenSpec,
    LinearClassifier,
    SolverConfig,
    error_rate,
    fix_train,
    iwerm_train,
    prepare_weights,
)
from reports import METHOD_ORDER, Prop2Check, RegretReport, RoundRecord, Summary, bucket_column, mean_errors
from tools.solvers import minimize_in_ball

logger = logging.getLogger(__name__)

PROP2_SLACK = 1.1
# Share of clipped weights above which a round is reported.
CLIP_WARN_FRACTION = 0.05
HYPER_KEYS = (
    "dim",
    "radius",
    "feature_bound",
    "gamma_ons",
    "lambda_ons",
    "ratio_cap",
    "horizon",
    "n_offline",
    "n_online",
)

DEFAULTS: Dict[str, Any] = {
    "dim": 5,
    "horizon": 10000,
    "n_offline": 1000,
    "n_online": 1,
    "pattern": "squ",
    "alpha0": 0.9,
    "ber_mode": "flip",
    "methods": ",".join(METHOD_ORDER),
    "seeds": "0,1,2,3,4",
    "flatten": "identity",
    "divergence": "LR",
    "flatten_exponent": 1.0,
    "min_len": 4,
    "ulsif_reg": 0.1,
    "kliep_steps": 100,
    "kliep_step_size": 1.0,
    "clip_sigmas": 6.0,
    "cov_scale": 2.0,
    "workers": 1,
    "out": "results",
    "solver_max_iter": 200,
    "solver_tol": 1e-6,
    "fit_intercept": True,
    "prop2_mc": 10000,
    "regret_cadence": 50,
}

OPTIONAL_KEYS = (
    "feature_bound",
    "radius",
    "gamma_ons",
    "lambda_ons",
    "ratio_cap",
    "period",
    "keep_prob",
    "label_radius",
    "classifier_radius",
    "heatmap_window",
    "offline_csv",
    "stream_csv",
)


class Method(str, Enum):
    ACCOUS = "accous"
    OLRE = "olre"
    FIX = "fix"
    ULSIF = "ulsif"
    KLIEP = "kliep"


def _split_list(value: Any) -> List[str]:
    if isinstance(value, (list, tuple)):
        return [str(v).strip() for v in value if str(v).strip()]
    return [part.strip() for part in str(value).split(",") if part.strip()]


class ExperimentConfig(BaseModel):
    """
    Everything a run needs, validated and frozen.

    A run is synthetic unless both CSV paths are set.
    """

    model_config = ConfigDict(frozen=True)

    hyper: Hyperparams
    divergence: DivergenceSpec = Field(default_factory=DivergenceSpec)
    mixture: GaussianMixtureSpec = Field(default_factory=GaussianMixtureSpec)
    schedule: Optional[ShiftSchedule] = None
    offline_csv: Optional[str] = None
    stream_csv: Optional[str] = None
    methods: Tuple[Method, ...] = tuple(Method)
    flatten: FlattenSpec = Field(default_factory=FlattenSpec)
    seeds: Tuple[int, ...] = (0,)
    out: str = "results"
    min_len: int = Field(default=4, ge=1)
    ulsif_reg: float = Field(default=0.1, gt=0)
    kliep_steps: int = Field(default=100, ge=1)
    kliep_step_size: float = Field(default=1.0, gt=0)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    workers: int = Field(default=1, ge=1)
    heatmap_window: Optional[int] = Field(default=None, ge=1)
    prop2_mc: int = Field(default=10000, ge=0)
    regret_cadence: int = Field(default=50, ge=1)

    @model_validator(mode="after")
    def _consistent(self) -> "ExperimentConfig":
        if not self.methods:
            raise ValueError("method list must be nonempty")
        if len(set(self.methods)) != len(self.methods):
            raise ValueError("methods must be distinct")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be a nonempty list of distinct integers")
        if (self.offline_csv is None) != (self.stream_csv is None):
            raise ValueError("offline_csv and stream_csv must be given together")
        if self.is_synthetic and self.schedule is None:
            raise ValueError("synthetic runs need a shift schedule")
        return self

    @property
    def is_synthetic(self) -> bool:
        return self.offline_csv is None

    def has(self, method: Method) -> bool:
        return method in self.methods

    def to_flat(self) -> Dict[str, Any]:
        """The resolved configuration as flat key=value pairs."""
        flat: Dict[str, Any] = {key: getattr(self.hyper, key) for key in HYPER_KEYS}
        flat.update(
            divergence=self.divergence.kind.value,
            flatten_exponent=self.divergence.flatten_exponent,
            clip_sigmas=self.mixture.clip_sigmas,
            cov_scale=self.mixture.cov_scale,
            label_radius=self.mixture.label_radius,
            methods=",".join(m.value for m in self.methods),
            seeds=",".join(str(s) for s in self.seeds),
            flatten=str(self.flatten),
            out=self.out,
            min_len=self.min_len,
            ulsif_reg=self.ulsif_reg,
            kliep_steps=self.kliep_steps,
            kliep_step_size=self.kliep_step_size,
            solver_max_iter=self.solver.max_iter,
            solver_tol=self.solver.tol,
            classifier_radius=self.solver.radius,
            fit_intercept=self.solver.fit_intercept,
            workers=self.workers,
            heatmap_window=self.heatmap_window,
            prop2_mc=self.prop2_mc,
            regret_cadence=self.regret_cadence,
            offline_csv=self.offline_csv,
            stream_csv=self.stream_csv,
        )
        if self.schedule is not None:
            flat.update(
                pattern=self.schedule.pattern.value,
                period=self.schedule.period,
                keep_prob=self.schedule.keep_prob,
                ber_mode=self.schedule.ber_mode.value,
                alpha0=self.schedule.alpha0,
            )
        return flat


def build_config(values: Mapping[str, Any]) -> ExperimentConfig:
    """
    Build an ExperimentConfig from flat key=value pairs over the defaults.

    String values (from a config file or the command line) are coerced by
    the models. For synthetic runs a missing ``feature_bound`` becomes the
    clipping radius of the mixture.

    Raises:
        ConfigError: If any value is invalid or inconsistent
    """
    unknown = sorted(set(values) - set(DEFAULTS) - set(OPTIONAL_KEYS))
    if unknown:
        raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")
    flat = {**DEFAULTS, **{k: v for k, v in values.items() if v is not None and v != ""}}
    try:
        mixture = GaussianMixtureSpec(
            dim=flat["dim"],
            cov_scale=flat["cov_scale"],
            clip_sigmas=flat["clip_sigmas"],
            label_radius=flat.get("label_radius"),
        )
        synthetic = flat.get("offline_csv") is None
        raw_hyper = {key: flat[key] for key in HYPER_KEYS if key in flat}
        if synthetic:
            bound = float(raw_hyper.get("feature_bound", mixture.clip_radius))
            if bound < mixture.clip_radius:
                raise ConfigError(
                    f"feature_bound {bound} is below the synthetic clipping radius {mixture.clip_radius:.6g}"
                )
            raw_hyper["feature_bound"] = bound
        else:
            raw_hyper.setdefault("feature_bound", 1.0)
        hyper = validate_hyperparams(raw_hyper)

        schedule = None
        if synthetic:
            schedule = ShiftSchedule(
                pattern=flat["pattern"],
                horizon=hyper.horizon,
                period=flat.get("period"),
                keep_prob=flat.get("keep_prob"),
                ber_mode=str(flat["ber_mode"]).lower(),
                alpha0=flat["alpha0"],
            )
        solver = SolverConfig(
            max_iter=flat["solver_max_iter"],
            tol=flat["solver_tol"],
            radius=flat.get("classifier_radius"),
            fit_intercept=flat["fit_intercept"],
        )
        cfg = ExperimentConfig(
            hyper=hyper,
            divergence=DivergenceSpec(
                kind=str(flat["divergence"]).upper(),
                flatten_exponent=flat["flatten_exponent"],
            ),
            mixture=mixture,
            schedule=schedule,
            offline_csv=flat.get("offline_csv"),
            stream_csv=flat.get("stream_csv"),
            methods=tuple(Method(m.lower()) for m in _split_list(flat["methods"])),
            flatten=FlattenSpec.parse(str(flat["flatten"])),
            seeds=tuple(int(s) for s in _split_list(flat["seeds"])),
            out=str(flat["out"]),
            min_len=flat["min_len"],
            ulsif_reg=flat["ulsif_reg"],
            kliep_steps=flat["kliep_steps"],
            kliep_step_size=flat["kliep_step_size"],
            solver=solver,
            workers=flat["workers"],
            heatmap_window=flat.get("heatmap_window"),
            prop2_mc=flat["prop2_mc"],
            regret_cadence=flat["regret_cadence"],
        )
    except ValidationError as e:
        raise ConfigError(f"Invalid experiment configuration: {e}") from e
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"Invalid experiment configuration: {e}") from e
    return cfg


@dataclass
class StreamData:
    """The offline set and round batches of one seed, plus the α path when known."""

    offline: LabeledSet
    batches: Iterator[UnlabeledBatch]
    horizon: int
    alphas: Optional[np.ndarray] = None


@dataclass
class SeedResult:
    """
    Everything one seed produced.

    ``thetas`` holds θ̂_t per online method and ``offline_xs`` the offline
    features, which the estimation-error bound and regret diagnostics need after the run.
    """

    seed: int
    records: List[RoundRecord]
    summary: Summary
    buckets: List[int] = field(default_factory=list)
    thetas: Dict[str, np.ndarray] = field(default_factory=dict)
    alphas: Optional[np.ndarray] = None
    offline_xs: Optional[np.ndarray] = None


def _synthetic_stream(cfg: ExperimentConfig, seed: int, blind: bool) -> StreamData:
    schedule = cfg.schedule
    assert schedule is not None
    h = cfg.hyper
    alphas = alpha_path(schedule, derive_stream(seed, "schedule"))
    offline = sample_batch(cfg.mixture, schedule.alpha0, h.n_offline, derive_stream(seed, "offline"))
    stream_rng = derive_stream(seed, "stream")

    def batches() -> Iterator[UnlabeledBatch]:
        for t in range(1, schedule.horizon + 1):
            drawn = sample_batch(cfg.mixture, float(alphas[t - 1]), h.n_online, stream_rng)
            yield UnlabeledBatch(round=t, xs=drawn.xs, hidden_ys=None if blind else drawn.ys)

    return StreamData(offline=offline, batches=batches(), horizon=schedule.horizon, alphas=alphas)


def _csv_stream(cfg: ExperimentConfig, blind: bool) -> StreamData:
    assert cfg.offline_csv is not None and cfg.stream_csv is not None
    loaded = load_csv_stream(cfg.offline_csv, cfg.stream_csv, cfg.hyper.feature_bound)
    batches = (b.blinded() if blind else b for b in loaded.batches)
    return StreamData(offline=loaded.offline, batches=iter(batches), horizon=loaded.horizon)


def _bucket_lengths(cfg: ExperimentConfig, horizon: int) -> List[int]:
    if not cfg.has(Method.ACCOUS):
        return [horizon] if cfg.has(Method.OLRE) else []
    lengths, length = [], 1
    while length <= horizon:
        if length >= cfg.min_len:
            lengths.append(length)
        length *= 2
    return lengths


def bucket_masses(diagnostics: RoundDiagnostics) -> Dict[int, float]:
    """Sum the combination weights of the active learners by interval length."""
    masses: Dict[int, float] = {}
    for key, weight in diagnostics.weights.items():
        length = diagnostics.lengths[key]
        masses[length] = masses.get(length, 0.0) + weight
    return masses


def run_seed(cfg: ExperimentConfig, seed: int, blind: bool = False) -> SeedResult:
    """
    Run every configured method on one seed's stream.

    Args:
        cfg: Validated experiment configuration
        seed: Master seed for every random stream of the run
        blind: Strip the evaluation labels from every batch; no training
            value may change, only the error columns disappear

    Returns:
        SeedResult: Records, summary and the estimates the diagnostics need.
        A ShiftTrackerError inside the run marks the seed as failed instead
        of propagating.
    """
    started = time.perf_counter()
    logger.info(f"Seed {seed}: starting run")
    try:
        result = _run_seed(cfg, seed, blind)
    except ShiftTrackerError as e:
        logger.error(f"Seed {seed} aborted: {e}")
        summary = Summary(seed=seed, failed=True, error=str(e), wall_time=time.perf_counter() - started)
        return SeedResult(seed=seed, records=[], summary=summary)
    result.summary.wall_time = time.perf_counter() - started
    logger.info(f"Seed {seed}: done in {result.summary.wall_time:.1f}s, mean errors {result.summary.mean_error}")
    return result


def _run_seed(cfg: ExperimentConfig, seed: int, blind: bool) -> SeedResult:
    data = _synthetic_stream(cfg, seed, blind) if cfg.is_synthetic else _csv_stream(cfg, blind)
    h = cfg.hyper
    data_dim = data.offline.xs.shape[1]
    if h.horizon != data.horizon or h.dim != data_dim:
        h = validate_hyperparams({**h.model_dump(), "horizon": data.horizon, "dim": data_dim})
    spec = cfg.divergence
    offline = data.offline
    x0 = offline.xs

    estimators: Dict[str, OnlineRatioEstimator] = {}
    if cfg.has(Method.ACCOUS):
        estimators[Method.ACCOUS.value] = OnlineRatioEstimator(h, spec, min_len=cfg.min_len)
    if cfg.has(Method.OLRE):
        estimators[Method.OLRE.value] = olre_estimator(h, data.horizon, spec)
    bucket_source = Method.ACCOUS.value if Method.ACCOUS.value in estimators else Method.OLRE.value

    fixed = fix_train(offline, cfg.solver) if cfg.has(Method.FIX) else None
    classifiers: Dict[str, Optional[LinearClassifier]] = {m.value: None for m in cfg.methods}
    thetas: Dict[str, List[np.ndarray]] = {name: [] for name in estimators}
    records: List[RoundRecord] = []
    est_errors: List[float] = []

    for batch in data.batches:
        t = batch.round
        alpha = float(data.alphas[t - 1]) if data.alphas is not None else None
        unlabeled = batch.blinded()

        models: Dict[str, RatioModel] = {}
        diagnostics: Dict[str, RoundDiagnostics] = {}
        for name, estimator in estimators.items():
            theta_hat, diag = estimator.step(x0, unlabeled)
            models[name] = RatioModel(spec.link, theta_hat, h.S)
            diagnostics[name] = diag
            thetas[name].append(theta_hat)
        if cfg.has(Method.ULSIF):
            models[Method.ULSIF.value] = ulsif_fit(x0, unlabeled.xs, cfg.ulsif_reg, h.S)
        if cfg.has(Method.KLIEP):
            models[Method.KLIEP.value] = kliep_fit(
                x0, unlabeled.xs, h.S, steps=cfg.kliep_steps, step_size=cfg.kliep_step_size
            )

        clip_counts: Dict[str, int] = {}
        for name, model in models.items():
            prepared = prepare_weights(model, cfg.flatten, x0, h.ratio_cap)
            clip_counts[name] = prepared.clip_count
            if prepared.clip_count > CLIP_WARN_FRACTION * len(offline):
                logger.warning(f"Round {t}: {name} clipped {prepared.clip_count} of {len(offline)} weights")
            weights = prepared.weights
            if not np.any(weights):
                logger.warning(f"Round {t}: every {name} weight is zero, training with unit weights")
                weights = np.ones(len(offline))
            classifiers[name] = iwerm_train(offline, weights, classifiers[name], cfg.solver)
        clip_count = clip_counts.get(bucket_source, next(iter(clip_counts.values()), 0))
        if fixed is not None:
            classifiers[Method.FIX.value] = fixed

        errors: Dict[str, Optional[float]] = {}
        for name, clf in classifiers.items():
            errors[name] = error_rate(clf, batch) if clf is not None and batch.hidden_ys is not None else None

        loss_hat = est_err = None
        masses: Dict[int, float] = {}
        if bucket_source in diagnostics:
            diag = diagnostics[bucket_source]
            loss_hat = diag.loss_hat
            masses = bucket_masses(diag)
            if alpha is not None and cfg.schedule is not None:
                schedule = cfg.schedule
                est_err = estimation_error(
                    models[bucket_source],
                    lambda xs, a=alpha: true_ratio(cfg.mixture, a, schedule.alpha0, xs),
                    x0,
                )
                est_errors.append(est_err)
        records.append(
            RoundRecord(
                t=t,
                alpha=alpha,
                errors=errors,
                loss_hat=loss_hat,
                est_err=est_err,
                clip_count=clip_count,
                bucket_mass=masses,
            )
        )

    result = SeedResult(
        seed=seed,
        records=records,
        summary=Summary(seed=seed, mean_error=mean_errors(records)),
        buckets=_bucket_lengths(cfg, data.horizon),
        thetas={name: np.array(values) for name, values in thetas.items()},
        alphas=data.alphas,
        offline_xs=x0,
    )
    _summarize(cfg, h, result, estimators, est_errors, seed)
    return result


def _summarize(
    cfg: ExperimentConfig,
    h: Hyperparams,
    result: SeedResult,
    estimators: Dict[str, OnlineRatioEstimator],
    est_errors: List[float],
    seed: int,
) -> None:
    summary = result.summary
    main = estimators.get(Method.ACCOUS.value) or estimators.get(Method.OLRE.value)
    if main is not None:
        summary.projection_fraction = main.projection_fraction()
        summary.max_inverse_drift = main.max_inverse_drift
        logger.info(
            f"Seed {seed}: projection active on {summary.projection_fraction:.1%} of ONS steps, "
            f"max inverse drift {summary.max_inverse_drift:.3g}"
        )
    if est_errors:
        summary.cumulative_est_error = float(np.sum(est_errors))
    if not cfg.is_synthetic or result.alphas is None or cfg.schedule is None:
        return
    summary.variation = variation_V(
        cfg.schedule, cfg.mixture, max(cfg.prop2_mc, 1000), derive_stream(seed, "variation"), path=result.alphas
    )
    summary.ratio_bound_empirical, summary.ratio_bound_analytic = ratio_bound_diagnostics(
        cfg.mixture, result.alphas, cfg.schedule.alpha0, derive_stream(seed, "ratio-bound")
    )
    if cfg.prop2_mc > 0 and main is not None:
        summary.prop2 = check_prop2(result, cfg, h)


def _resolve_mu(spec: DivergenceSpec, h: Hyperparams, mu: Optional[float]) -> float:
    modulus = spec.strong_convexity(h.beta)
    if mu is None:
        return modulus
    if mu > modulus:
        raise ConfigError(f"mu={mu} exceeds the strong-convexity modulus {modulus:.6g} of {spec.kind.value}")
    return mu


def check_prop2(
    result: SeedResult,
    cfg: ExperimentConfig,
    h: Optional[Hyperparams] = None,
    mu: Optional[float] = None,
    method: Optional[str] = None,
) -> Prop2Check:
    """
    Check Σ_t E_{D₀}|r̂_t − r*_t| ≤ √((2T/μ)·Σ_t [L_t(r̂_t) − L_t(r*_t)]).

    Expectations over D₀ use a fresh sample of ``prop2_mc`` points; those
    over D_t mix fixed samples of the two components with weight α_t. L_t is
    the Bregman matching loss of the run's divergence. The check holds when
    the left side is at most 1.1 times the right side.

    Args:
        result: A finished synthetic seed
        cfg: Its configuration
        h: Hyperparameters of the run (defaults to cfg.hyper)
        mu: Strong-convexity modulus; defaults to the divergence's own and
            may not exceed it
        method: Online method whose estimates are checked

    Raises:
        DomainError: If the run has no true ratio (CSV data) or no estimates
        ConfigError: If mu exceeds the divergence's modulus
    """
    h = h or cfg.hyper
    if not cfg.is_synthetic or result.alphas is None or cfg.schedule is None:
        raise DomainError("The estimation-error bound check needs a synthetic run with known true ratios")
    method = method or (Method.ACCOUS.value if Method.ACCOUS.value in result.thetas else Method.OLRE.value)
    if method not in result.thetas:
        raise DomainError(f"No online estimates recorded for {method}")
    spec = cfg.divergence
    modulus = _resolve_mu(spec, h, mu)
    n_mc = max(cfg.prop2_mc, 1)
    schedule = cfg.schedule

    rng = derive_stream(result.seed, "prop2")
    x_base = sample_batch(cfg.mixture, schedule.alpha0, n_mc, rng).xs
    x_first = sample_batch(cfg.mixture, 0.0, n_mc, rng).xs
    x_second = sample_batch(cfg.mixture, 1.0, n_mc, rng).xs
    logs = [component_log_densities(cfg.mixture, xs) for xs in (x_base, x_first, x_second)]

    base_logs = [mixture_logpdf(log1, log2, schedule.alpha0) for log1, log2 in logs]

    def star(index: int, alpha: float) -> np.ndarray:
        log1, log2 = logs[index]
        return np.exp(mixture_logpdf(log1, log2, alpha) - base_logs[index])

    thetas = result.thetas[method]
    lhs = 0.0
    excess = 0.0
    for t, theta in enumerate(thetas, start=1):
        alpha = float(result.alphas[t - 1])
        model = RatioModel(spec.link, theta, h.S)
        r_hat = [np.asarray(ratio_eval(model, xs)) for xs in (x_base, x_first, x_second)]
        r_star = [star(i, alpha) for i in range(3)]
        lhs += float(np.mean(np.abs(r_hat[0] - r_star[0])))
        loss_hat = (1 - alpha) * functional_loss(spec, r_hat[0], r_hat[1]) + alpha * functional_loss(
            spec, r_hat[0], r_hat[2]
        )
        loss_star = (1 - alpha) * functional_loss(spec, r_star[0], r_star[1]) + alpha * functional_loss(
            spec, r_star[0], r_star[2]
        )
        excess += loss_hat - loss_star

    horizon = len(thetas)
    rhs = math.sqrt(2.0 * horizon / modulus * max(0.0, excess))
    holds = lhs <= PROP2_SLACK * rhs
    logger.info(f"Estimation-error bound ({method}): lhs={lhs:.6g}, rhs={rhs:.6g}, holds={holds}")
    return Prop2Check(lhs=lhs, rhs=rhs, holds=holds, mu=modulus)


def regret_diagnostics(result: SeedResult, cfg: ExperimentConfig, h: Optional[Hyperparams] = None) -> RegretReport:
    """
    Dynamic regret of the online estimates against the best fixed-round parameter.

    At every ``regret_cadence``-th round the comparator θ*_t minimizes the
    Monte Carlo expected loss over the ball; the regret sums
    L̃_t(θ̂_t) − L̃_t(θ*_t) over those rounds. The realizability gap is the
    mean over the same rounds of E_{S₀}|h(x, θ*_t) − r*_t(x)|.

    Raises:
        DomainError: If the run is not synthetic or has no online estimates
    """
    h = h or cfg.hyper
    if not cfg.is_synthetic or result.alphas is None or result.offline_xs is None or cfg.schedule is None:
        raise DomainError("Regret diagnostics need a synthetic run")
    if not result.thetas:
        raise DomainError("Regret diagnostics need an online method")
    spec = cfg.divergence
    x0 = result.offline_xs
    n_mc = max(cfg.prop2_mc, 1)
    schedule = cfg.schedule
    horizon = len(result.alphas)
    rounds = list(range(cfg.regret_cadence, horizon + 1, cfg.regret_cadence)) or [horizon]
    rng = derive_stream(result.seed, "regret")

    regret = {name: 0.0 for name in result.thetas}
    gaps: List[float] = []
    for t in rounds:
        alpha = float(result.alphas[t - 1])
        xt = sample_batch(cfg.mixture, alpha, n_mc, rng).xs

        def loss(theta: np.ndarray) -> float:
            return empirical_loss(spec, RatioModel(spec.link, theta, h.S), x0, xt)

        def grad(theta: np.ndarray) -> np.ndarray:
            return empirical_grad(spec, RatioModel(spec.link, theta, h.S), x0, xt)

        best = minimize_in_ball(loss, grad, np.zeros(h.dim), h.S, max_iter=cfg.solver.max_iter, tol=cfg.solver.tol)
        for name, thetas in result.thetas.items():
            regret[name] += loss(thetas[t - 1]) - best.objective
        comparator = RatioModel(spec.link, best.x, h.S)
        gaps.append(
            estimation_error(comparator, lambda xs, a=alpha: true_ratio(cfg.mixture, a, schedule.alpha0, xs), x0)
        )
    report = RegretReport(rounds=rounds, regret=regret, realizability_gap=float(np.mean(gaps)))
    logger.info(f"Seed {result.seed}: dynamic regret {report.regret}, realizability gap {report.realizability_gap:.4g}")
    return report


def weight_heatmap(records: List[RoundRecord], window: int, buckets: Optional[List[int]] = None) -> pd.DataFrame:
    """
    Average combination-weight mass per interval length over windows of rounds.

    Rounds without active learners are skipped. Each row holds the window's
    first and last round and one column per length bucket; the columns of a
    row sum to 1.

    Raises:
        DomainError: If window < 1
    """
    if window < 1:
        raise DomainError(f"Heatmap window must be >= 1, got {window}")
    if buckets is None:
        buckets = sorted({length for r in records for length in r.bucket_mass})
    columns = ["window_start", "window_end"] + [bucket_column(b) for b in buckets]
    rows = []
    for start in range(0, len(records), window):
        chunk = [r for r in records[start : start + window] if r.bucket_mass]
        if not chunk:
            continue
        last = records[min(start + window, len(records)) - 1]
        row: Dict[str, Any] = {"window_start": records[start].t, "window_end": last.t}
        for length in buckets:
            row[bucket_column(length)] = float(np.mean([r.bucket_mass.get(length, 0.0) for r in chunk]))
        rows.append(row)
    return pd.DataFrame(rows, columns=columns)


def heatmap_window(cfg: ExperimentConfig, horizon: int) -> int:
    if cfg.heatmap_window is not None:
        return cfg.heatmap_window
    if cfg.schedule is not None:
        return cfg.schedule.M
    return max(1, math.ceil(math.sqrt(horizon)))


def dominant_bucket(records: List[RoundRecord]) -> Optional[int]:
    """Interval length with the largest time-averaged weight mass."""
    totals: Dict[int, float] = {}
    for r in records:
        for length, mass in r.bucket_mass.items():
            totals[length] = totals.get(length, 0.0) + mass
    return max(totals, key=lambda k: totals[k]) if totals else None


@dataclass
class ExperimentResult:
    """All seeds of a run, in seed order."""

    results: List[SeedResult]

    @property
    def summaries(self) -> List[Summary]:
        return [r.summary for r in self.results]

    @property
    def any_failed(self) -> bool:
        return any(r.summary.failed for r in self.results)

    def heatmap(self, cfg: ExperimentConfig) -> pd.DataFrame:
        frames = []
        for r in self.results:
            if not r.records:
                continue
            frame = weight_heatmap(r.records, heatmap_window(cfg, len(r.records)), r.buckets)
            frame.insert(0, "seed", r.seed)
            frames.append(frame)
        return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=["seed"])

    @property
    def buckets(self) -> List[int]:
        lengths = {b for r in self.results for b in r.buckets}
        return sorted(lengths)


def run_experiment(cfg: ExperimentConfig, blind: bool = False) -> ExperimentResult:
    """
    Run every seed of the configuration.

    With ``workers`` > 1 the seeds run in separate processes; results are
    always returned in seed order.
    """
    logger.info(f"Running {len(cfg.seeds)} seeds with methods {[m.value for m in cfg.methods]}")
    if cfg.workers > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run_seed, [cfg] * len(cfg.seeds), cfg.seeds, [blind] * len(cfg.seeds)))
    else:
        results = [run_seed(cfg, seed, blind) for seed in cfg.seeds]
    return ExperimentResult(results=results)
