"""
Invariant Check Suites

Empirical checks of the numerical and statistical properties the estimator
relies on, grouped into the suites the command line exposes:

    props   gradients, projections, inverse updates, covering and simplex
            bookkeeping, and single-interval equivalence
    prop2   the cumulative estimation-error bound on full synthetic runs
    regret  dynamic regret diagnostics and the sublinear static regret of ONS

Each check returns a CheckResult; ``assert_all`` turns failures into an
InvariantViolation.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence

import numpy as np
import scipy.linalg
from scipy.optimize import check_grad

from bregman import DivergenceKind, DivergenceSpec, RatioModel, empirical_grad, empirical_loss
from core import Hyperparams, InvariantViolation, UnlabeledBatch, derive_stream, validate_hyperparams
from data_sources.synthetic import ShiftSchedule, alpha_path, sample_batch
from harness import ExperimentConfig, check_prop2, regret_diagnostics, run_experiment
from learners.baselines import olre_estimator
from learners.ensemble import OnlineRatioEstimator, covering_at
from learners.ons import ons_init, ons_step, proj_weighted_ball
from tools.solvers import minimize_in_ball

logger = logging.getLogger(__name__)

SUITES = ("props", "prop2", "regret")


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def assert_all(results: Sequence[CheckResult]) -> None:
    """Raise InvariantViolation naming every failed check."""
    failed = [r for r in results if not r.passed]
    if failed:
        raise InvariantViolation("; ".join(f"{r.name}: {r.detail}" for r in failed))


def _small_hyper(dim: int, horizon: int, radius: float = 1.0, gamma: float = 1.0) -> Hyperparams:
    return validate_hyperparams(
        {"dim": dim, "feature_bound": 1.0, "radius": radius, "gamma_ons": gamma, "horizon": horizon}
    )


def check_gradients(
    rng: np.random.Generator,
    n_draws: int = 100,
    tol: float = 1e-5,
    flatten_exponents: Sequence[float] = (0.5, 1.0),
) -> CheckResult:
    """Analytic loss gradients against finite differences for every divergence and flattening."""
    worst = 0.0
    specs = [DivergenceSpec(kind=kind, flatten_exponent=g) for kind in DivergenceKind for g in flatten_exponents]
    for spec in specs:
        for _ in range(n_draws):
            dim = int(rng.integers(1, 6))
            offline = rng.uniform(-1, 1, (20, dim)) / math.sqrt(dim)
            online = rng.uniform(-1, 1, (5, dim)) / math.sqrt(dim)
            theta0 = rng.uniform(-1, 1, dim) / math.sqrt(dim)

            def loss(theta: np.ndarray) -> float:
                return empirical_loss(spec, RatioModel(spec.link, theta, 10.0), offline, online)

            def grad(theta: np.ndarray) -> np.ndarray:
                return empirical_grad(spec, RatioModel(spec.link, theta, 10.0), offline, online)

            err = check_grad(loss, grad, theta0)
            scale = max(float(np.linalg.norm(grad(theta0))), 1e-2)
            worst = max(worst, err / scale)
    return CheckResult("gradient", worst <= tol, f"worst relative error {worst:.3g}")


def check_projection_kkt(rng: np.random.Generator, n_pairs: int = 500, tol: float = 1e-8) -> CheckResult:
    """Weighted projections land on the ball with A(θ′ − θ) parallel to θ."""
    failures = 0
    for _ in range(n_pairs):
        dim = int(rng.integers(1, 7))
        factor = rng.standard_normal((dim, dim))
        A = factor @ factor.T + 0.1 * np.eye(dim)
        theta_prime = 3.0 * rng.standard_normal(dim)
        theta = proj_weighted_ball(A, theta_prime, 1.0)
        norm = float(np.linalg.norm(theta))
        if float(np.linalg.norm(theta_prime)) <= 1.0:
            failures += int(not np.array_equal(theta, theta_prime))
            continue
        residual = A @ (theta_prime - theta)
        cosine = float(residual @ theta) / max(float(np.linalg.norm(residual)) * norm, 1e-300)
        if abs(norm - 1.0) > tol or cosine < 1.0 - 1e-6:
            failures += 1
    return CheckResult("projection_kkt", failures == 0, f"{failures} of {n_pairs} projections failed")


def check_sherman_morrison(rng: np.random.Generator, n_updates: int = 100, tol: float = 1e-6) -> CheckResult:
    """The incrementally maintained inverse matches a direct inverse."""
    dim = int(rng.integers(2, 11))
    state = ons_init((1, n_updates), _small_hyper(dim, n_updates, radius=1e3))
    for _ in range(n_updates):
        ons_step(state, rng.standard_normal(dim))
    gap = float(np.max(np.abs(state.A_inv - scipy.linalg.inv(state.A))))
    return CheckResult("sherman_morrison", gap <= tol, f"max entry gap {gap:.3g} at d={dim}")


def check_covering(max_t: int = 4096) -> CheckResult:
    """At most ⌈log₂ t⌉ + 1 intervals are active and every eligible level covers t."""
    for t in range(1, max_t + 1):
        active = covering_at(t, max_t, min_len=1).active
        if len(active) > math.ceil(math.log2(t)) + 1:
            return CheckResult("covering", False, f"{len(active)} active intervals at t={t}")
        levels = {iv.level for iv in active if iv.start <= t <= iv.end}
        expected = set(range(t.bit_length()))
        if levels != expected:
            return CheckResult("covering", False, f"levels {sorted(levels)} cover t={t}")
    return CheckResult("covering", True, f"checked t <= {max_t}")


def _stream(h: Hyperparams, cfg: ExperimentConfig, seed: int, horizon: int, pattern: str = "squ"):
    schedule = ShiftSchedule(pattern=pattern, horizon=horizon, alpha0=cfg.schedule.alpha0 if cfg.schedule else 0.9)
    alphas = alpha_path(schedule, derive_stream(seed, "schedule"))
    offline = sample_batch(cfg.mixture, schedule.alpha0, h.n_offline, derive_stream(seed, "offline")).xs
    rng = derive_stream(seed, "stream")
    batches = [sample_batch(cfg.mixture, float(a), h.n_online, rng).xs for a in alphas]
    return offline, batches


def check_simplex(cfg: ExperimentConfig, seed: int = 0, horizon: int = 2048, tol: float = 1e-10) -> CheckResult:
    """Combination weights stay on the simplex and the active set stays logarithmic."""
    h = validate_hyperparams({**cfg.hyper.model_dump(), "horizon": horizon})
    offline, batches = _stream(h, cfg, seed, horizon)
    estimator = OnlineRatioEstimator(h, cfg.divergence, min_len=1)
    for t, xs in enumerate(batches, start=1):
        _, diag = estimator.step(offline, UnlabeledBatch(round=t, xs=xs))
        weights = np.array(list(diag.weights.values()))
        if np.any(weights < 0) or abs(float(weights.sum()) - 1.0) > tol:
            return CheckResult("simplex", False, f"weights off the simplex at t={t}")
        if diag.n_active > math.ceil(math.log2(t)) + 1:
            return CheckResult("simplex", False, f"{diag.n_active} active learners at t={t}")
    return CheckResult("simplex", True, f"{horizon} rounds")


def check_olre_equivalence(cfg: ExperimentConfig, seed: int = 0, horizon: int = 1000) -> CheckResult:
    """A single-interval ensemble reproduces a lone ONS learner bit for bit."""
    h = validate_hyperparams({**cfg.hyper.model_dump(), "horizon": horizon})
    spec = cfg.divergence
    offline, batches = _stream(h, cfg, seed, horizon)
    olre = olre_estimator(h, horizon, spec)
    lone = ons_init((1, horizon), h)
    for t, xs in enumerate(batches, start=1):
        theta_hat, _ = olre.step(offline, UnlabeledBatch(round=t, xs=xs))
        if not np.array_equal(theta_hat, lone.theta):
            return CheckResult("olre_equivalence", False, f"estimates diverge at t={t}")
        ons_step(lone, empirical_grad(spec, RatioModel(spec.link, lone.theta, h.S), offline, xs))
    return CheckResult("olre_equivalence", True, f"{horizon} rounds")


def ons_static_regret(cfg: ExperimentConfig, seed: int, checkpoints: Sequence[int] = (500, 4000)) -> Dict[int, float]:
    """
    Average static regret of one ONS learner on a stationary stream.

    The comparator at each checkpoint T′ is the minimizer of the summed
    observed losses over rounds 1..T′, found by the projected solver.

    Returns:
        Dict[int, float]: Regret divided by T′ for each checkpoint
    """
    horizon = max(checkpoints)
    h = validate_hyperparams({**cfg.hyper.model_dump(), "horizon": horizon})
    spec = cfg.divergence
    offline, batches = _stream(h, cfg, seed, horizon, pattern="const")
    learner = ons_init((1, horizon), h)
    losses = np.empty(horizon)
    for t, xs in enumerate(batches):
        model = RatioModel(spec.link, learner.theta, h.S)
        losses[t] = empirical_loss(spec, model, offline, xs)
        ons_step(learner, empirical_grad(spec, model, offline, xs))

    averages: Dict[int, float] = {}
    for checkpoint in checkpoints:
        stacked = np.vstack(batches[:checkpoint])

        def total(theta: np.ndarray) -> float:
            return empirical_loss(spec, RatioModel(spec.link, theta, h.S), offline, stacked)

        def total_grad(theta: np.ndarray) -> np.ndarray:
            return empirical_grad(spec, RatioModel(spec.link, theta, h.S), offline, stacked)

        best = minimize_in_ball(total, total_grad, np.zeros(h.dim), h.S, max_iter=500, tol=1e-9)
        averages[checkpoint] = (float(losses[:checkpoint].sum()) - checkpoint * best.objective) / checkpoint
    return averages


def check_static_regret(cfg: ExperimentConfig, seeds: Sequence[int], short: int = 500, long: int = 4000) -> CheckResult:
    """regret(long)/long ≤ ½·regret(short)/short on a majority of seeds."""
    passes = 0
    for seed in seeds:
        averages = ons_static_regret(cfg, seed, (short, long))
        ok = averages[long] <= max(0.5 * averages[short], 1e-6)
        logger.info(f"Seed {seed}: average static regret {averages[short]:.4g} -> {averages[long]:.4g}")
        passes += int(ok)
    return CheckResult("static_regret", passes * 2 > len(seeds), f"{passes} of {len(seeds)} seeds passed")


def run_props(cfg: ExperimentConfig, seed: int = 0) -> List[CheckResult]:
    rng = derive_stream(seed, "invariants")
    return [
        check_gradients(rng),
        check_projection_kkt(rng),
        check_sherman_morrison(rng),
        check_covering(),
        check_simplex(cfg, seed),
        check_olre_equivalence(cfg, seed),
    ]


def run_prop2(cfg: ExperimentConfig) -> List[CheckResult]:
    results = []
    for seed_result in run_experiment(cfg).results:
        if seed_result.summary.failed:
            results.append(CheckResult(f"prop2[{seed_result.seed}]", False, seed_result.summary.error or "failed"))
            continue
        check = seed_result.summary.prop2 or check_prop2(seed_result, cfg)
        results.append(CheckResult(f"prop2[{seed_result.seed}]", check.holds, f"lhs={check.lhs:.6g} rhs={check.rhs:.6g}"))
    return results


def run_regret(cfg: ExperimentConfig) -> List[CheckResult]:
    results = []
    for seed_result in run_experiment(cfg).results:
        if seed_result.summary.failed:
            results.append(CheckResult(f"regret[{seed_result.seed}]", False, seed_result.summary.error or "failed"))
            continue
        report = regret_diagnostics(seed_result, cfg)
        seed_result.summary.regret = report
        detail = ", ".join(f"{k}={v:.4g}" for k, v in report.regret.items())
        results.append(
            CheckResult(f"regret[{seed_result.seed}]", True, f"{detail}, gap={report.realizability_gap:.4g}")
        )
    results.append(check_static_regret(cfg, cfg.seeds))
    return results


SUITE_RUNNERS: Dict[str, Callable] = {"props": run_props, "prop2": run_prop2, "regret": run_regret}


def run_suite(name: str, cfg: ExperimentConfig) -> List[CheckResult]:
    """Run one named suite and log every check."""
    results = SUITE_RUNNERS[name](cfg)
    for r in results:
        log = logger.info if r.passed else logger.error
        log(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {r.detail}")
    return results
