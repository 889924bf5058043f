import logging

import numpy as np
import pytest
from conftest import small_hyper, unit_ball_points

from bregman import DivergenceSpec, Link, RatioModel, empirical_grad, empirical_loss
from core import ConfigError, UnlabeledBatch, derive_stream
from learners.baselines import KL_SPEC, kliep_fit, olre_estimator, ulsif_fit, ulsif_system
from learners.ons import ons_init, ons_step
from tools.solvers import minimize_in_ball


def _data(seed=0, dim=3):
    rng = derive_stream(seed, "baselines")
    return unit_ball_points(rng, 60, dim), unit_ball_points(rng, 10, dim, shift=0.4)


def test_ulsif_example():
    offline = np.sqrt(2.0) * np.eye(2)
    model = ulsif_fit(offline, np.array([[1.0, 0.0]]), 1.0, 10.0)
    assert model.link is Link.LINEAR
    np.testing.assert_allclose(model.theta, [0.5, 0.0])


def test_ulsif_zero_mean_batch_gives_zero_theta(caplog):
    offline, _ = _data()
    with caplog.at_level(logging.WARNING):
        model = ulsif_fit(offline, np.array([[0.5, 0.0, 0.0], [-0.5, 0.0, 0.0]]), 0.1, 10.0)
    np.testing.assert_array_equal(model.theta, np.zeros(3))
    assert "theta = 0" in caplog.text


def test_ulsif_satisfies_normal_equations():
    offline, batch = _data(1)
    lhs, rhs = ulsif_system(offline, batch, 0.1)
    theta = ulsif_fit(offline, batch, 0.1, 100.0).theta
    assert np.linalg.norm(lhs @ theta - rhs) <= 1e-10


def test_ulsif_matches_solver_oracle():
    offline, batch = _data(2)
    reg = 0.1
    lhs, rhs = ulsif_system(offline, batch, reg)

    def objective(theta):
        return 0.5 * float(theta @ lhs @ theta) - float(rhs @ theta)

    def gradient(theta):
        return lhs @ theta - rhs

    oracle = minimize_in_ball(objective, gradient, np.zeros(3), 100.0, max_iter=5000, tol=1e-12)
    np.testing.assert_allclose(ulsif_fit(offline, batch, reg, 100.0).theta, oracle.x, atol=1e-8)


def test_ulsif_is_rescaled_into_the_ball():
    offline, batch = _data(3)
    model = ulsif_fit(offline, batch, 0.1, 1e-3)
    assert np.linalg.norm(model.theta) == pytest.approx(1e-3)


def test_ulsif_rejects_non_positive_regularizer():
    offline, batch = _data()
    with pytest.raises(ConfigError):
        ulsif_fit(offline, batch, 0.0, 1.0)


def test_kliep_on_matching_distributions_stays_near_zero():
    offline, _ = _data(4)
    model = kliep_fit(offline, offline, 2.0)
    assert model.link is Link.EXPONENTIAL
    assert empirical_loss(KL_SPEC, model, offline, offline) <= 1.0
    assert np.linalg.norm(model.theta) <= 1e-8


def test_kliep_descent_is_monotone():
    offline, batch = _data(5)
    losses = [
        empirical_loss(KL_SPEC, kliep_fit(offline, batch, 2.0, steps=k), offline, batch) for k in range(1, 8)
    ]
    assert losses[0] <= 1.0
    assert all(later <= earlier + 1e-12 for earlier, later in zip(losses, losses[1:]))


def test_kliep_respects_the_radius():
    offline, batch = _data(6)
    model = kliep_fit(offline, batch, 0.05, steps=50)
    assert np.linalg.norm(model.theta) <= 0.05 + 1e-12


@pytest.mark.parametrize("kwargs", [{"steps": 0}, {"step_size": 0.0}])
def test_kliep_rejects_bad_settings(kwargs):
    offline, batch = _data()
    with pytest.raises(ConfigError):
        kliep_fit(offline, batch, 1.0, **kwargs)


def test_olre_starts_at_zero_with_one_interval():
    h = small_hyper(dim=3, horizon=20, radius=1.0)
    olre = olre_estimator(h)
    assert olre.state.K == 1
    offline, batch = _data()
    theta, diag = olre.step(offline, UnlabeledBatch(round=1, xs=batch))
    np.testing.assert_array_equal(theta, np.zeros(3))
    assert diag.n_active == 1


@pytest.mark.parametrize("kind", ["LR", "KL", "LS"])
def test_olre_is_a_lone_ons_learner(kind):
    horizon = 60
    spec = DivergenceSpec(kind=kind)
    h = small_hyper(dim=3, horizon=horizon, radius=1.0, gamma=2.0)
    rng = derive_stream(9, "olre")
    offline = unit_ball_points(rng, 50, 3)
    olre = olre_estimator(h, horizon, spec)
    lone = ons_init((1, horizon), h)
    for t in range(1, horizon + 1):
        xs = unit_ball_points(rng, 2, 3, shift=0.3 * np.sin(t / 5.0))
        theta_hat, _ = olre.step(offline, UnlabeledBatch(round=t, xs=xs))
        np.testing.assert_array_equal(theta_hat, lone.theta)
        ons_step(lone, empirical_grad(spec, RatioModel(spec.link, lone.theta, h.S), offline, xs))
