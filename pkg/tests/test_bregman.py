import math

import numpy as np
import pytest
from pydantic import ValidationError

from bregman import (
    DivergenceKind,
    DivergenceSpec,
    Link,
    RatioModel,
    bregman_div,
    empirical_grad,
    empirical_loss,
    estimation_error,
    expected_loss_mc,
    functional_loss,
    psi_deriv,
    psi_second,
    psi_value,
    ratio_eval,
)
from core import DomainError, derive_stream

LS = DivergenceSpec(kind="LS")
LR = DivergenceSpec(kind="LR")
KL = DivergenceSpec(kind="KL")


def test_psi_values():
    assert psi_value(LS, 1.0) == 0.0
    assert psi_value(LR, 1.0) == pytest.approx(-2.0 * math.log(2.0))
    assert psi_value(KL, 1.0) == pytest.approx(-1.0)


def test_psi_derivatives():
    assert psi_deriv(LR, 1.0) == pytest.approx(-math.log(2.0))
    assert psi_deriv(LS, 3.0) == 2.0
    assert psi_second(LS, 3.0) == 1.0
    assert psi_deriv(KL, math.e) == pytest.approx(1.0)
    assert psi_second(LR, 1.0) == pytest.approx(0.5)
    assert psi_second(KL, 4.0) == pytest.approx(0.25)


def test_psi_accepts_arrays():
    out = psi_value(KL, np.array([1.0, math.e]))
    np.testing.assert_allclose(out, [-1.0, 0.0], atol=1e-12)


@pytest.mark.parametrize("spec", [LR, KL])
def test_psi_domain(spec):
    with pytest.raises(DomainError):
        psi_value(spec, 0.0)
    with pytest.raises(DomainError):
        psi_deriv(spec, np.array([1.0, -1.0]))


def test_bregman_div_examples():
    assert bregman_div(LS, 3.0, 1.0) == 2.0
    for spec in (LS, LR, KL):
        assert bregman_div(spec, 2.0, 2.0) == pytest.approx(0.0, abs=1e-15)
    expected = psi_value(LR, 2.0) - psi_value(LR, 1.0) - psi_deriv(LR, 1.0) * 1.0
    assert bregman_div(LR, 2.0, 1.0) == pytest.approx(expected)


@pytest.mark.parametrize("kind", list(DivergenceKind))
def test_bregman_div_is_strongly_convex_on_working_domain(kind):
    spec = DivergenceSpec(kind=kind)
    beta = math.e
    mu = spec.strong_convexity(beta)
    rng = derive_stream(3, "bregman")
    a = rng.uniform(1.0 / beta, beta, 200)
    b = rng.uniform(1.0 / beta, beta, 200)
    gap = bregman_div(spec, a, b) - 0.5 * mu * (a - b) ** 2
    assert np.all(gap >= -1e-10)


def test_strong_convexity_moduli():
    assert LS.strong_convexity(5.0) == 1.0
    assert LR.strong_convexity(2.0) == pytest.approx(1.0 / 6.0)
    assert KL.strong_convexity(4.0) == pytest.approx(0.25)


def test_divergence_spec_validation():
    assert LR.link is Link.EXPONENTIAL
    assert LS.link is Link.LINEAR
    with pytest.raises(ValidationError):
        DivergenceSpec(kind="LR", flatten_exponent=0.0)
    with pytest.raises(ValidationError):
        DivergenceSpec(kind="LS", flatten_exponent=0.25)
    assert DivergenceSpec(kind="LS", flatten_exponent=0.5).flatten_exponent == 0.5


def test_ratio_eval_examples():
    exp_zero = RatioModel.zeros(Link.EXPONENTIAL, 3, 1.0)
    np.testing.assert_array_equal(ratio_eval(exp_zero, np.eye(3)), np.ones(3))
    exp_model = RatioModel(Link.EXPONENTIAL, np.array([1.0, 0.0]), 2.0)
    assert ratio_eval(exp_model, np.array([math.log(2.0), 0.0])) == pytest.approx(2.0)
    linear = RatioModel(Link.LINEAR, np.array([1.0, 1.0]), 2.0)
    assert ratio_eval(linear, np.array([0.5, 0.5])) == pytest.approx(1.0)


def test_ratio_model_rejects_theta_outside_ball():
    with pytest.raises(DomainError):
        RatioModel(Link.EXPONENTIAL, np.array([3.0, 4.0]), 1.0)


def test_exponential_ratios_are_bounded_by_beta():
    rng = derive_stream(5, "bounds")
    xs = rng.standard_normal((500, 3))
    xs /= np.maximum(np.linalg.norm(xs, axis=1, keepdims=True), 1.0)
    theta = rng.standard_normal(3)
    theta *= 2.0 / np.linalg.norm(theta)
    r = ratio_eval(RatioModel(Link.EXPONENTIAL, theta, 2.0), xs)
    assert np.all(r >= math.exp(-2.0) - 1e-12)
    assert np.all(r <= math.exp(2.0) + 1e-12)


@pytest.mark.parametrize("spec, expected", [(LR, math.log(2.0)), (LS, 0.5), (KL, 1.0)])
def test_loss_at_zero(spec, expected):
    rng = derive_stream(0, "loss")
    model = RatioModel.zeros(spec.link, 2, 1.0)
    assert empirical_loss(spec, model, rng.random((7, 2)), rng.random((3, 2))) == pytest.approx(expected)


def test_lr_gradient_example():
    model = RatioModel.zeros(Link.EXPONENTIAL, 2, 1.0)
    grad = empirical_grad(LR, model, np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]))
    np.testing.assert_allclose(grad, [0.25, -0.25])


def test_ls_gradient_example():
    model = RatioModel.zeros(Link.LINEAR, 2, 1.0)
    grad = empirical_grad(LS, model, np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]))
    np.testing.assert_allclose(grad, [0.0, -1.0])


def test_lr_gradient_vanishes_on_symmetric_data():
    xs = np.array([[0.3, -0.1], [-0.2, 0.4]])
    grad = empirical_grad(LR, RatioModel.zeros(Link.EXPONENTIAL, 2, 1.0), xs, xs)
    assert np.linalg.norm(grad) <= 1e-12


@pytest.mark.parametrize("gamma", [0.5, 1.0])
def test_lr_loss_is_convex_along_segments(gamma):
    spec = DivergenceSpec(kind="LR", flatten_exponent=gamma)
    rng = derive_stream(11, "convexity")
    offline, online = rng.uniform(-1, 1, (30, 3)), rng.uniform(-1, 1, (10, 3))

    def loss(theta):
        return empirical_loss(spec, RatioModel(Link.EXPONENTIAL, theta, 10.0), offline, online)

    for _ in range(50):
        a, b, t = rng.uniform(-2, 2, 3), rng.uniform(-2, 2, 3), rng.random()
        assert loss(t * a + (1 - t) * b) <= t * loss(a) + (1 - t) * loss(b) + 1e-10


def test_pairing_and_empty_inputs_are_rejected():
    exp_model = RatioModel.zeros(Link.EXPONENTIAL, 2, 1.0)
    with pytest.raises(DomainError, match="linear"):
        empirical_loss(LS, exp_model, np.ones((2, 2)), np.ones((2, 2)))
    with pytest.raises(DomainError, match="empty"):
        empirical_grad(LR, exp_model, np.empty((0, 2)), np.ones((2, 2)))


def test_functional_loss_is_minimized_by_matching_ratio():
    for c in (0.5, 1.0, 2.0):
        assert functional_loss(LS, [c], [c]) == pytest.approx((c - 1.0) ** 2 / 2.0)
        assert functional_loss(KL, [c], [c]) == pytest.approx(c - math.log(c))


def test_expected_loss_mc():
    offline = np.array([[0.2, 0.1], [-0.3, 0.4]])
    support = np.array([[0.5, 0.0], [0.0, -0.5]])

    def sampler(n, rng):
        return support[rng.integers(0, 2, n)]

    zero = RatioModel.zeros(Link.EXPONENTIAL, 2, 1.0)
    assert expected_loss_mc(LR, zero, offline, sampler, 10, derive_stream(0, "mc")) == pytest.approx(math.log(2.0))

    model = RatioModel(Link.EXPONENTIAL, np.array([0.5, -0.2]), 1.0)
    first = expected_loss_mc(LR, model, offline, sampler, 20000, derive_stream(0, "mc"))
    again = expected_loss_mc(LR, model, offline, sampler, 20000, derive_stream(0, "mc"))
    assert first == again
    assert first == pytest.approx(empirical_loss(LR, model, offline, support), abs=1e-2)

    with pytest.raises(DomainError):
        expected_loss_mc(LR, model, offline, sampler, 0, derive_stream(0, "mc"))


def test_estimation_error():
    xs = np.array([[0.1, 0.2], [0.3, -0.4], [0.0, 0.0]])
    model = RatioModel(Link.LINEAR, np.array([1.0, 1.0]), 2.0)
    assert estimation_error(model, lambda x: x @ np.array([1.0, 1.0]), xs) == 0.0
    ones = RatioModel.zeros(Link.EXPONENTIAL, 2, 1.0)
    assert estimation_error(ones, lambda x: np.full(len(x), 3.0), xs) == pytest.approx(2.0)
    r_star = np.array([0.5, 2.0, 1.25])
    direct = (0.5 + 1.0 + 0.25) / 3.0
    assert estimation_error(ones, lambda x: r_star, xs) == pytest.approx(direct)
