import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy.stats import multivariate_normal, ncx2, norm

from core import DomainError, derive_stream
from data_sources.synthetic import (
    GaussianMixtureSpec,
    ShiftSchedule,
    alpha_at,
    alpha_path,
    alpha_variation,
    component_l1_distance,
    ratio_bound_diagnostics,
    sample_batch,
    true_ratio,
    variation_V,
)

MIXTURE = GaussianMixtureSpec()


def test_alpha_examples():
    assert alpha_at(ShiftSchedule(pattern="lin", horizon=10), 5) == 0.5
    assert alpha_at(ShiftSchedule(pattern="sin", horizon=16, period=4), 2) == pytest.approx(1.0)
    squ = ShiftSchedule(pattern="squ", horizon=12, period=3)
    assert alpha_at(squ, 3) != alpha_at(squ, 4)
    assert alpha_at(ShiftSchedule(pattern="const", horizon=5, alpha0=0.7), 3) == 0.7


def test_alpha_rejects_rounds_out_of_range():
    s = ShiftSchedule(pattern="lin", horizon=10)
    with pytest.raises(DomainError):
        alpha_at(s, 0)
    with pytest.raises(DomainError):
        alpha_at(s, 11)


def test_default_period_is_root_horizon():
    assert ShiftSchedule(pattern="squ", horizon=10000).M == 100
    assert ShiftSchedule(pattern="squ", horizon=10).M == 4


def test_ber_keep_probability_by_mode():
    assert ShiftSchedule(pattern="ber", horizon=100).p == pytest.approx(0.9)
    assert ShiftSchedule(pattern="ber", horizon=100, ber_mode="literal").p == pytest.approx(0.1)
    assert ShiftSchedule(pattern="ber", horizon=100, ber_mode="literal", keep_prob=0.3).p == 0.3


def test_default_keep_probability_follows_horizon():
    assert ShiftSchedule(pattern="ber", horizon=10000).p == pytest.approx(0.99)
    assert ShiftSchedule(pattern="ber", horizon=40).p == pytest.approx(1 - 1 / math.sqrt(40))
    assert ShiftSchedule(pattern="ber", horizon=10000, ber_mode="literal").p == pytest.approx(0.01)


def test_ber_needs_a_materialized_path():
    s = ShiftSchedule(pattern="ber", horizon=10)
    with pytest.raises(DomainError):
        alpha_at(s, 2)
    with pytest.raises(DomainError):
        alpha_path(s)
    path = alpha_path(s, derive_stream(0, "schedule"))
    assert alpha_at(s, 2, ber_path=path) == path[1]


def test_ber_flip_frequency():
    horizon = 10000
    s = ShiftSchedule(pattern="ber", horizon=horizon)
    path = alpha_path(s, derive_stream(0, "schedule"))
    assert path[0] == 0.0
    assert set(np.unique(path)) <= {0.0, 1.0}
    flips = np.mean(np.diff(path) != 0)
    stderr = math.sqrt(s.p * (1 - s.p) / (horizon - 1))
    assert abs(flips - (1 - s.p)) <= 3 * stderr


def test_ber_path_is_reproducible():
    s = ShiftSchedule(pattern="ber", horizon=500)
    np.testing.assert_array_equal(
        alpha_path(s, derive_stream(4, "schedule")), alpha_path(s, derive_stream(4, "schedule"))
    )


def test_mixture_geometry():
    assert MIXTURE.clip_radius == pytest.approx(math.sqrt(5) + 6 * math.sqrt(10))
    np.testing.assert_array_equal(MIXTURE.mu1, np.ones(5))
    np.testing.assert_array_equal(MIXTURE.mu2, -np.ones(5))
    assert 0.999 < MIXTURE.truncation_mass(MIXTURE.mu1) <= 1.0
    with pytest.raises(ValidationError):
        GaussianMixtureSpec(dim=3, mean1=[1.0, 2.0])


@pytest.mark.parametrize("alpha, mean", [(0.0, 1.0), (1.0, -1.0)])
def test_degenerate_mixtures_draw_one_component(alpha, mean):
    n = 4000
    xs = sample_batch(MIXTURE, alpha, n, derive_stream(1, "components")).xs
    tolerance = 4 * math.sqrt(MIXTURE.cov_scale) / math.sqrt(n)
    np.testing.assert_allclose(xs.mean(axis=0), np.full(5, mean), atol=tolerance)


def test_samples_respect_bound_and_label_rule():
    batch = sample_batch(MIXTURE, 0.4, 2000, derive_stream(2, "bound"))
    norms = np.linalg.norm(batch.xs, axis=1)
    assert np.all(norms <= MIXTURE.clip_radius)
    np.testing.assert_array_equal(batch.ys, np.where(norms <= MIXTURE.label_threshold, 1, -1))


def test_label_radius_is_the_median_norm():
    r = MIXTURE.label_threshold
    inside = ncx2.cdf(r**2 / MIXTURE.cov_scale, 5, 5.0 / MIXTURE.cov_scale)
    assert inside / MIXTURE.truncation_mass(MIXTURE.mu1) == pytest.approx(0.5, abs=1e-6)
    assert GaussianMixtureSpec(label_radius=5.0).label_threshold == 5.0


@pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
def test_positive_prior_is_balanced(alpha):
    batch = sample_batch(MIXTURE, alpha, 20000, derive_stream(3, "prior"))
    assert np.mean(batch.ys == 1) == pytest.approx(0.5, abs=0.02)


def test_sample_batch_validation():
    rng = derive_stream(0, "validation")
    with pytest.raises(DomainError):
        sample_batch(MIXTURE, 0.5, 0, rng)
    with pytest.raises(DomainError):
        sample_batch(MIXTURE, 1.5, 3, rng)


def test_sample_batch_is_reproducible():
    first = sample_batch(MIXTURE, 0.3, 50, derive_stream(7, "stream"))
    again = sample_batch(MIXTURE, 0.3, 50, derive_stream(7, "stream"))
    np.testing.assert_array_equal(first.xs, again.xs)
    np.testing.assert_array_equal(first.ys, again.ys)


def test_true_ratio_is_one_without_shift():
    xs = sample_batch(MIXTURE, 0.5, 20, derive_stream(0, "ratio")).xs
    np.testing.assert_allclose(true_ratio(MIXTURE, 0.9, 0.9, xs), np.ones(20), rtol=1e-12)


def test_true_ratio_is_one_where_components_agree():
    assert true_ratio(MIXTURE, 0.1, 0.9, np.zeros(5)) == pytest.approx(1.0)
    assert isinstance(true_ratio(MIXTURE, 0.1, 0.9, np.zeros(5)), float)


def test_true_ratio_matches_direct_density_quotient():
    xs = sample_batch(MIXTURE, 0.5, 50, derive_stream(5, "oracle")).xs
    cov = MIXTURE.cov_scale * np.eye(5)
    phi1 = multivariate_normal(mean=np.ones(5), cov=cov).pdf(xs)
    phi2 = multivariate_normal(mean=-np.ones(5), cov=cov).pdf(xs)
    for alpha_t in (0.0, 0.3, 1.0):
        direct = ((1 - alpha_t) * phi1 + alpha_t * phi2) / (0.1 * phi1 + 0.9 * phi2)
        np.testing.assert_allclose(true_ratio(MIXTURE, alpha_t, 0.9, xs), direct, rtol=1e-10)


def test_alpha_variation_examples():
    lin = alpha_path(ShiftSchedule(pattern="lin", horizon=10))
    assert alpha_variation(lin) == pytest.approx(0.9)
    squ = alpha_path(ShiftSchedule(pattern="squ", horizon=12, period=3))
    assert alpha_variation(squ) == 3.0


def test_variation_of_constant_schedule_is_zero():
    s = ShiftSchedule(pattern="const", horizon=50)
    assert variation_V(s, MIXTURE, 100, derive_stream(0, "variation")) == 0.0


def test_variation_factors_into_alpha_change_and_component_distance():
    s = ShiftSchedule(pattern="lin", horizon=10)
    value = variation_V(s, MIXTURE, 500, derive_stream(0, "variation"))
    factor = component_l1_distance(MIXTURE, 500, derive_stream(0, "variation"))
    assert value == pytest.approx(0.9 * factor)
    assert 0.0 < factor <= 2.0
    with pytest.raises(DomainError):
        variation_V(s, MIXTURE, 0, derive_stream(0, "variation"))


def test_ratio_bound_diagnostics():
    path = alpha_path(ShiftSchedule(pattern="squ", horizon=16, period=4))
    empirical, analytic = ratio_bound_diagnostics(MIXTURE, path, 0.9, derive_stream(0, "ratio-bound"), n_points=2000)
    assert analytic == pytest.approx(10.0)
    assert 1.0 <= empirical <= analytic * (1 + 1e-9)


def test_component_distance_matches_gaussian_closed_form():
    separation = math.sqrt(20.0 / MIXTURE.cov_scale)
    expected = 2.0 * (2.0 * norm.cdf(separation / 2.0) - 1.0)
    estimate = component_l1_distance(MIXTURE, 4000, derive_stream(1, "l1"))
    assert estimate == pytest.approx(expected, abs=0.05)
