"""Tests for the particle model, drift evaluation and assumption checks."""
import math

import numpy as np
import pytest

from models.catalog import affine, build_model, constant, zero
from models.errors import DomainViolationError, ModelSpecError, NonFiniteInputError
from models.particle_model import (
    ModelSpec,
    full_drift,
    identity_relative_residual,
    interaction_drift,
    negative_moment_threshold,
    pairwise_identity_residual,
    pairwise_identity_terms,
    prior_negative_moment_threshold,
    require_weyl_chamber,
    strong_rate_conditions,
    validate_assumptions,
)

SAMPLES = np.linspace(-10.0, 10.0, 201)


def _per_pair_drift(x, lam):
    out = []
    for i in range(len(x)):
        total = 0.0
        for j in range(len(x)):
            if j != i:
                total += lam / (x[i] - x[j])
        out.append(total)
    return np.array(out)


def test_interaction_drift_single_pair():
    np.testing.assert_array_equal(interaction_drift(np.array([0.0, 1.0]), 1.0), [-1.0, 1.0])


def test_interaction_drift_three_particles():
    x = np.array([0.0, 1.0, 2.0])
    result = interaction_drift(x, 1.0)
    np.testing.assert_allclose(result, [-1.5, 0.0, 1.5], atol=1e-15)
    np.testing.assert_allclose(result, _per_pair_drift(x, 1.0), atol=1e-15)


def test_interaction_drift_is_linear_in_lambda():
    x = np.array([-3.0, -0.2, 0.7, 4.0])
    np.testing.assert_array_equal(interaction_drift(x, 2.0), 2.0 * interaction_drift(x, 1.0))


def test_interaction_drift_sums_to_zero():
    x = np.sort(np.random.default_rng(3).normal(size=7))
    assert abs(interaction_drift(x, 1.0).sum()) < 1e-12


def test_interaction_drift_rejects_points_outside_chamber():
    with pytest.raises(DomainViolationError):
        interaction_drift(np.array([0.0, 0.0, 1.0]), 1.0)
    with pytest.raises(DomainViolationError):
        interaction_drift(np.array([1.0, 0.0]), 1.0)
    with pytest.raises(NonFiniteInputError):
        interaction_drift(np.array([0.0, np.nan]), 1.0)


def test_full_drift_with_zero_drift_equals_interaction():
    model = build_model("dyson", d=3, lam=1.5)
    x = np.array([0.0, 1.0, 2.0])
    np.testing.assert_array_equal(full_drift(x, model), interaction_drift(x, 1.5))


def test_full_drift_adds_coordinate_drift():
    model = ModelSpec(d=2, lam=1.0, b=[affine(0.0, 1.0)] * 2, sigma=[constant(1.0)] * 2, v=[0.0, 1.0])
    np.testing.assert_allclose(full_drift(np.array([0.0, 1.0]), model), [-1.0, 2.0])


def test_scalar_only_callables_are_vectorized():
    model = ModelSpec(d=2, lam=1.0, b=[lambda y: math.tanh(y)] * 2, sigma=[lambda y: 1.0] * 2, v=[0.0, 1.0])
    x = np.array([[0.0, 1.0], [-1.0, 2.0]])
    np.testing.assert_allclose(model.drift_terms(x), np.tanh(x))
    np.testing.assert_array_equal(model.diffusion_terms(x), np.ones((2, 2)))
    report = validate_assumptions(model, SAMPLES, pair_samples=50)
    assert report.sup_b == pytest.approx(math.tanh(10.0))
    assert report.b4_holds


def test_non_callable_coefficient_is_rejected():
    with pytest.raises(ModelSpecError):
        ModelSpec(d=2, lam=1.0, b=[0.0] * 2, sigma=[constant(1.0)] * 2, v=[0.0, 1.0])


def test_full_drift_constant_shift():
    c = 0.75
    model = ModelSpec(d=3, lam=1.0, b=[constant(c)] * 3, sigma=[constant(1.0)] * 3, v=[0.0, 1.0, 2.0])
    x = np.array([0.0, 1.0, 2.0])
    np.testing.assert_allclose(full_drift(x, model), interaction_drift(x, 1.0) + c)


def test_full_drift_accepts_plain_callables():
    model = ModelSpec(d=2, lam=1.0, b=[lambda y: y] * 2, sigma=[lambda y: 1.0 + 0 * y] * 2, v=[0.0, 1.0])
    np.testing.assert_allclose(full_drift(np.array([0.0, 1.0]), model), [-1.0, 2.0])


@pytest.mark.parametrize("x", [[1.0, 2.0, 3.0], [0.0, 0.1, 5.0, 100.0]])
def test_pairwise_identity_vanishes(x):
    assert identity_relative_residual(np.array(x)) <= 1e-12


def test_pairwise_identity_empty_sum_for_two_particles():
    assert pairwise_identity_terms(np.array([0.0, 1.0])).size == 0
    assert pairwise_identity_residual(np.array([0.0, 1.0])) == 0.0
    assert identity_relative_residual(np.array([0.0, 1.0])) == 0.0


def test_pairwise_identity_term_count():
    # two terms per ordered pair m > k and each of the d - 2 remaining i
    d = 5
    assert pairwise_identity_terms(np.arange(d, dtype=float)).size == 2 * (d * (d - 1) // 2) * (d - 2)


def test_pairwise_identity_wide_gaps():
    rng = np.random.default_rng(11)
    for _ in range(50):
        gaps = 10.0 ** rng.uniform(-3.0, 3.0, size=9)
        x = np.concatenate([[0.0], np.cumsum(gaps)])
        assert identity_relative_residual(x) <= 1e-12


def test_model_spec_validation():
    with pytest.raises(ModelSpecError):
        build_model("dyson", d=1, lam=1.0, v=[0.0])
    with pytest.raises(ModelSpecError):
        build_model("dyson", d=2, lam=0.0)
    with pytest.raises(ModelSpecError):
        build_model("dyson", d=2, lam=1.0, v=[1.0, 0.0])
    with pytest.raises(ModelSpecError):
        build_model("dyson", d=3, lam=1.0, v=[0.0, 1.0])
    with pytest.raises(ModelSpecError):
        ModelSpec(d=2, lam=1.0, b=[zero()], sigma=[constant(1.0)] * 2, v=[0.0, 1.0])


def test_require_weyl_chamber_accepts_batches():
    x = np.array([[0.0, 1.0], [2.0, 5.0]])
    assert require_weyl_chamber(x) is not None
    with pytest.raises(DomainViolationError):
        require_weyl_chamber(np.array([[0.0, 1.0], [5.0, 2.0]]))


def test_validate_unit_sigma():
    report = validate_assumptions(build_model("dyson", d=2, lam=1.0), SAMPLES)
    assert report.sup_sigma_sq == 1.0
    assert report.b4_holds
    assert report.b5_holds
    assert report.ellipticity_L_sq == 1.0
    assert report.all_hold
    assert report.label == "empirical"


def test_validate_large_sigma_violates_b4():
    report = validate_assumptions(build_model("dyson", d=2, lam=1.0, sigma=2.0), SAMPLES)
    assert report.sup_sigma_sq == 4.0
    assert not report.b4_holds
    assert not report.all_hold


def test_validate_detects_drift_ordering_violation():
    model = ModelSpec(d=2, lam=1.0, b=[affine(0.0, 1.0), affine(0.0, 2.0)], sigma=[constant(1.0)] * 2, v=[0.0, 1.0])
    report = validate_assumptions(model, np.array([-1.0, 0.0, 1.0]))
    assert not report.b5_holds
    assert report.b5_violations


def test_validate_reports_zero_sigma():
    report = validate_assumptions(build_model("dyson", d=2, lam=1.0, sigma=0.0), SAMPLES)
    assert report.zero_sigma_points
    assert math.isinf(report.ellipticity_L_sq)
    assert not report.ellipticity_bounded
    assert not report.all_hold


def test_validate_lipschitz_estimates_are_lower_bounds():
    model = build_model("affine-drift", d=2, lam=1.0, drift_slope=3.0)
    report = validate_assumptions(model, SAMPLES)
    assert report.lipschitz_estimates["b_1"] == pytest.approx(3.0)
    assert report.lipschitz_estimates["sigma_1"] == 0.0


def test_validate_bounded_smooth_sigma():
    report = validate_assumptions(build_model("bounded-smooth", d=3, lam=20.0), SAMPLES)
    assert report.sup_sigma_sq <= 2.5 ** 2
    assert report.ellipticity_L_sq <= 1.0 / 1.5 ** 2 + 1e-12
    assert report.all_hold


@pytest.mark.parametrize("lam, expected", [(3.5, 1.0), (0.5, 0.0), (20.0, 6.5)])
def test_negative_moment_threshold(lam, expected):
    assert negative_moment_threshold(lam, 1.0) == pytest.approx(expected, abs=1e-15)


def test_prior_threshold_degrades_with_dimension():
    assert prior_negative_moment_threshold(20.0, 1.0, 3) == pytest.approx(19.0)
    assert prior_negative_moment_threshold(20.0, 1.0, 60) == pytest.approx(0.0)


def test_strong_rate_conditions_readings():
    conditions = strong_rate_conditions(10.0, 1.0, drift_is_zero=True)
    assert not conditions["unsquared_holds"]
    assert not conditions["squared_holds"]
    assert not conditions["requires_ellipticity"]

    conditions = strong_rate_conditions(20.0, 0.5)
    assert conditions["unsquared_holds"]
    assert conditions["squared_holds"]
    assert conditions["lambda_over_sigma"] == pytest.approx(40.0)
    assert conditions["lambda_over_sigma_sq"] == pytest.approx(80.0)
    assert conditions["requires_ellipticity"]

    # Readings differ when sup sigma > 1
    conditions = strong_rate_conditions(40.0, 2.0)
    assert conditions["unsquared_holds"]
    assert not conditions["squared_holds"]


def test_interaction_drift_is_translation_invariant():
    x = np.array([-1.0, 0.2, 0.9, 4.0])
    np.testing.assert_allclose(interaction_drift(x + 7.5, 2.0), interaction_drift(x, 2.0), rtol=1e-12)


def test_interaction_drift_scales_inversely_under_dilation():
    x = np.array([-1.0, 0.2, 0.9, 4.0])
    np.testing.assert_allclose(interaction_drift(3.0 * x, 2.0), interaction_drift(x, 2.0) / 3.0, rtol=1e-12)


def test_negative_moment_threshold_increases_with_lambda():
    thresholds = [negative_moment_threshold(lam, 1.5) for lam in (0.5, 1.0, 2.0, 10.0, 100.0)]
    assert all(a < b for a, b in zip(thresholds, thresholds[1:]))
