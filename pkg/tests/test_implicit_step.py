"""Tests for the log-barrier Newton solver of the implicit step."""
import math

import numpy as np
import pytest

from models.errors import DomainViolationError, NonFiniteInputError, SolverConvergenceError
from models.implicit_step import (
    ImplicitProblem,
    SolverConfig,
    barrier_hessian,
    barrier_objective,
    initial_point,
    newton_step,
    solve_implicit,
    solve_implicit_batch,
    step_residual,
)
from models.oracles import finite_difference_gradient
from models.particle_model import interaction_sums

# Positive root of g^2 - g - 0.2 = 0
CLOSED_FORM_GAP = (1.0 + math.sqrt(1.8)) / 2.0
CLOSED_FORM = np.array([0.5 - CLOSED_FORM_GAP / 2.0, 0.5 + CLOSED_FORM_GAP / 2.0])


def test_closed_form_two_particles():
    x = solve_implicit(ImplicitProblem(y=np.array([0.0, 1.0]), h_lambda=0.1))
    assert CLOSED_FORM_GAP == pytest.approx(1.17082039, abs=1e-8)
    np.testing.assert_allclose(x, CLOSED_FORM, atol=1e-12)


def test_newton_iterations_from_sorted_start():
    prob = ImplicitProblem(y=np.array([0.0, 1.0]), h_lambda=0.1)
    x = np.array([0.0, 1.0])
    for _ in range(10):
        x = newton_step(x, prob)
    assert np.max(np.abs(x - CLOSED_FORM)) <= 1e-12


def test_unordered_input_gives_same_solution():
    a = solve_implicit(ImplicitProblem(y=np.array([3.0, -1.0, 0.5]), h_lambda=0.3))
    b = solve_implicit(ImplicitProblem(y=np.array([-1.0, 0.5, 3.0]), h_lambda=0.3))
    np.testing.assert_allclose(a, b, atol=1e-12)


@pytest.mark.parametrize("d", [2, 3, 6, 12])
def test_solution_is_in_chamber_and_solves_the_step(d):
    rng = np.random.default_rng(d)
    y = rng.normal(size=d)
    prob = ImplicitProblem(y=y, h_lambda=0.05)
    x = solve_implicit(prob)
    assert np.all(np.diff(x) > 0)
    assert np.max(np.abs(step_residual(x, prob))) <= 1e-10
    assert x.sum() == pytest.approx(y.sum(), abs=1e-12 * d)


def test_tied_entries_with_positive_h_lambda():
    x = solve_implicit(ImplicitProblem(y=np.array([1.0, 1.0, 1.0]), h_lambda=0.5))
    assert np.all(np.diff(x) > 0)
    assert x.mean() == pytest.approx(1.0)
    # symmetric around the common value: x = 1 -+ sqrt(1.5 h_lambda)
    np.testing.assert_allclose(x, [1.0 - math.sqrt(0.75), 1.0, 1.0 + math.sqrt(0.75)], atol=1e-10)


def test_zero_h_lambda_returns_sorted_input():
    x = solve_implicit(ImplicitProblem(y=np.array([3.0, 1.0]), h_lambda=0.0))
    np.testing.assert_array_equal(x, [1.0, 3.0])
    with pytest.raises(DomainViolationError):
        solve_implicit(ImplicitProblem(y=np.array([2.0, 2.0]), h_lambda=0.0))


def test_tiny_h_lambda_is_sorted_input():
    x = solve_implicit(ImplicitProblem(y=np.array([3.0, 1.0]), h_lambda=1e-300))
    np.testing.assert_allclose(x, [1.0, 3.0], atol=1e-12)


def test_single_particle_is_returned_unchanged():
    np.testing.assert_array_equal(solve_implicit_batch(np.array([[2.5]]), 1.0), [[2.5]])


def test_invalid_problems_are_rejected():
    with pytest.raises(NonFiniteInputError):
        ImplicitProblem(y=np.array([0.0, np.inf]), h_lambda=0.1)
    with pytest.raises(ValueError):
        ImplicitProblem(y=np.array([0.0, 1.0]), h_lambda=-1.0)
    with pytest.raises(NonFiniteInputError):
        solve_implicit_batch(np.array([[np.nan, 1.0]]), 0.1)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(grad_tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(max_iters=0)
    with pytest.raises(ValueError):
        SolverConfig(boundary_fraction=1.0)


def test_scaled_default_tolerance():
    tol = SolverConfig().tolerance_for(np.array([[0.1, 0.2], [-50.0, 3.0]]))
    np.testing.assert_allclose(tol, [1e-12, 5e-11])


def test_iteration_cap_raises_convergence_error():
    with pytest.raises(SolverConvergenceError) as info:
        solve_implicit_batch(np.zeros((1, 5)), 1.0, SolverConfig(max_iters=1))
    assert info.value.iterations == 1
    assert info.value.worst_gradient > 0


def test_barrier_objective_at_unit_gap():
    value, gradient = barrier_objective(np.array([0.0, 1.0]), ImplicitProblem(y=np.array([0.0, 1.0]), h_lambda=0.1))
    assert value == 0.0
    np.testing.assert_allclose(gradient, [0.1, -0.1], atol=1e-16)


def test_barrier_gradient_vanishes_at_constructed_stationary_point():
    x = np.array([-1.0, 0.3, 2.0, 3.5])
    y = x - 0.2 * interaction_sums(x)
    assert np.all(np.diff(y) > 0)
    _, gradient = barrier_objective(x, ImplicitProblem(y=y, h_lambda=0.2))
    assert np.max(np.abs(gradient)) <= 1e-14


def test_barrier_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    for _ in range(5):
        x = np.cumsum(rng.uniform(0.5, 2.0, size=4))
        prob = ImplicitProblem(y=rng.normal(size=4), h_lambda=0.3)
        _, gradient = barrier_objective(x, prob)
        numeric = finite_difference_gradient(lambda z: barrier_objective(z, prob)[0], x, 1e-5)
        np.testing.assert_allclose(numeric, gradient, rtol=1e-6, atol=1e-8)


def test_barrier_hessian_is_symmetric_positive_definite():
    H = barrier_hessian(np.array([0.0, 0.1, 0.5, 3.0]), 0.7)
    np.testing.assert_allclose(H, H.T)
    assert np.all(np.linalg.eigvalsh(H) >= 1.0 - 1e-12)


def test_newton_step_at_solution_is_stationary():
    x = np.array([-1.0, 0.3, 2.0])
    prob = ImplicitProblem(y=x - 0.4 * interaction_sums(x), h_lambda=0.4)
    np.testing.assert_allclose(newton_step(x, prob), x, atol=1e-14)


def test_newton_step_stays_in_chamber():
    prob = ImplicitProblem(y=np.array([0.0, 0.0, 0.0, 0.0]), h_lambda=5.0)
    x = np.array([-1e-6, 0.0, 1e-6, 2e-6])
    for _ in range(20):
        x = newton_step(x, prob)
        assert np.all(np.diff(x) > 0)


def test_initial_point_spreads_ties_and_keeps_mean():
    y = np.array([[1.0, 1.0, 1.0, -2.0]])
    x = initial_point(y, 1.0)
    assert np.all(np.diff(x, axis=-1) >= 1e-4 * (1 - 1e-9))
    assert x.mean() == pytest.approx(y.mean())


def test_batch_rows_match_individual_solves():
    rng = np.random.default_rng(9)
    y = rng.normal(size=(6, 4))
    batch = solve_implicit_batch(y, 0.2)
    for row, expected in zip(y, batch):
        np.testing.assert_allclose(solve_implicit_batch(row[None, :], 0.2)[0], expected, atol=1e-14)


def test_two_particle_solution_matches_quadratic_for_unordered_rows():
    rng = np.random.default_rng(11)
    y = rng.normal(scale=3.0, size=(500, 2))
    h_lambda = 0.25
    x = solve_implicit_batch(y, h_lambda)
    gap_y = np.abs(y[:, 1] - y[:, 0])
    gap = 0.5 * (gap_y + np.sqrt(gap_y ** 2 + 8.0 * h_lambda))
    centre = y.mean(axis=-1)
    expected = np.stack([centre - gap / 2, centre + gap / 2], axis=-1)
    np.testing.assert_allclose(x, expected, atol=1e-11)


def test_permuted_explicit_part_gives_identical_step():
    rng = np.random.default_rng(12)
    y = rng.normal(size=6)
    x = solve_implicit(ImplicitProblem(y=y, h_lambda=0.4))
    for _ in range(5):
        permuted = rng.permutation(y)
        np.testing.assert_array_equal(solve_implicit(ImplicitProblem(y=permuted, h_lambda=0.4)), x)


def test_barrier_objective_is_strictly_convex():
    rng = np.random.default_rng(13)
    prob = ImplicitProblem(y=rng.normal(size=5), h_lambda=0.3)
    for _ in range(20):
        x = np.cumsum(rng.uniform(0.1, 2.0, size=5)) - 3.0
        z = np.cumsum(rng.uniform(0.1, 2.0, size=5)) - 3.0
        theta = rng.uniform(0.05, 0.95)
        mixed = barrier_objective(theta * x + (1 - theta) * z, prob)[0]
        combined = theta * barrier_objective(x, prob)[0] + (1 - theta) * barrier_objective(z, prob)[0]
        assert mixed < combined + 1e-10
        assert mixed < combined


def test_barrier_hessian_rows_sum_to_one():
    H = barrier_hessian(np.array([-2.0, -0.1, 0.0, 0.4, 5.0]), 1.3)
    np.testing.assert_array_equal(H, H.T)
    np.testing.assert_allclose(H.sum(axis=-1), np.ones(5), rtol=1e-10)


def test_gaps_grow_with_h_lambda():
    rng = np.random.default_rng(14)
    y = rng.normal(size=5)
    gaps = [np.diff(solve_implicit(ImplicitProblem(y=y, h_lambda=hl))) for hl in (1e-3, 1e-2, 0.1, 1.0, 5.0)]
    for smaller, larger in zip(gaps, gaps[1:]):
        assert np.all(larger >= smaller)
    two = [solve_implicit(ImplicitProblem(y=np.array([0.0, 1.0]), h_lambda=hl)) for hl in (0.05, 0.1, 0.2)]
    assert two[0][1] - two[0][0] < two[1][1] - two[1][0] < two[2][1] - two[2][0]
