"""Implicit step of the semi-implicit schemes.

One step requires the unique point x of the Weyl chamber with

    x_i - h_lambda * sum_{j != i} 1 / (x_i - x_j) = y_i,    i = 1..d.

This system is the stationarity condition of the strictly convex barrier
objective

    F(x) = 1/2 |x - y|^2 - h_lambda * sum_{i<j} log(x_j - x_i),

which is minimized with a damped Newton method. Every routine works on a batch
of independent problems stacked along the first axis; per-problem results do
not depend on which other problems share the batch.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from models.errors import (
    DomainViolationError,
    HessianSolveError,
    NonFiniteInputError,
    SolverConvergenceError,
)
from models.particle_model import inverse_differences, require_weyl_chamber

logger = logging.getLogger(__name__)

ARMIJO_C = 1e-4
MAX_BACKTRACKS = 60
EPS = np.finfo(float).eps


@dataclass(frozen=True)
class ImplicitProblem:
    """Explicit part y of a step and the product h * lambda.

    y may come in any order; the step solves against sorted(y).
    """

    y: np.ndarray
    h_lambda: float

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.ndim != 1 or y.size < 1:
            raise ValueError("y must be a non-empty vector")
        if not np.all(np.isfinite(y)):
            raise NonFiniteInputError("explicit part y contains non-finite entries")
        if not np.isfinite(self.h_lambda) or self.h_lambda < 0:
            raise ValueError(f"h_lambda must be finite and >= 0, got {self.h_lambda}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "h_lambda", float(self.h_lambda))


@dataclass(frozen=True)
class SolverConfig:
    """Newton solver settings.

    grad_tol=None selects the scaled default 1e-12 * max(1, |y|_inf) per problem.
    """

    grad_tol: Optional[float] = None
    max_iters: int = 100
    boundary_fraction: float = 0.9

    def __post_init__(self):
        if self.grad_tol is not None and not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not 0.0 < self.boundary_fraction < 1.0:
            raise ValueError("boundary_fraction must lie in (0, 1)")

    def tolerance_for(self, y: np.ndarray) -> np.ndarray:
        """Gradient tolerance for each row of y."""
        y = np.atleast_2d(y)
        if self.grad_tol is not None:
            return np.full(y.shape[0], self.grad_tol)
        return 1e-12 * np.maximum(1.0, np.max(np.abs(y), axis=-1))


def _objective_batch(x: np.ndarray, y: np.ndarray, h_lambda: float) -> Tuple[np.ndarray, np.ndarray]:
    """Barrier values (P,) and gradients (P, d) for a batch inside the chamber."""
    d = x.shape[-1]
    upper = np.triu_indices(d, k=1)
    gaps = x[:, upper[1]] - x[:, upper[0]]
    value = 0.5 * np.sum((x - y) ** 2, axis=-1) - h_lambda * np.sum(np.log(gaps), axis=-1)
    gradient = x - y - h_lambda * inverse_differences(x).sum(axis=-1)
    return value, gradient


def _hessian_batch(x: np.ndarray, h_lambda: float) -> np.ndarray:
    """H_ii = 1 + h_lambda sum_{j != i} 1/(x_i - x_j)^2, H_ij = -h_lambda/(x_i - x_j)^2."""
    d = x.shape[-1]
    weights = inverse_differences(x) ** 2
    hessian = -h_lambda * weights
    diagonal = 1.0 + h_lambda * weights.sum(axis=-1)
    hessian[:, np.arange(d), np.arange(d)] = diagonal
    return hessian


def barrier_objective(x: np.ndarray, prob: ImplicitProblem) -> Tuple[float, np.ndarray]:
    """Value and gradient of the barrier objective at a chamber point.

    Args:
        x: Strictly increasing vector
        prob: Implicit step problem

    Returns:
        Tuple of (value, gradient)
    """
    x = require_weyl_chamber(x)
    if x.shape != prob.y.shape:
        raise ValueError("x and y must have the same length")
    value, gradient = _objective_batch(x[None, :], np.sort(prob.y)[None, :], prob.h_lambda)
    return float(value[0]), gradient[0]


def barrier_hessian(x: np.ndarray, h_lambda: float) -> np.ndarray:
    """Dense Hessian of the barrier objective at a chamber point."""
    x = require_weyl_chamber(x)
    return _hessian_batch(x[None, :], h_lambda)[0]


def _boundary_step(x: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Largest alpha keeping x + alpha * direction strictly increasing (inf if unbounded)."""
    gaps = np.diff(x, axis=-1)
    if gaps.shape[-1] == 0:
        return np.full(x.shape[0], np.inf)
    closing = -np.diff(direction, axis=-1)
    limits = np.full_like(gaps, np.inf)
    shrinking = closing > 0
    limits[shrinking] = gaps[shrinking] / closing[shrinking]
    return np.min(limits, axis=-1)


def _newton_update(
    x: np.ndarray,
    y: np.ndarray,
    h_lambda: float,
    boundary_fraction: float,
    value: np.ndarray,
    gradient: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """One safeguarded Newton step for every row; returns new points and step sizes."""
    hessian = _hessian_batch(x, h_lambda)
    try:
        direction = np.linalg.solve(hessian, -gradient[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise HessianSolveError(f"barrier Hessian is numerically singular: {exc}") from exc
    if not np.all(np.isfinite(direction)):
        raise HessianSolveError("Newton direction is not finite")

    alpha = np.minimum(1.0, boundary_fraction * _boundary_step(x, direction))
    slope = np.sum(gradient * direction, axis=-1)

    # Below the rounding level of F the Armijo test carries no information
    negligible = -slope <= 64.0 * EPS * np.maximum(1.0, np.abs(value))
    accepted = negligible.copy()
    candidate = x + alpha[:, None] * direction

    for _ in range(MAX_BACKTRACKS):
        pending = ~accepted
        if not np.any(pending):
            break
        trial = x[pending] + alpha[pending, None] * direction[pending]
        inside = np.all(np.diff(trial, axis=-1) > 0, axis=-1)
        trial_value = np.full(trial.shape[0], np.inf)
        if np.any(inside):
            trial_value[inside], _ = _objective_batch(trial[inside], y[pending][inside], h_lambda)
        ok = trial_value <= value[pending] + ARMIJO_C * alpha[pending] * slope[pending]
        idx = np.flatnonzero(pending)
        candidate[idx[ok]] = trial[ok]
        accepted[idx[ok]] = True
        alpha[idx[~ok]] *= 0.5

    # Rows that never passed keep their point
    stuck = ~accepted
    if np.any(stuck):
        candidate[stuck] = x[stuck]
        alpha[stuck] = 0.0
    return candidate, alpha * np.max(np.abs(direction), axis=-1)


def newton_step(x: np.ndarray, prob: ImplicitProblem, cfg: SolverConfig = SolverConfig()) -> np.ndarray:
    """Single damped Newton step with fraction-to-boundary line search.

    Args:
        x: Current strictly increasing iterate
        prob: Implicit step problem
        cfg: Solver settings (boundary_fraction)

    Returns:
        Next iterate, strictly inside the chamber
    """
    x = require_weyl_chamber(x)
    y = np.sort(prob.y)[None, :]
    value, gradient = _objective_batch(x[None, :], y, prob.h_lambda)
    if not np.any(gradient):
        return x.copy()
    updated, _ = _newton_update(x[None, :], y, prob.h_lambda, cfg.boundary_fraction, value, gradient)
    return updated[0]


def initial_point(y: np.ndarray, h_lambda: float) -> np.ndarray:
    """Sorted y with every gap raised to at least eps0, recentred on the mean of y.

    eps0 = max(1e-8, sqrt(h_lambda) * 1e-4).
    """
    y = np.atleast_2d(y)
    d = y.shape[-1]
    eps0 = max(1e-8, np.sqrt(h_lambda) * 1e-4)
    x = np.sort(y, axis=-1)
    offsets = eps0 * np.arange(d)
    x = np.maximum.accumulate(x - offsets, axis=-1) + offsets
    x += (y.mean(axis=-1) - x.mean(axis=-1))[:, None]
    return x


def solve_implicit_batch(y: np.ndarray, h_lambda: float, cfg: SolverConfig = SolverConfig()) -> np.ndarray:
    """Solve a batch of implicit step problems sharing h_lambda.

    Args:
        y: Explicit parts, shape (P, d); each row is sorted before solving
        h_lambda: Step size times lambda (>= 0)
        cfg: Solver settings

    Returns:
        Solutions, shape (P, d), each row strictly increasing

    Raises:
        NonFiniteInputError: y has non-finite entries
        DomainViolationError: h_lambda == 0 and a row has tied entries
        SolverConvergenceError: Some row missed the tolerance after max_iters
        HessianSolveError: The Newton system could not be solved
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if not np.all(np.isfinite(y)):
        raise NonFiniteInputError("explicit part y contains non-finite entries")
    if h_lambda < 0 or not np.isfinite(h_lambda):
        raise ValueError(f"h_lambda must be finite and >= 0, got {h_lambda}")
    y = np.sort(y, axis=-1)
    if y.shape[-1] == 1:
        return y

    if h_lambda == 0.0:
        if np.any(np.diff(y, axis=-1) <= 0):
            raise DomainViolationError("tied entries in y: the step has no chamber solution at h_lambda = 0")
        return y

    tol = cfg.tolerance_for(y)
    x = initial_point(y, h_lambda)
    done = np.zeros(y.shape[0], dtype=bool)
    grad_norm = np.full(y.shape[0], np.inf)

    for iteration in range(cfg.max_iters + 1):
        active = np.flatnonzero(~done)
        value, gradient = _objective_batch(x[active], y[active], h_lambda)
        grad_norm[active] = np.max(np.abs(gradient), axis=-1)
        converged = grad_norm[active] <= tol[active]
        done[active[converged]] = True
        if np.all(done) or iteration == cfg.max_iters:
            break

        keep = ~converged
        active = active[keep]
        updated, moved = _newton_update(
            x[active], y[active], h_lambda, cfg.boundary_fraction, value[keep], gradient[keep]
        )
        x[active] = updated

        # Stagnation at the rounding floor is accepted within 10 * tol
        scale = np.maximum(1.0, np.max(np.abs(updated), axis=-1))
        stalled = (moved <= 4.0 * EPS * scale) & (grad_norm[active] <= 10.0 * tol[active])
        done[active[stalled]] = True

    if not np.all(done):
        worst = float(np.max(grad_norm[~done]))
        logger.warning(
            "implicit solve: %d of %d problems unconverged after %d iterations (worst |grad| %.3e)",
            int(np.sum(~done)), y.shape[0], cfg.max_iters, worst,
        )
        raise SolverConvergenceError(
            f"Newton iteration did not converge in {cfg.max_iters} iterations (|grad|_inf = {worst:.3e})",
            iterations=cfg.max_iters,
            worst_gradient=worst,
        )

    # One Newton step past the tolerance lands on the rounding floor
    value, gradient = _objective_batch(x, y, h_lambda)
    polished, _ = _newton_update(x, y, h_lambda, cfg.boundary_fraction, value, gradient)
    _, polished_gradient = _objective_batch(polished, y, h_lambda)
    better = np.max(np.abs(polished_gradient), axis=-1) <= np.max(np.abs(gradient), axis=-1)
    x[better] = polished[better]
    return x


def solve_implicit(prob: ImplicitProblem, cfg: SolverConfig = SolverConfig()) -> np.ndarray:
    """Unique chamber point x with x_i - h_lambda sum_{j != i} 1/(x_i - x_j) = y_i."""
    return solve_implicit_batch(prob.y[None, :], prob.h_lambda, cfg)[0]


def step_residual(x: np.ndarray, prob: ImplicitProblem) -> np.ndarray:
    """r_i = x_i - h_lambda sum_{j != i} 1/(x_i - x_j) - sorted(y)_i."""
    x = require_weyl_chamber(x)
    return x - prob.h_lambda * inverse_differences(x).sum(axis=-1) - np.sort(prob.y)
