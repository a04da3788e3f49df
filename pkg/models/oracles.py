"""Independent reference values for tests and acceptance runs.

Nothing here calls the solver or the schemes: an oracle that shares the code
under test cannot detect its bugs.
"""
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from models.errors import OracleNotApplicableError


@dataclass(frozen=True)
class OracleResult:
    """Comparison of an observed value with an exact expectation."""

    name: str
    expected: float
    observed: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return abs(self.expected - self.observed) <= self.tolerance

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "expected": self.expected,
            "observed": self.observed,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }


def check(name: str, expected: float, observed: float, tolerance: float) -> OracleResult:
    return OracleResult(name=name, expected=float(expected), observed=float(observed), tolerance=float(tolerance))


def exact_second_moment_law(model, t: float) -> float:
    """E|X(t)|^2 = |v|^2 + (lam d (d-1) + sum_i sigma_i^2) t for b == 0 and constant sigma.

    Raises:
        OracleNotApplicableError: The drift is not zero or sigma is not constant
    """
    if not model.drift_is_zero:
        raise OracleNotApplicableError("the exact second-moment law needs b == 0")
    if not model.diffusion_is_constant:
        raise OracleNotApplicableError("the exact second-moment law needs constant sigma")
    levels = model.constant_sigma_levels()
    v = np.asarray(model.v, dtype=float)
    return float(v @ v + (model.lam * model.d * (model.d - 1) + float(levels @ levels)) * t)


def besq_gap_mean(lam: float, sigma_const: float, gap0: float, t: float) -> float:
    """E[(X_2 - X_1)^2(t)] = gap0^2 + (4 lam + 2 sigma^2) t for the two-particle system."""
    return gap0 ** 2 + (4.0 * lam + 2.0 * sigma_const ** 2) * t


def deterministic_gap_recursion(gap0: float, h: float, lam: float, n: int) -> float:
    """Noise-free two-particle gap after n implicit steps.

    Each step solves g^2 - g_prev g - 2 h lam = 0 for its positive root.
    """
    if not gap0 > 0:
        raise ValueError("gap0 must be positive")
    gap = float(gap0)
    for _ in range(int(n)):
        gap = 0.5 * (gap + math.sqrt(gap * gap + 8.0 * h * lam))
    return gap


def ode_gap_solution(gap0: float, lam: float, t: float) -> float:
    """Solution sqrt(gap0^2 + 4 lam t) of g' = 2 lam / g."""
    return math.sqrt(gap0 ** 2 + 4.0 * lam * t)


def finite_difference_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, step: float) -> np.ndarray:
    """Central-difference gradient of a scalar field on the chamber.

    Raises:
        ValueError: Some gap is not larger than 2 * step, so a perturbed
            point could leave the chamber
    """
    x = np.asarray(x, dtype=float)
    if x.size > 1 and np.min(np.diff(x)) <= 2.0 * step:
        raise ValueError(f"step {step} is too large for the smallest gap {np.min(np.diff(x)):.3e}")
    gradient = np.empty_like(x)
    for i in range(x.size):
        forward = x.copy()
        backward = x.copy()
        forward[i] += step
        backward[i] -= step
        gradient[i] = (f(forward) - f(backward)) / (2.0 * step)
    return gradient
