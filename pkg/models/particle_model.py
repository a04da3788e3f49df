"""Particle system model, drift evaluation and assumption checks."""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from models.errors import (
    DomainViolationError,
    MissingDerivativeError,
    ModelSpecError,
    NonFiniteInputError,
)

logger = logging.getLogger(__name__)

# Rate conditions for the semi-implicit schemes: lambda > 37/2 * ||sigma||
RATE_CONDITION_FACTOR = 37.0 / 2.0

ScalarFunction = Callable[[np.ndarray], np.ndarray]


def require_weyl_chamber(x: np.ndarray) -> np.ndarray:
    """Validate that the last axis of x is finite and strictly increasing.

    Args:
        x: Array of shape (..., d)

    Returns:
        x as a float array

    Raises:
        NonFiniteInputError: If any entry is NaN or infinite
        DomainViolationError: If some row is not strictly increasing
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NonFiniteInputError("configuration contains non-finite entries")
    if x.shape[-1] > 1 and not np.all(np.diff(x, axis=-1) > 0):
        raise DomainViolationError("configuration is not strictly increasing")
    return x


def _as_coefficients(functions: Sequence[ScalarFunction], name: str) -> List[ScalarFunction]:
    """Vectorize plain scalar callables; catalog coefficients pass through."""
    from models.catalog import Coefficient

    wrapped = []
    for f in functions:
        if isinstance(f, Coefficient):
            wrapped.append(f)
        elif callable(f):
            wrapped.append(Coefficient.from_scalar(f))
        else:
            raise ModelSpecError(f"{name} entries must be callable, got {type(f).__name__}")
    return wrapped


@dataclass(eq=False)
class ModelSpec:
    """Coefficients, initial configuration and horizon of the particle system.

    dX_i = (sum_{j != i} lam / (X_i - X_j) + b_i(X_i)) dt + sigma_i(X_i) dB_i
    """

    d: int
    lam: float
    b: Sequence[ScalarFunction]
    sigma: Sequence[ScalarFunction]
    v: np.ndarray
    T: float = 1.0
    sigma_prime: Optional[Sequence[ScalarFunction]] = None

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise ModelSpecError(f"d must be an integer >= 2, got {self.d}")
        self.d = int(self.d)
        if not self.lam > 0:
            raise ModelSpecError(f"lambda must be positive, got {self.lam}")
        if not self.T > 0:
            raise ModelSpecError(f"T must be positive, got {self.T}")
        if len(self.b) != self.d or len(self.sigma) != self.d:
            raise ModelSpecError("b and sigma must each hold d coefficient functions")
        if self.sigma_prime is not None and len(self.sigma_prime) != self.d:
            raise ModelSpecError("sigma_prime must hold d derivative functions")
        self.b = _as_coefficients(self.b, "b")
        self.sigma = _as_coefficients(self.sigma, "sigma")
        if self.sigma_prime is not None:
            self.sigma_prime = _as_coefficients(self.sigma_prime, "sigma_prime")
        self.lam = float(self.lam)
        self.T = float(self.T)
        v = np.asarray(self.v, dtype=float)
        if v.shape != (self.d,):
            raise ModelSpecError(f"v must have length {self.d}, got shape {v.shape}")
        try:
            self.v = require_weyl_chamber(v)
        except (DomainViolationError, NonFiniteInputError) as exc:
            raise ModelSpecError(f"initial configuration v: {exc}") from exc

    def _evaluate(self, functions: Sequence[ScalarFunction], x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        columns = [
            np.broadcast_to(np.asarray(f(x[..., i]), dtype=float), x[..., i].shape)
            for i, f in enumerate(functions)
        ]
        return np.stack(columns, axis=-1)

    def drift_terms(self, x: np.ndarray) -> np.ndarray:
        """b_i(x_i) for every coordinate of x (shape (..., d))."""
        return self._evaluate(self.b, x)

    def diffusion_terms(self, x: np.ndarray) -> np.ndarray:
        """sigma_i(x_i) for every coordinate of x."""
        return self._evaluate(self.sigma, x)

    def diffusion_derivative_terms(self, x: np.ndarray) -> np.ndarray:
        """sigma'_i(x_i); requires sigma_prime."""
        if self.sigma_prime is None:
            raise MissingDerivativeError("model has no sigma_prime")
        return self._evaluate(self.sigma_prime, x)

    @property
    def drift_is_zero(self) -> bool:
        return all(getattr(f, "is_zero", False) for f in self.b)

    @property
    def diffusion_is_constant(self) -> bool:
        return all(getattr(f, "is_constant", False) for f in self.sigma)

    def constant_sigma_levels(self) -> np.ndarray:
        """Constant diffusion levels, valid only when diffusion_is_constant."""
        return np.array([f.params.get("value", 0.0) for f in self.sigma], dtype=float)


@dataclass(eq=False)
class ParticleState:
    """Time-stamped point of the Weyl chamber."""

    t: float
    x: np.ndarray

    def __post_init__(self):
        self.t = float(self.t)
        self.x = require_weyl_chamber(self.x)


@dataclass
class AssumptionReport:
    """Empirical check of the structural assumptions on a sample grid.

    Every estimate is a maximum over sample_grid, so refining the grid can
    only increase it.
    """

    sup_b: float
    sup_sigma_sq: float
    ellipticity_L_sq: float
    ellipticity_L: float
    b4_holds: bool
    b5_holds: bool
    lambda_: float
    lipschitz_estimates: Dict[str, float]
    holder_half_estimates: Dict[str, float]
    sample_grid: np.ndarray
    zero_sigma_points: List[float] = field(default_factory=list)
    b5_violations: List[str] = field(default_factory=list)
    label: str = "empirical"

    @property
    def ellipticity_bounded(self) -> bool:
        return math.isfinite(self.ellipticity_L_sq)

    @property
    def bounded_drift(self) -> bool:
        return math.isfinite(self.sup_b)

    @property
    def all_hold(self) -> bool:
        return self.b4_holds and self.b5_holds and self.ellipticity_bounded and self.bounded_drift

    @property
    def sup_sigma(self) -> float:
        return math.sqrt(self.sup_sigma_sq)

    @property
    def lambda_over_sigma_sq(self) -> float:
        return self.lambda_ / self.sup_sigma_sq if self.sup_sigma_sq > 0 else math.inf

    @property
    def lambda_over_sigma(self) -> float:
        return self.lambda_ / self.sup_sigma if self.sup_sigma_sq > 0 else math.inf


def _pair_differences(x: np.ndarray) -> np.ndarray:
    """D[..., i, j] = x_i - x_j."""
    return x[..., :, None] - x[..., None, :]


def inverse_differences(x: np.ndarray) -> np.ndarray:
    """1 / (x_i - x_j) with zeros on the diagonal."""
    diff = _pair_differences(x)
    d = x.shape[-1]
    off_diagonal = ~np.eye(d, dtype=bool)
    inverse = np.zeros_like(diff)
    np.divide(1.0, diff, out=inverse, where=np.broadcast_to(off_diagonal, diff.shape))
    return inverse


def interaction_sums(x: np.ndarray) -> np.ndarray:
    """sum_{j != i} 1 / (x_i - x_j) along the last axis, no domain check."""
    return inverse_differences(x).sum(axis=-1)


def interaction_drift(x: np.ndarray, lam: float) -> np.ndarray:
    """Singular repulsion g_i = sum_{j != i} lam / (x_i - x_j).

    Args:
        x: Strictly increasing vector (or batch of vectors on the last axis)
        lam: Repulsion strength

    Returns:
        Array of the same shape as x
    """
    x = require_weyl_chamber(x)
    return lam * interaction_sums(x)


def full_drift(x: np.ndarray, model: ModelSpec) -> np.ndarray:
    """Interaction drift plus the coordinate drifts b_i(x_i)."""
    return interaction_drift(x, model.lam) + model.drift_terms(x)


def pairwise_identity_terms(x: np.ndarray) -> np.ndarray:
    """Summands of the pairwise identity for all m > k and i not in {m, k}.

    Each admissible index triple contributes
    1/((x_m - x_i)(x_m - x_k)) and -1/((x_k - x_i)(x_m - x_k)).
    """
    x = require_weyl_chamber(np.asarray(x, dtype=float).ravel())
    d = x.size
    if d < 3:
        return np.zeros(0)
    m, k, i = np.meshgrid(np.arange(d), np.arange(d), np.arange(d), indexing="ij")
    mask = (m > k) & (i != m) & (i != k)
    m, k, i = m[mask], k[mask], i[mask]
    gap_mk = x[m] - x[k]
    first = 1.0 / ((x[m] - x[i]) * gap_mk)
    second = -1.0 / ((x[k] - x[i]) * gap_mk)
    return np.concatenate([first, second])


def pairwise_identity_residual(x: np.ndarray) -> float:
    """Exactly rounded sum of the pairwise identity; zero for every x in the chamber."""
    return math.fsum(pairwise_identity_terms(x).tolist())


def identity_relative_residual(x: np.ndarray) -> float:
    """|residual| divided by the largest absolute summand (0 for an empty sum)."""
    terms = pairwise_identity_terms(x)
    if terms.size == 0:
        return 0.0
    return abs(math.fsum(terms.tolist())) / float(np.max(np.abs(terms)))


def _lipschitz_estimate(values: np.ndarray, points: np.ndarray, left: np.ndarray, right: np.ndarray, power: float = 1.0) -> float:
    dx = np.abs(points[left] - points[right])
    keep = dx > 0
    if not np.any(keep):
        return 0.0
    dv = np.abs(values[left] - values[right])
    return float(np.max(dv[keep] / dx[keep] ** power))


def validate_assumptions(
    model: ModelSpec,
    sample_points: Sequence[float],
    pair_samples: int = 1000,
    seed: int = 0,
) -> AssumptionReport:
    """Estimate the structural assumption quantities on a sample grid.

    Args:
        model: Model to check
        sample_points: Evaluation points on the real line
        pair_samples: Number of random point pairs for Lipschitz estimates,
            in addition to consecutive sorted points
        seed: Seed for the random pairs

    Returns:
        AssumptionReport labelled "empirical"
    """
    points = np.unique(np.asarray(sample_points, dtype=float).ravel())
    if points.size == 0:
        raise ValueError("sample_points must be non-empty")

    grid = np.broadcast_to(points[:, None], (points.size, model.d))
    drift = model.drift_terms(grid)
    diffusion = model.diffusion_terms(grid)

    sup_b = float(np.max(np.abs(drift)))
    sup_sigma_sq = float(np.max(diffusion ** 2))

    # Ellipticity: zeros of sigma are reported, not raised
    zero_mask = diffusion == 0
    zero_sigma_points = sorted({float(p) for p in points[np.any(zero_mask, axis=1)]})
    if zero_sigma_points:
        logger.warning("sigma vanishes at %d sample points; ellipticity fails", len(zero_sigma_points))
        ellipticity_L_sq = math.inf
    else:
        ellipticity_L_sq = float(np.max(1.0 / diffusion ** 2))

    # Ordering of drifts: b_i <= b_j for i < j at every sample
    b5_violations = []
    for i in range(model.d - 1):
        for j in range(i + 1, model.d):
            bad = drift[:, i] > drift[:, j]
            if np.any(bad):
                at = float(points[np.argmax(bad)])
                b5_violations.append(f"b_{i + 1}({at:g}) > b_{j + 1}({at:g})")

    # Consecutive sorted points plus seeded random pairs
    rng = np.random.default_rng(seed)
    left = np.arange(points.size - 1)
    right = left + 1
    if pair_samples > 0 and points.size > 1:
        left = np.concatenate([left, rng.integers(0, points.size, pair_samples)])
        right = np.concatenate([right, rng.integers(0, points.size, pair_samples)])

    lipschitz: Dict[str, float] = {}
    holder: Dict[str, float] = {}
    for i in range(model.d):
        lipschitz[f"b_{i + 1}"] = _lipschitz_estimate(drift[:, i], points, left, right)
        lipschitz[f"sigma_{i + 1}"] = _lipschitz_estimate(diffusion[:, i], points, left, right)
        holder[f"sigma_{i + 1}"] = _lipschitz_estimate(diffusion[:, i], points, left, right, power=0.5)

    return AssumptionReport(
        sup_b=sup_b,
        sup_sigma_sq=sup_sigma_sq,
        ellipticity_L_sq=ellipticity_L_sq,
        ellipticity_L=math.sqrt(ellipticity_L_sq),
        b4_holds=sup_sigma_sq <= 2.0 * model.lam,
        b5_holds=not b5_violations,
        lambda_=model.lam,
        lipschitz_estimates=lipschitz,
        holder_half_estimates=holder,
        sample_grid=points,
        zero_sigma_points=zero_sigma_points,
        b5_violations=b5_violations,
    )


def negative_moment_threshold(lam: float, sup_sigma_sq: float) -> float:
    """Upper end (1/6)(2 lam / ||sigma||^2 - 1) of the admissible negative-moment orders.

    A value <= 0 means no positive order is covered. Whether the endpoint is
    admissible is left to the caller.
    """
    return (2.0 * lam / sup_sigma_sq - 1.0) / 6.0


def prior_negative_moment_threshold(lam: float, sup_sigma_sq: float, d: int) -> float:
    """Earlier admissible range bound 3 lam / (d ||sigma||^2) - 1, which degrades with d."""
    return 3.0 * lam / (d * sup_sigma_sq) - 1.0


def strong_rate_conditions(lam: float, sup_sigma: float, drift_is_zero: bool = False) -> Dict[str, object]:
    """Both readings of the rate condition lambda > 37/2 ||sigma||.

    Args:
        lam: Repulsion strength
        sup_sigma: Estimated sup of |sigma|
        drift_is_zero: Whether b == 0, in which case ellipticity is not needed

    Returns:
        Dictionary with the two boolean readings, their ratios and whether
        ellipticity is required
    """
    sup_sigma_sq = sup_sigma ** 2
    return {
        "unsquared_holds": lam > RATE_CONDITION_FACTOR * sup_sigma,
        "squared_holds": lam > RATE_CONDITION_FACTOR * sup_sigma_sq,
        "lambda_over_sigma": lam / sup_sigma if sup_sigma > 0 else math.inf,
        "lambda_over_sigma_sq": lam / sup_sigma_sq if sup_sigma_sq > 0 else math.inf,
        "requires_ellipticity": not drift_is_zero,
    }
