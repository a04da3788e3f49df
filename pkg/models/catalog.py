"""Built-in coefficient functions and the model catalog.

Coefficients are vectorized scalar functions: they accept a float or a numpy
array and return values of the same shape. Each one records its analytic form
so that exact laws can check whether they apply.
"""
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Sequence

import numpy as np

from models.errors import ModelSpecError
from models.particle_model import ModelSpec

# Catalog keys accepted by build_model and by experiment configs
MODEL_KEYS = ("dyson", "affine-drift", "bounded-smooth")


@dataclass(frozen=True)
class Coefficient:
    """A scalar coefficient b_i or sigma_i with its analytic description."""

    kind: str
    func: Callable[[np.ndarray], np.ndarray]
    params: Dict[str, float] = field(default_factory=dict)
    derivative_func: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        return np.broadcast_to(np.asarray(self.func(y), dtype=float), y.shape)

    @property
    def is_constant(self) -> bool:
        return self.kind in ("zero", "constant")

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or (self.kind == "constant" and self.params.get("value") == 0.0)

    def derivative(self) -> "Coefficient":
        """Return the analytic derivative as a Coefficient."""
        if self.derivative_func is None:
            raise ValueError(f"no analytic derivative registered for {self.kind} coefficient")
        return Coefficient(kind=f"d/dy {self.kind}", func=self.derivative_func, params=dict(self.params))

    @classmethod
    def from_scalar(cls, func: Callable[[float], float], derivative: Optional[Callable[[float], float]] = None) -> "Coefficient":
        """Wrap a plain scalar callable supplied by a library user."""
        vectorized = np.vectorize(func, otypes=[float])
        vectorized_derivative = np.vectorize(derivative, otypes=[float]) if derivative else None
        return cls(kind="custom", func=vectorized, derivative_func=vectorized_derivative)


def zero() -> Coefficient:
    return Coefficient(kind="zero", func=np.zeros_like, params={}, derivative_func=np.zeros_like)


def constant(value: float) -> Coefficient:
    value = float(value)
    return Coefficient(
        kind="constant",
        func=lambda y: np.full_like(y, value),
        params={"value": value},
        derivative_func=np.zeros_like,
    )


def affine(intercept: float, slope: float) -> Coefficient:
    intercept, slope = float(intercept), float(slope)
    return Coefficient(
        kind="affine",
        func=lambda y: intercept + slope * y,
        params={"intercept": intercept, "slope": slope},
        derivative_func=lambda y: np.full_like(y, slope),
    )


def sine(level: float = 2.0, amplitude: float = 0.5) -> Coefficient:
    """level + amplitude * sin(y); bounded, smooth, with bounded derivatives."""
    level, amplitude = float(level), float(amplitude)
    return Coefficient(
        kind="sine",
        func=lambda y: level + amplitude * np.sin(y),
        params={"level": level, "amplitude": amplitude},
        derivative_func=lambda y: amplitude * np.cos(y),
    )


def build_model(
    key: str,
    d: int,
    lam: float,
    v: Optional[Sequence[float]] = None,
    T: float = 1.0,
    sigma: Optional[float] = None,
    drift_intercept: float = 0.0,
    drift_slope: float = 0.0,
):
    """Build a ModelSpec from a catalog key.

    Args:
        key: One of MODEL_KEYS
        d: Particle count
        lam: Repulsion strength
        v: Initial configuration; defaults to 0, 1, ..., d-1
        T: Time horizon
        sigma: Constant diffusion level for "dyson" and "affine-drift"; rejected for "bounded-smooth"
        drift_intercept: Intercept of the "affine-drift" drift
        drift_slope: Slope of the "affine-drift" drift

    Returns:
        ModelSpec instance
    """
    if v is None:
        v = np.arange(d, dtype=float)
    level = 1.0 if sigma is None else float(sigma)

    if key == "dyson":
        drift = [zero() for _ in range(d)]
        diffusion = [constant(level) for _ in range(d)]
    elif key == "affine-drift":
        drift = [affine(drift_intercept, drift_slope) for _ in range(d)]
        diffusion = [constant(level) for _ in range(d)]
    elif key == "bounded-smooth":
        if sigma is not None:
            raise ModelSpecError("model.sigma does not apply to bounded-smooth, whose diffusion is 2 + sin(y) / 2")
        drift = [zero() for _ in range(d)]
        diffusion = [sine(2.0, 0.5) for _ in range(d)]
    else:
        raise KeyError(f"unknown model '{key}'; expected one of {', '.join(MODEL_KEYS)}")

    return ModelSpec(
        d=d,
        lam=lam,
        b=drift,
        sigma=diffusion,
        sigma_prime=[c.derivative() for c in diffusion],
        v=v,
        T=T,
    )


def describe(coefficients: Sequence[Any]) -> str:
    """Short text description of a coefficient list for reports."""
    kinds = []
    for coefficient in coefficients:
        kind = getattr(coefficient, "kind", "custom")
        params = getattr(coefficient, "params", {})
        if params:
            args = ",".join(f"{k}={v:g}" for k, v in params.items())
            kinds.append(f"{kind}({args})")
        else:
            kinds.append(kind)
    unique = sorted(set(kinds))
    return unique[0] if len(unique) == 1 else "[" + "; ".join(kinds) + "]"
