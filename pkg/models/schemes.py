"""Semi-implicit Euler-Maruyama and Milstein time stepping."""
import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from models.errors import GridNestingError, MissingDerivativeError, SimulationStepError, ToolkitError
from models.implicit_step import SolverConfig, solve_implicit_batch
from models.particle_model import ModelSpec, ParticleState, require_weyl_chamber

logger = logging.getLogger(__name__)

EULER_MARUYAMA = "semi-implicit-em"
MILSTEIN = "semi-implicit-milstein"
SCHEMES = (EULER_MARUYAMA, MILSTEIN)


def path_generator(seed: int, path_index: int) -> np.random.Generator:
    """Counter-based Philox stream keyed by (seed, path_index).

    Draws are consumed in (step, coordinate) row-major order, so every
    increment is addressed by (seed, path_index, step, coordinate).
    """
    if seed < 0 or path_index < 0:
        raise ValueError("seed and path_index must be non-negative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(path_index)])))


def brownian_increments(seed: int, path_indices: Iterable[int], n: int, d: int, T: float) -> np.ndarray:
    """N(0, T/n) increments of shape (P, n, d) for the given replicas."""
    if n < 1:
        raise ValueError("n must be at least 1")
    scale = np.sqrt(T / n)
    paths = [path_generator(seed, index).standard_normal((n, d)) * scale for index in path_indices]
    return np.stack(paths) if paths else np.zeros((0, n, d))


def coarsen_increments(increments: np.ndarray) -> np.ndarray:
    """Sum consecutive pairs of steps along axis -2."""
    n = increments.shape[-2]
    if n % 2:
        raise GridNestingError(f"cannot coarsen a grid with an odd number of steps ({n})")
    return increments[..., 0::2, :] + increments[..., 1::2, :]


@dataclass(eq=False)
class BrownianGrid:
    """Per-coordinate Brownian increments of one replica on a uniform grid."""

    n: int
    d: int
    seed: int
    path_index: int
    T: float
    increments: np.ndarray

    @classmethod
    def generate(cls, seed: int, path_index: int, n: int, d: int, T: float = 1.0) -> "BrownianGrid":
        increments = brownian_increments(seed, [path_index], n, d, T)[0]
        return cls(n=n, d=d, seed=seed, path_index=path_index, T=T, increments=increments)

    @property
    def h(self) -> float:
        return self.T / self.n


def coarsen(grid: BrownianGrid) -> BrownianGrid:
    """Grid with n/2 steps whose increment k is the sum of fine increments 2k and 2k+1."""
    increments = coarsen_increments(grid.increments)
    return BrownianGrid(
        n=grid.n // 2,
        d=grid.d,
        seed=grid.seed,
        path_index=grid.path_index,
        T=grid.T,
        increments=increments,
    )


@dataclass(eq=False)
class Trajectory:
    """Grid times t_k = kT/n and the simulated states, one row per node."""

    times: np.ndarray
    states: np.ndarray

    @property
    def n(self) -> int:
        return self.states.shape[0] - 1

    def min_gap(self) -> float:
        return float(np.min(np.diff(self.states, axis=-1)))

    def in_chamber(self) -> bool:
        return bool(np.all(np.diff(self.states, axis=-1) > 0))


def explicit_part(x: np.ndarray, dB: np.ndarray, h: float, model: ModelSpec, scheme: str = EULER_MARUYAMA) -> np.ndarray:
    """Everything of one step except the implicit interaction term.

    y_i = x_i + b_i(x_i) h + sigma_i(x_i) dB_i
          [+ 1/2 sigma_i(x_i) sigma'_i(x_i) (dB_i^2 - h) for Milstein]
    """
    sigma = model.diffusion_terms(x)
    y = x + model.drift_terms(x) * h + sigma * dB
    if scheme == MILSTEIN:
        if model.sigma_prime is None:
            raise MissingDerivativeError("the Milstein scheme needs sigma_prime")
        y = y + 0.5 * sigma * model.diffusion_derivative_terms(x) * (dB * dB - h)
    elif scheme != EULER_MARUYAMA:
        raise ValueError(f"unknown scheme '{scheme}'; expected one of {', '.join(SCHEMES)}")
    return y


def _step(state: ParticleState, dB: np.ndarray, h: float, model: ModelSpec, cfg: SolverConfig, scheme: str) -> ParticleState:
    if not h > 0:
        raise ValueError("h must be positive")
    dB = np.asarray(dB, dtype=float)
    y = explicit_part(state.x[None, :], dB[None, :], h, model, scheme)
    x = solve_implicit_batch(y, h * model.lam, cfg)[0]
    return ParticleState(t=state.t + h, x=x)


def step_semi_implicit_em(state: ParticleState, dB: np.ndarray, h: float, model: ModelSpec, cfg: SolverConfig = SolverConfig()) -> ParticleState:
    """One semi-implicit Euler-Maruyama step."""
    return _step(state, dB, h, model, cfg, EULER_MARUYAMA)


def step_semi_implicit_milstein(state: ParticleState, dB: np.ndarray, h: float, model: ModelSpec, cfg: SolverConfig = SolverConfig()) -> ParticleState:
    """One semi-implicit Milstein step; requires model.sigma_prime."""
    if model.sigma_prime is None:
        raise MissingDerivativeError("the Milstein scheme needs sigma_prime")
    return _step(state, dB, h, model, cfg, MILSTEIN)


def simulate_batch(
    model: ModelSpec,
    scheme: str,
    increments: np.ndarray,
    cfg: SolverConfig = SolverConfig(),
    record: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """Simulate a batch of paths from model.v.

    Args:
        model: Particle model
        scheme: EULER_MARUYAMA or MILSTEIN
        increments: Brownian increments, shape (P, n, d)
        cfg: Implicit solver settings
        record: Node indices to keep (0..n); all nodes when None

    Returns:
        States of shape (P, len(record), d)

    Raises:
        SimulationStepError: A step failed; .step is the 0-based step index
    """
    increments = np.asarray(increments, dtype=float)
    n_paths, n, d = increments.shape
    if d != model.d:
        raise ValueError(f"increments have {d} coordinates, model has {model.d}")
    if scheme == MILSTEIN and model.sigma_prime is None:
        raise MissingDerivativeError("the Milstein scheme needs sigma_prime")
    nodes = list(range(n + 1)) if record is None else sorted(set(int(k) for k in record))
    if nodes and (nodes[0] < 0 or nodes[-1] > n):
        raise ValueError(f"record nodes must lie in 0..{n}")

    h = model.T / n
    h_lambda = h * model.lam
    out = np.empty((n_paths, len(nodes), d))
    position = {k: i for i, k in enumerate(nodes)}

    x = np.broadcast_to(model.v, (n_paths, d)).copy()
    if 0 in position:
        out[:, position[0], :] = x
    last = nodes[-1] if nodes else 0
    for k in range(last):
        try:
            y = explicit_part(x, increments[:, k, :], h, model, scheme)
            x = solve_implicit_batch(y, h_lambda, cfg)
        except ToolkitError as exc:
            logger.warning("%s step %d of %d failed: %s", scheme, k, n, exc)
            raise SimulationStepError(k, exc) from exc
        if k + 1 in position:
            out[:, position[k + 1], :] = x
    return out


def simulate_path(model: ModelSpec, n: int, scheme: str, grid: BrownianGrid, cfg: SolverConfig = SolverConfig()) -> Trajectory:
    """Simulate one trajectory on the grid t_k = kT/n."""
    if grid.n != n or grid.d != model.d:
        raise ValueError(f"grid is {grid.n}x{grid.d}, expected {n}x{model.d}")
    if grid.T != model.T:
        raise ValueError(f"grid horizon T = {grid.T:g} differs from the model horizon T = {model.T:g}")
    states = simulate_batch(model, scheme, grid.increments[None, :, :], cfg)[0]
    require_weyl_chamber(states)
    times = model.T * np.arange(n + 1) / n
    return Trajectory(times=times, states=states)
