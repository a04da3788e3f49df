"""Monte Carlo estimators, coupled strong errors and convergence-rate fits."""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from models.errors import DegenerateFitError, GridNestingError
from models.implicit_step import SolverConfig
from models.particle_model import ModelSpec, negative_moment_threshold, validate_assumptions
from models.schemes import EULER_MARUYAMA, brownian_increments, coarsen_increments, simulate_batch

logger = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 256
DEFAULT_REFERENCE_RATIO = 16


@dataclass
class MomentEstimate:
    """Sample mean of a moment functional with its standard error."""

    value: float
    std_error: float
    n_paths: int
    functional: str
    p_or_q: float
    t: float
    overflow_count: int = 0
    flags: List[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return self.overflow_count == 0

    @property
    def flag_text(self) -> str:
        return ";".join(self.flags) if self.flags else "ok"


@dataclass
class RateFit:
    """Least-squares fit of log(error) on log(n)."""

    ns: List[int]
    errors: List[float]
    std_errors: List[float]
    slope: float
    intercept: float
    slope_std_error: float = float('nan')

    @property
    def l2_order(self) -> float:
        """Order of the root-mean-square error (half the mean-square slope)."""
        return -self.slope / 2.0

    def within(self, band: Tuple[float, float]) -> bool:
        low, high = band
        return low <= self.slope <= high


@dataclass
class StabilityScan:
    """Estimates of one negative moment at an increasing path schedule."""

    estimates: List[MomentEstimate]
    threshold: float
    p: float

    @property
    def within_guarantee(self) -> bool:
        return self.p < self.threshold

    @property
    def label(self) -> str:
        return "within guarantee" if self.within_guarantee else "outside guarantee"

    def ratio(self) -> float:
        """Last estimate over first estimate."""
        first, last = self.estimates[0].value, self.estimates[-1].value
        return last / first if first else math.inf


def _summarize(samples: np.ndarray, functional: str, p_or_q: float, t: float) -> MomentEstimate:
    """Mean and standard error, counting non-finite samples instead of clipping them."""
    finite = np.isfinite(samples)
    overflow = int(samples.size - np.count_nonzero(finite))
    flags = []
    if overflow:
        logger.warning("%s: %d of %d samples overflowed", functional, overflow, samples.size)
        flags.append(f"overflow={overflow}")
        kept = samples[finite]
    else:
        kept = samples
    n = samples.size
    value = float(np.mean(kept)) if kept.size else math.nan
    std_error = float(np.std(kept, ddof=1) / math.sqrt(kept.size)) if kept.size > 1 else 0.0
    return MomentEstimate(
        value=value,
        std_error=std_error,
        n_paths=n,
        functional=functional,
        p_or_q=float(p_or_q),
        t=float(t),
        overflow_count=overflow,
        flags=flags,
    )


def _batches(n_paths: int, batch_size: int) -> List[range]:
    return [range(start, min(start + batch_size, n_paths)) for start in range(0, n_paths, batch_size)]


def _map_batches(work: Callable[[range], np.ndarray], n_paths: int, batch_size: int, threads: int) -> np.ndarray:
    """Run work over fixed path batches and concatenate in path order.

    The batch partition depends only on n_paths and batch_size, so results are
    bit-identical for any thread count.
    """
    batches = _batches(n_paths, batch_size)
    if threads <= 1 or len(batches) == 1:
        parts = [work(batch) for batch in batches]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, batches))
    return np.concatenate(parts, axis=0)


def node_index(t: float, T: float, n_steps: int) -> int:
    """Index k of the grid node t = kT/n; rejects times off the grid."""
    k = t * n_steps / T
    nearest = int(round(k))
    if nearest < 0 or nearest > n_steps or abs(k - nearest) > 1e-9 * max(1.0, k):
        raise ValueError(f"t = {t} is not a node of the {n_steps}-step grid on [0, {T}]")
    return nearest


def simulate_ensemble(
    model: ModelSpec,
    n_steps: int,
    n_paths: int,
    seed: int,
    nodes: Sequence[int],
    scheme: str = EULER_MARUYAMA,
    cfg: SolverConfig = SolverConfig(),
    threads: int = 1,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> np.ndarray:
    """States of replicas 0..n_paths-1 at the given node indices.

    Returns:
        Array of shape (n_paths, len(nodes), d), nodes in the given order
    """
    order = sorted(set(nodes))
    lookup = [order.index(k) for k in nodes]

    def work(batch: range) -> np.ndarray:
        logger.debug("simulating paths %d..%d", batch.start, batch.stop - 1)
        increments = brownian_increments(seed, batch, n_steps, model.d, model.T)
        return simulate_batch(model, scheme, increments, cfg, record=order)

    states = _map_batches(work, n_paths, batch_size, threads)
    return states[:, lookup, :]


def gap_moment_from_states(states: np.ndarray, p: float, pair: Tuple[int, int], t: float) -> MomentEstimate:
    """Mean of (x_j - x_i)^(-p) over rows of states (shape (P, d))."""
    i, j = pair
    gaps = states[:, j] - states[:, i]
    with np.errstate(over="ignore", divide="ignore"):
        samples = gaps ** (-float(p))
    return _summarize(samples, f"gap[{i},{j}]^-p", p, t)


def even_moment_from_states(states: np.ndarray, q: float, t: float) -> MomentEstimate:
    """Mean of |x|^(2q) over rows of states (shape (P, d))."""
    with np.errstate(over="ignore"):
        samples = np.sum(states ** 2, axis=-1) ** float(q)
    return _summarize(samples, "|X|^2q", q, t)


def estimate_gap_negative_moment(
    model: ModelSpec,
    p: float,
    t: float,
    pair: Tuple[int, int],
    n_steps: int,
    n_paths: int,
    seed: int,
    cfg: SolverConfig = SolverConfig(),
    threads: int = 1,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> MomentEstimate:
    """Estimate E[(X_j(t) - X_i(t))^(-p)] from semi-implicit EM paths.

    Non-positive p gives ordinary moments of the gap (p = -2 is the mean square).
    """
    i, j = pair
    if not 0 <= i < j < model.d:
        raise ValueError(f"pair must satisfy 0 <= i < j < d, got {pair}")
    k = node_index(t, model.T, n_steps)
    states = simulate_ensemble(model, n_steps, n_paths, seed, [k], EULER_MARUYAMA, cfg, threads, batch_size)
    return gap_moment_from_states(states[:, 0, :], p, pair, t)


def estimate_even_moment_curve(
    model: ModelSpec,
    q: float,
    times: Sequence[float],
    n_steps: int,
    n_paths: int,
    seed: int,
    cfg: SolverConfig = SolverConfig(),
    threads: int = 1,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> List[MomentEstimate]:
    """E|X(t)|^(2q) at several grid times from a single ensemble."""
    nodes = [node_index(t, model.T, n_steps) for t in times]
    states = simulate_ensemble(model, n_steps, n_paths, seed, nodes, EULER_MARUYAMA, cfg, threads, batch_size)
    return [even_moment_from_states(states[:, m, :], q, t) for m, t in enumerate(times)]


def estimate_even_moment(
    model: ModelSpec,
    q: float,
    t: float,
    n_steps: int,
    n_paths: int,
    seed: int,
    cfg: SolverConfig = SolverConfig(),
    threads: int = 1,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> MomentEstimate:
    """Estimate E|X(t)|^(2q) from semi-implicit EM paths."""
    if not q > 0:
        raise ValueError("q must be positive")
    return estimate_even_moment_curve(model, q, [t], n_steps, n_paths, seed, cfg, threads, batch_size)[0]


def estimates_agree(first: MomentEstimate, second: MomentEstimate, n_sigma: float = 3.0) -> bool:
    """Whether two estimates differ by at most n_sigma combined standard errors."""
    combined = math.hypot(first.std_error, second.std_error)
    return abs(first.value - second.value) <= n_sigma * combined


def _check_nesting(ns: Sequence[int], n_ref: int, min_ratio: int) -> None:
    def power_of_two(n: int) -> bool:
        return n >= 1 and n & (n - 1) == 0

    if not power_of_two(n_ref):
        raise GridNestingError(f"n_ref must be a power of two, got {n_ref}")
    for n in ns:
        if not power_of_two(n) or n_ref % n:
            raise GridNestingError(f"step count {n} is not a power of two dividing n_ref = {n_ref}")
    if n_ref < min_ratio * max(ns):
        raise GridNestingError(f"n_ref = {n_ref} is below {min_ratio} x max(ns) = {min_ratio * max(ns)}")


def mean_square_errors(
    model: ModelSpec,
    scheme: str,
    ns: Sequence[int],
    n_ref: int,
    n_paths: int,
    seed: int,
    cfg: SolverConfig = SolverConfig(),
    threads: int = 1,
    batch_size: int = DEFAULT_BATCH_SIZE,
    min_ratio: int = DEFAULT_REFERENCE_RATIO,
) -> Tuple[np.ndarray, np.ndarray]:
    """Coupled strong errors against a same-path reference.

    For each n the error is the largest, over the nodes of the n-step grid, of
    the path-averaged |X_ref(t_k) - X_n(t_k)|^2. Coarse increments come from
    repeated pairwise summation of the reference increments.

    Returns:
        Tuple of (mse, std_error) arrays aligned with ns
    """
    ns = [int(n) for n in ns]
    if not ns:
        raise GridNestingError("ns must not be empty")
    _check_nesting(ns, n_ref, min_ratio)
    # Reference is kept only on the nodes of the finest tested grid
    stride = n_ref // max(ns)
    record = list(range(0, n_ref + 1, stride))

    def work(batch: range) -> np.ndarray:
        logger.debug("coupled errors for paths %d..%d", batch.start, batch.stop - 1)
        fine = brownian_increments(seed, batch, n_ref, model.d, model.T)
        reference = simulate_batch(model, scheme, fine, cfg, record=record)
        levels = {}
        increments, n = fine, n_ref
        while n >= min(ns):
            if n in ns:
                levels[n] = increments
            if n == 1:
                break
            increments, n = coarsen_increments(increments), n // 2
        out = np.empty((len(batch), len(ns), max(ns)))
        out.fill(np.nan)
        for m, n in enumerate(ns):
            coarse = simulate_batch(model, scheme, levels[n], cfg)[:, 1:, :]
            ref_at_nodes = reference[:, (max(ns) // n)::(max(ns) // n), :]
            out[:, m, :n] = np.sum((ref_at_nodes - coarse) ** 2, axis=-1)
        return out

    squared = _map_batches(work, n_paths, batch_size, threads)
    mse = np.empty(len(ns))
    std_error = np.empty(len(ns))
    for m, n in enumerate(ns):
        per_node = squared[:, m, :n]
        means = per_node.mean(axis=0)
        worst = int(np.argmax(means))
        mse[m] = means[worst]
        std_error[m] = per_node[:, worst].std(ddof=1) / math.sqrt(n_paths) if n_paths > 1 else 0.0
    return mse, std_error


def fit_loglog(ns: Sequence[float], errors: Sequence[float], std_errors: Optional[Sequence[float]] = None) -> RateFit:
    """Ordinary least squares of log(error) on log(n).

    Raises:
        DegenerateFitError: Fewer than three points, non-positive values,
            mismatched lengths or constant n
    """
    ns_arr = np.asarray(ns, dtype=float)
    err_arr = np.asarray(errors, dtype=float)
    if ns_arr.shape != err_arr.shape:
        raise DegenerateFitError("ns and errors must have the same length")
    if ns_arr.size < 3:
        raise DegenerateFitError(f"need at least 3 points to fit a rate, got {ns_arr.size}")
    if np.any(ns_arr <= 0) or np.any(err_arr <= 0):
        raise DegenerateFitError("ns and errors must be positive")
    if np.all(ns_arr == ns_arr[0]):
        raise DegenerateFitError("all step counts are equal")
    result = stats.linregress(np.log(ns_arr), np.log(err_arr))
    std = list(std_errors) if std_errors is not None else [float('nan')] * ns_arr.size
    return RateFit(
        ns=[int(n) if float(n).is_integer() else float(n) for n in ns_arr],
        errors=err_arr.tolist(),
        std_errors=[float(s) for s in std],
        slope=float(result.slope),
        intercept=float(result.intercept),
        slope_std_error=float(result.stderr),
    )


def strong_error_curve(
    model: ModelSpec,
    scheme: str,
    ns: Sequence[int],
    n_ref: int,
    n_paths: int,
    seed: int,
    cfg: SolverConfig = SolverConfig(),
    threads: int = 1,
    batch_size: int = DEFAULT_BATCH_SIZE,
    min_ratio: int = DEFAULT_REFERENCE_RATIO,
) -> RateFit:
    """Mean-square strong errors for each n in ns and their log-log slope."""
    if len(ns) < 3:
        raise DegenerateFitError(f"need at least 3 step counts to fit a rate, got {len(ns)}")
    mse, std_error = mean_square_errors(model, scheme, ns, n_ref, n_paths, seed, cfg, threads, batch_size, min_ratio)
    fit = fit_loglog(ns, mse, std_error)
    logger.info("%s strong error slope %.4f (L2 order %.3f) over ns=%s", scheme, fit.slope, fit.l2_order, list(ns))
    return fit


def negative_moment_stability_scan(
    model: ModelSpec,
    p: float,
    t: float,
    n_paths_schedule: Sequence[int],
    n_steps: int,
    seed: int,
    pair: Tuple[int, int] = (0, 1),
    sup_sigma_sq: Optional[float] = None,
    cfg: SolverConfig = SolverConfig(),
    threads: int = 1,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> StabilityScan:
    """Negative-moment estimates on nested path sets of increasing size.

    The estimate for a schedule entry m uses replicas 0..m-1 of one ensemble,
    so the sets are nested and the scan is reproducible.
    """
    schedule = [int(m) for m in n_paths_schedule]
    if not schedule or any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("n_paths_schedule must be a non-empty increasing list")
    if sup_sigma_sq is None:
        sup_sigma_sq = validate_assumptions(model, np.linspace(-10.0, 10.0, 2001), pair_samples=0).sup_sigma_sq
    threshold = negative_moment_threshold(model.lam, sup_sigma_sq)

    k = node_index(t, model.T, n_steps)
    states = simulate_ensemble(model, n_steps, schedule[-1], seed, [k], EULER_MARUYAMA, cfg, threads, batch_size)
    estimates = [gap_moment_from_states(states[:m, 0, :], p, pair, t) for m in schedule]
    scan = StabilityScan(estimates=estimates, threshold=threshold, p=float(p))
    if not scan.within_guarantee:
        logger.warning("p = %g is not below the threshold %.6g: scan is outside guarantee", p, threshold)
        for estimate in estimates:
            estimate.flags.append("outside-guarantee")
    return scan
