"""CSV export of trajectories, strong-error curves and moment estimates."""
from io import StringIO
from pathlib import Path
from typing import Iterable, Sequence

import pandas as pd

from models.analysis import MomentEstimate, RateFit
from models.schemes import Trajectory

# Full double precision
FLOAT_FORMAT = "%.17g"


def _to_csv(frame: pd.DataFrame) -> str:
    buffer = StringIO()
    frame.to_csv(buffer, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return buffer.getvalue()


def generate_trajectory_csv(trajectory: Trajectory) -> str:
    """Header `t,x1,...,xd`, one row per grid node.

    Args:
        trajectory: Simulated trajectory

    Returns:
        CSV text
    """
    d = trajectory.states.shape[1]
    frame = pd.DataFrame(trajectory.states, columns=[f"x{i + 1}" for i in range(d)])
    frame.insert(0, "t", trajectory.times)
    return _to_csv(frame)


def generate_rate_csv(fit: RateFit) -> str:
    """Header `n,mse,stderr`, one row per step count."""
    frame = pd.DataFrame({
        "n": [int(n) for n in fit.ns],
        "mse": fit.errors,
        "stderr": fit.std_errors,
    })
    return _to_csv(frame)


def generate_moments_csv(estimates: Iterable[MomentEstimate]) -> str:
    """Header `functional,p_or_q,t,value,stderr,n_paths,flags`."""
    rows = [
        {
            "functional": e.functional,
            "p_or_q": e.p_or_q,
            "t": e.t,
            "value": e.value,
            "stderr": e.std_error,
            "n_paths": e.n_paths,
            "flags": e.flag_text,
        }
        for e in estimates
    ]
    columns = ["functional", "p_or_q", "t", "value", "stderr", "n_paths", "flags"]
    return _to_csv(pd.DataFrame(rows, columns=columns))


def generate_identity_csv(max_terms: Sequence[float], residuals: Sequence[float], relative: Sequence[float]) -> str:
    """Header `sample,max_term,residual,relative`, one row per configuration."""
    frame = pd.DataFrame({
        "sample": range(len(relative)),
        "max_term": max_terms,
        "residual": residuals,
        "relative": relative,
    })
    return _to_csv(frame)


def write_text(path: Path, content: str) -> Path:
    """Write content with Unix newlines, creating parent directories."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as handle:
        handle.write(content)
    return path


def get_output_filename(command: str, seed: int) -> str:
    """Standard result file name for a command run."""
    safe = "".join(c for c in command if c.isalnum() or c in ("-", "_")).strip() or "run"
    return f"{safe}_seed{seed}.csv"
