"""Experiment config parsing and rendering.

Configs are flat `section.key=value` text files read with python-dotenv.
Sections are the dotted key prefixes; lines starting with `#` are comments.
"""
import re
import unicodedata
from dataclasses import dataclass, fields, replace
from io import StringIO
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

from dotenv import dotenv_values

from models.catalog import MODEL_KEYS
from models.errors import ConfigError
from models.schemes import SCHEMES


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment settings."""

    # model
    model: str = "dyson"
    d: int = 2
    lam: float = 1.0
    v: Optional[Tuple[float, ...]] = None
    T: float = 1.0
    sigma: Optional[float] = None
    drift_intercept: float = 0.0
    drift_slope: float = 0.0
    # scheme
    scheme: str = "semi-implicit-em"
    n_steps: int = 1024
    path_index: int = 0
    # convergence
    ns: Tuple[int, ...] = (16, 32, 64, 128, 256, 512)
    n_ref: int = 16384
    slope_band: Optional[Tuple[float, ...]] = None
    # moments
    p: Tuple[float, ...] = (1.0,)
    q: Tuple[float, ...] = (1.0,)
    t: Optional[float] = None
    pair: Tuple[int, ...] = (0, 1)
    # validate
    sample_min: float = -10.0
    sample_max: float = 10.0
    sample_count: int = 2001
    pair_samples: int = 1000
    # identity
    identity_samples: int = 1000
    # run
    seed: int = 0
    n_paths: int = 1000
    threads: int = 1
    output_path: str = "runs"

    @property
    def moment_time(self) -> float:
        return self.T if self.t is None else self.t


def clean_text(value: Any) -> str:
    """Normalize a raw config value."""
    if value is None:
        return ""
    text = unicodedata.normalize("NFKC", str(value))
    text = text.replace("−", "-")  # minus sign
    return re.sub(r"\s+", " ", text).strip()


def _split(text: str) -> List[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _as_int(text: str) -> int:
    return int(text)


def _as_float(text: str) -> float:
    return float(text)


def _as_str(text: str) -> str:
    return text


def _as_float_list(text: str) -> Tuple[float, ...]:
    return tuple(float(part) for part in _split(text))


def _as_int_list(text: str) -> Tuple[int, ...]:
    return tuple(int(part) for part in _split(text))


def _render_scalar(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _render(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, tuple):
        return ",".join(_render_scalar(item) for item in value)
    return _render_scalar(value)


# (config key, dataclass field, converter, optional)
SCHEMA: List[Tuple[str, str, Callable[[str], Any], bool]] = [
    ("model.name", "model", _as_str, False),
    ("model.d", "d", _as_int, False),
    ("model.lambda", "lam", _as_float, False),
    ("model.v", "v", _as_float_list, True),
    ("model.T", "T", _as_float, False),
    ("model.sigma", "sigma", _as_float, True),
    ("model.drift_intercept", "drift_intercept", _as_float, False),
    ("model.drift_slope", "drift_slope", _as_float, False),
    ("scheme.kind", "scheme", _as_str, False),
    ("scheme.n_steps", "n_steps", _as_int, False),
    ("scheme.path_index", "path_index", _as_int, False),
    ("convergence.ns", "ns", _as_int_list, False),
    ("convergence.n_ref", "n_ref", _as_int, False),
    ("convergence.slope_band", "slope_band", _as_float_list, True),
    ("moments.p", "p", _as_float_list, False),
    ("moments.q", "q", _as_float_list, False),
    ("moments.t", "t", _as_float, True),
    ("moments.pair", "pair", _as_int_list, False),
    ("validate.sample_min", "sample_min", _as_float, False),
    ("validate.sample_max", "sample_max", _as_float, False),
    ("validate.sample_count", "sample_count", _as_int, False),
    ("validate.pair_samples", "pair_samples", _as_int, False),
    ("identity.samples", "identity_samples", _as_int, False),
    ("run.seed", "seed", _as_int, False),
    ("run.paths", "n_paths", _as_int, False),
    ("run.threads", "threads", _as_int, False),
    ("run.out", "output_path", _as_str, False),
]
SCHEMA_BY_KEY = {key: (name, convert, optional) for key, name, convert, optional in SCHEMA}


def check_config(config: ExperimentConfig) -> ExperimentConfig:
    """Validate cross-field constraints; returns the config unchanged."""
    if config.model not in MODEL_KEYS:
        raise ConfigError(f"model.name must be one of {', '.join(MODEL_KEYS)}, got '{config.model}'")
    if config.scheme not in SCHEMES:
        raise ConfigError(f"scheme.kind must be one of {', '.join(SCHEMES)}, got '{config.scheme}'")
    if config.d < 2:
        raise ConfigError("model.d must be at least 2")
    if config.v is not None and len(config.v) != config.d:
        raise ConfigError(f"model.v has {len(config.v)} entries, model.d is {config.d}")
    if config.slope_band is not None and len(config.slope_band) != 2:
        raise ConfigError("convergence.slope_band needs exactly two values")
    if len(config.pair) != 2:
        raise ConfigError("moments.pair needs exactly two indices")
    if config.n_paths < 1 or config.threads < 1 or config.n_steps < 1:
        raise ConfigError("run.paths, run.threads and scheme.n_steps must be positive")
    if config.seed < 0:
        raise ConfigError("run.seed must be non-negative")
    return config


def parse_config(source: Union[str, Path, None] = None, text: Optional[str] = None) -> ExperimentConfig:
    """Parse an experiment config from a file path or from text.

    Args:
        source: Path to a config file
        text: Config text (used when source is None)

    Returns:
        ExperimentConfig with defaults for missing keys

    Raises:
        ConfigError: Unknown key, unparseable value or violated constraint
    """
    if source is not None:
        path = Path(source)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        raw = dotenv_values(dotenv_path=path, interpolate=False)
    else:
        raw = dotenv_values(stream=StringIO(text or ""), interpolate=False)

    values: Dict[str, Any] = {}
    for key, raw_value in raw.items():
        if key not in SCHEMA_BY_KEY:
            raise ConfigError(f"unknown config key '{key}'")
        name, convert, optional = SCHEMA_BY_KEY[key]
        value = clean_text(raw_value)
        if not value:
            if not optional:
                raise ConfigError(f"config key '{key}' needs a value")
            values[name] = None
            continue
        try:
            values[name] = convert(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for '{key}': {value!r}") from exc

    return check_config(ExperimentConfig(**values))


def render_config(config: ExperimentConfig) -> str:
    """Render a config as key-value text; parse_config(text=...) inverts it."""
    lines = []
    section = None
    for key, name, _, _ in SCHEMA:
        current = key.split(".", 1)[0]
        if current != section:
            if section is not None:
                lines.append("")
            lines.append(f"# [{current}]")
            section = current
        lines.append(f"{key}={_render(getattr(config, name))}")
    return "\n".join(lines) + "\n"


def apply_overrides(config: ExperimentConfig, **overrides: Any) -> ExperimentConfig:
    """Replace fields whose override is not None (command-line flags win)."""
    known = {f.name for f in fields(ExperimentConfig)}
    changes = {k: v for k, v in overrides.items() if v is not None}
    unknown = set(changes) - known
    if unknown:
        raise ConfigError(f"unknown override(s): {', '.join(sorted(unknown))}")
    return check_config(replace(config, **changes))
