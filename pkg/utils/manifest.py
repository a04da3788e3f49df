"""Run manifests: resolved config, version, timing, outputs and flag counts."""
from dataclasses import dataclass, field
from io import StringIO
from pathlib import Path
from typing import Dict

from dotenv import dotenv_values

from utils.config_parser import ExperimentConfig, render_config
from utils.export_csv import write_text


@dataclass
class RunManifest:
    """Record of one command run."""

    command: str
    config: ExperimentConfig
    version: str
    duration_seconds: float = 0.0
    exit_code: int = 0
    outputs: Dict[str, str] = field(default_factory=dict)
    flags: Dict[str, int] = field(default_factory=dict)


def render_manifest(manifest: RunManifest) -> str:
    """Flat key-value text; config keys are prefixed with `config.`."""
    lines = [
        "# [toolkit]",
        f"toolkit.version={manifest.version}",
        "",
        "# [run]",
        f"run.command={manifest.command}",
        f"run.duration_seconds={manifest.duration_seconds:.3f}",
        f"run.exit_code={manifest.exit_code}",
        "",
    ]
    for line in render_config(manifest.config).splitlines():
        if not line:
            lines.append("")
        elif line.startswith("#"):
            lines.append(line.replace("# [", "# [config.", 1))
        else:
            lines.append(f"config.{line}")
    lines.append("")
    lines.append("# [output]")
    lines.extend(f"output.{name}={path}" for name, path in sorted(manifest.outputs.items()))
    lines.append("")
    lines.append("# [flags]")
    lines.extend(f"flags.{name}={count}" for name, count in sorted(manifest.flags.items()))
    return "\n".join(lines) + "\n"


def read_manifest(path: Path) -> Dict[str, str]:
    """Key-value pairs of a written manifest."""
    with open(path) as handle:
        return {k: (v or "") for k, v in dotenv_values(stream=StringIO(handle.read()), interpolate=False).items()}


def write_manifest(manifest: RunManifest, out_dir: Path) -> Path:
    """Write `<command>.manifest` into out_dir."""
    return write_text(Path(out_dir) / f"{manifest.command}.manifest", render_manifest(manifest))
