"""Shared plumbing for the toolkit commands: options, config resolution and manifests."""
import time
from dataclasses import replace
from pathlib import Path
from typing import Dict, Optional

import click
from flask import current_app

from models.catalog import build_model
from models.errors import ConfigError, ModelSpecError
from models.implicit_step import SolverConfig
from models.particle_model import ModelSpec
from utils.config_parser import ExperimentConfig, apply_overrides, parse_config
from utils.export_csv import get_output_filename, write_text
from utils.manifest import RunManifest, write_manifest


def experiment_options(f):
    """Add the global flags shared by every subcommand.

    Usage:
        @bp.cli.command('simulate')
        @experiment_options
        def simulate(config_path, seed, paths, out, threads):
            ...
    """
    options = [
        click.option('--config', 'config_path', type=click.Path(dir_okay=False), default=None,
                     help='Experiment config file (section.key=value).'),
        click.option('--seed', type=click.IntRange(min=0), default=None, help='Root seed.'),
        click.option('--paths', type=click.IntRange(min=1), default=None, help='Monte Carlo paths.'),
        click.option('--out', type=click.Path(file_okay=False), default=None, help='Output directory.'),
        click.option('--threads', type=click.IntRange(min=1), default=None, help='Worker threads.'),
    ]

    for option in reversed(options):
        f = option(f)
    return f


def resolve_experiment(config_path: Optional[str], seed=None, paths=None, out=None, threads=None,
                       **overrides) -> ExperimentConfig:
    """CLI flags over config file over defaults.

    Without a config file the application settings supply the thread count
    and output directory.

    Raises:
        click.BadParameter: The config cannot be parsed or typed (exit 2)
    """
    try:
        if config_path:
            experiment = parse_config(config_path)
        else:
            experiment = replace(
                ExperimentConfig(),
                threads=current_app.config['DEFAULT_THREADS'],
                output_path=str(current_app.config['OUTPUT_DIR']),
            )
        return apply_overrides(
            experiment,
            seed=seed,
            n_paths=paths,
            output_path=out,
            threads=threads,
            **overrides,
        )
    except ConfigError as exc:
        raise click.BadParameter(str(exc), param_hint="'--config'") from exc


def model_from(experiment: ExperimentConfig) -> ModelSpec:
    """Build the catalog model named by the config."""
    try:
        return build_model(
            experiment.model,
            d=experiment.d,
            lam=experiment.lam,
            v=experiment.v,
            T=experiment.T,
            sigma=experiment.sigma,
            drift_intercept=experiment.drift_intercept,
            drift_slope=experiment.drift_slope,
        )
    except (KeyError, ModelSpecError) as exc:
        raise click.BadParameter(str(exc), param_hint="'--config'") from exc


def solver_config() -> SolverConfig:
    return SolverConfig(
        max_iters=current_app.config['SOLVER_MAX_ITERS'],
        boundary_fraction=current_app.config['SOLVER_BOUNDARY_FRACTION'],
    )


class CommandRun:
    """Collects outputs and flag counts of one command and writes its manifest."""

    def __init__(self, command: str, experiment: ExperimentConfig):
        self.command = command
        self.experiment = experiment
        self.outputs: Dict[str, str] = {}
        self.flags: Dict[str, int] = {}
        self._started = time.perf_counter()

    @property
    def out_dir(self) -> Path:
        return Path(self.experiment.output_path)

    def write_csv(self, name: str, content: str) -> Path:
        path = write_text(self.out_dir / get_output_filename(self.command, self.experiment.seed), content)
        self.outputs[name] = str(path)
        return path

    def count(self, flag: str, amount: int = 1) -> None:
        self.flags[flag] = self.flags.get(flag, 0) + int(amount)

    def finish(self, exit_code: int = 0) -> None:
        """Write the manifest, then exit with exit_code if it is non-zero."""
        manifest = RunManifest(
            command=self.command,
            config=self.experiment,
            version=current_app.config['TOOLKIT_VERSION'],
            duration_seconds=time.perf_counter() - self._started,
            exit_code=exit_code,
            outputs=self.outputs,
            flags=self.flags,
        )
        path = write_manifest(manifest, self.out_dir)
        current_app.logger.info('%s finished with exit code %d (manifest %s)', self.command, exit_code, path)
        if exit_code:
            click.get_current_context().exit(exit_code)
