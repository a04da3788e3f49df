"""Assumption checks and the pairwise identity check."""
import math

import click
import numpy as np
from flask import Blueprint, current_app

from commands.common import CommandRun, experiment_options, model_from, resolve_experiment
from models.catalog import describe
from models.particle_model import (
    RATE_CONDITION_FACTOR,
    AssumptionReport,
    identity_relative_residual,
    negative_moment_threshold,
    pairwise_identity_terms,
    prior_negative_moment_threshold,
    strong_rate_conditions,
    validate_assumptions,
)
from utils.export_csv import generate_identity_csv

validation_bp = Blueprint('validation', __name__, cli_group=None)

# Gaps are drawn log-uniformly over this many decades, centred on 1
IDENTITY_DECADES = 6


def _verdict(holds: bool) -> str:
    return 'holds' if holds else 'FAILS'


def render_report(report: AssumptionReport, model, d: int) -> str:
    """Text rendering of an assumption report with the derived thresholds."""
    lam = report.lambda_
    grid = report.sample_grid
    conditions = strong_rate_conditions(lam, report.sup_sigma, model.drift_is_zero)
    lines = [
        f"model: b = {describe(model.b)}, sigma = {describe(model.sigma)}, d = {d}, lambda = {lam:g}",
        f"report: {report.label} over {grid.size} sample points in [{grid.min():g}, {grid.max():g}]",
        f"sup |b| = {report.sup_b:.6g}",
    ]
    relation = '<=' if report.b4_holds else '>'
    lines.append(f"sup sigma^2 = {report.sup_sigma_sq:.6g} {relation} 2 lambda = {2 * lam:.6g}: "
                 f"{_verdict(report.b4_holds)}")
    if report.zero_sigma_points:
        shown = ', '.join(f"{p:g}" for p in report.zero_sigma_points[:5])
        lines.append(f"ellipticity: sigma vanishes at {shown}: FAILS")
    else:
        lines.append(f"ellipticity: L^2 = {report.ellipticity_L_sq:.6g}, L = {report.ellipticity_L:.6g}")
    if report.b5_violations:
        lines.append(f"drift ordering: FAILS ({'; '.join(report.b5_violations[:5])})")
    else:
        lines.append("drift ordering: holds")
    for name, value in report.lipschitz_estimates.items():
        lines.append(f"lipschitz {name} >= {value:.6g}")
    for name, value in report.holder_half_estimates.items():
        lines.append(f"holder-1/2 {name} >= {value:.6g}")

    lines.append(f"lambda / ||sigma||^2 = {report.lambda_over_sigma_sq:.6g}")
    if report.sup_sigma_sq > 0:
        threshold = negative_moment_threshold(lam, report.sup_sigma_sq)
        prior = prior_negative_moment_threshold(lam, report.sup_sigma_sq, d)
        lines.append(f"negative-moment threshold (2 lambda / ||sigma||^2 - 1) / 6 = {threshold:.6g}")
        lines.append(f"prior threshold 3 lambda / (d ||sigma||^2) - 1 = {prior:.6g}")
    factor = f"{RATE_CONDITION_FACTOR:g}"
    lines.append(f"rate condition lambda > {factor} ||sigma||: {_verdict(conditions['unsquared_holds'])} "
                 f"(lambda / ||sigma|| = {conditions['lambda_over_sigma']:.6g})")
    lines.append(f"rate condition lambda > {factor} ||sigma||^2: {_verdict(conditions['squared_holds'])} "
                 f"(lambda / ||sigma||^2 = {conditions['lambda_over_sigma_sq']:.6g})")
    if not conditions['requires_ellipticity']:
        lines.append("b == 0: rate condition does not need ellipticity")
    lines.append(f"assumptions: {'all hold' if report.all_hold else 'FAIL'}")
    return "\n".join(lines)


@validation_bp.cli.command('validate')
@experiment_options
def validate(config_path, seed, paths, out, threads):
    """Check the structural assumptions of the configured model."""
    experiment = resolve_experiment(config_path, seed, paths, out, threads)
    model = model_from(experiment)
    run = CommandRun('validate', experiment)

    points = np.linspace(experiment.sample_min, experiment.sample_max, experiment.sample_count)
    report = validate_assumptions(model, points, pair_samples=experiment.pair_samples, seed=experiment.seed)
    click.echo(render_report(report, model, experiment.d))

    if not report.all_hold:
        current_app.logger.warning('assumptions fail for model %s', experiment.model)
        run.count('assumption_failures')
        run.finish(1)
        return
    run.finish(0)


def random_chamber_points(rng: np.random.Generator, d: int, samples: int) -> np.ndarray:
    """Increasing configurations with log-uniform gaps and a random offset."""
    half = IDENTITY_DECADES / 2.0
    gaps = 10.0 ** rng.uniform(-half, half, size=(samples, d - 1))
    offsets = rng.uniform(-10.0, 10.0, size=(samples, 1))
    return offsets + np.concatenate([np.zeros((samples, 1)), np.cumsum(gaps, axis=1)], axis=1)


@validation_bp.cli.command('identity-check')
@experiment_options
def identity_check(config_path, seed, paths, out, threads):
    """Evaluate the pairwise identity on random chamber configurations."""
    experiment = resolve_experiment(config_path, seed, paths, out, threads)
    run = CommandRun('identity-check', experiment)
    d = experiment.d
    tolerance = current_app.config['IDENTITY_TOLERANCE']

    if d < 3:
        click.echo(f"d = {d}: empty sum, identity holds trivially")
        run.finish(0)
        return

    rng = np.random.default_rng(experiment.seed)
    points = random_chamber_points(rng, d, experiment.identity_samples)
    max_terms, residuals, relative = [], [], []
    for x in points:
        terms = pairwise_identity_terms(x)
        max_terms.append(float(np.max(np.abs(terms))))
        residuals.append(math.fsum(terms.tolist()))
        relative.append(identity_relative_residual(x))
    run.write_csv('residuals', generate_identity_csv(max_terms, residuals, relative))

    failures = sum(1 for r in relative if not r <= tolerance)
    worst = max(relative)
    click.echo(f"d = {d}: {len(relative)} configurations, worst relative residual {worst:.3e} "
               f"(tolerance {tolerance:g}), {failures} failures")
    if failures:
        current_app.logger.warning('pairwise identity failed on %d configurations', failures)
        run.count('identity_failures', failures)
        run.finish(1)
        return
    run.finish(0)
