"""Simulation, moment estimation and strong-convergence commands."""
import math

import click
import numpy as np
from flask import Blueprint, current_app

from commands.common import CommandRun, experiment_options, model_from, resolve_experiment, solver_config
from models.analysis import (
    even_moment_from_states,
    gap_moment_from_states,
    node_index,
    simulate_ensemble,
    strong_error_curve,
)
from models.errors import DegenerateFitError, GridNestingError, OracleNotApplicableError, SimulationStepError
from models.oracles import check, exact_second_moment_law
from models.particle_model import negative_moment_threshold, validate_assumptions
from models.schemes import MILSTEIN, SCHEMES, BrownianGrid, simulate_path
from utils.export_csv import generate_moments_csv, generate_rate_csv, generate_trajectory_csv

experiments_bp = Blueprint('experiments', __name__, cli_group=None)

scheme_option = click.option('--scheme', type=click.Choice(SCHEMES), default=None,
                             help='Time-stepping scheme (overrides scheme.kind).')


def _report_step_failure(run: CommandRun, exc: SimulationStepError) -> None:
    click.echo(f"solver failure at step {exc.step}: {exc.cause}", err=True)
    run.count('step_failures')
    run.finish(1)


@experiments_bp.cli.command('simulate')
@experiment_options
@scheme_option
def simulate(config_path, seed, paths, out, threads, scheme):
    """Simulate one trajectory and write it as CSV."""
    experiment = resolve_experiment(config_path, seed, paths, out, threads, scheme=scheme)
    model = model_from(experiment)
    run = CommandRun('simulate', experiment)

    grid = BrownianGrid.generate(experiment.seed, experiment.path_index, experiment.n_steps, model.d, model.T)
    try:
        trajectory = simulate_path(model, experiment.n_steps, experiment.scheme, grid, solver_config())
    except SimulationStepError as exc:
        _report_step_failure(run, exc)
        return

    path = run.write_csv('trajectory', generate_trajectory_csv(trajectory))
    click.echo(f"{experiment.scheme}: {trajectory.n} steps, min gap {trajectory.min_gap():.6g}, written to {path}")
    run.finish(0)


@experiments_bp.cli.command('moments')
@experiment_options
@click.option('--outside-guarantee', is_flag=True, default=False,
              help='Allow negative-moment orders at or above the threshold.')
def moments(config_path, seed, paths, out, threads, outside_guarantee):
    """Estimate gap negative moments and even moments at the configured time."""
    experiment = resolve_experiment(config_path, seed, paths, out, threads)
    model = model_from(experiment)
    run = CommandRun('moments', experiment)

    t = experiment.moment_time
    try:
        k = node_index(t, model.T, experiment.n_steps)
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="'moments.t'") from exc
    i, j = experiment.pair
    if not 0 <= i < j < model.d:
        raise click.BadParameter(f"pair must satisfy 0 <= i < j < d, got {experiment.pair}",
                                 param_hint="'moments.pair'")

    points = np.linspace(experiment.sample_min, experiment.sample_max, experiment.sample_count)
    report = validate_assumptions(model, points, pair_samples=0)
    threshold = (negative_moment_threshold(model.lam, report.sup_sigma_sq)
                 if report.sup_sigma_sq > 0 else math.inf)
    outside = [p for p in experiment.p if p > 0 and not p < threshold]
    if outside and not outside_guarantee:
        orders = ', '.join(f"{p:g}" for p in outside)
        click.echo(f"p = {orders} is not below the negative-moment threshold {threshold:.6g}; "
                   f"pass --outside-guarantee to estimate anyway", err=True)
        run.count('refused_orders', len(outside))
        run.finish(1)
        return

    try:
        states = simulate_ensemble(
            model, experiment.n_steps, experiment.n_paths, experiment.seed, [k], experiment.scheme,
            solver_config(), experiment.threads, current_app.config['PATH_BATCH_SIZE'],
        )[:, 0, :]
    except SimulationStepError as exc:
        _report_step_failure(run, exc)
        return

    estimates = []
    for p in experiment.p:
        estimate = gap_moment_from_states(states, p, (i, j), t)
        if p in outside:
            estimate.flags.append('outside-guarantee')
            run.count('outside_guarantee')
        estimates.append(estimate)
    for q in experiment.q:
        estimates.append(even_moment_from_states(states, q, t))
    run.write_csv('moments', generate_moments_csv(estimates))

    for estimate in estimates:
        click.echo(f"{estimate.functional} p_or_q={estimate.p_or_q:g} t={estimate.t:g}: "
                   f"{estimate.value:.6g} +/- {estimate.std_error:.3g} [{estimate.flag_text}]")

    # Exact second-moment law where it applies
    second = next((e for e in estimates if e.functional == '|X|^2q' and e.p_or_q == 1.0), None)
    if second is not None:
        try:
            result = check('second-moment-law', exact_second_moment_law(model, t), second.value,
                           3.0 * second.std_error)
            click.echo(f"exact E|X|^2 = {result.expected:.6g}, observed {result.observed:.6g}: "
                       f"{'agrees' if result.passed else 'differs'} within 3 standard errors")
        except OracleNotApplicableError as exc:
            current_app.logger.debug('no exact law: %s', exc)

    overflow = sum(e.overflow_count for e in estimates)
    if overflow:
        click.echo(f"{overflow} samples overflowed", err=True)
        run.count('overflow', overflow)
        run.finish(1)
        return
    run.finish(0)


@experiments_bp.cli.command('convergence')
@experiment_options
@scheme_option
def convergence(config_path, seed, paths, out, threads, scheme):
    """Coupled strong errors against a fine reference and their log-log slope."""
    experiment = resolve_experiment(config_path, seed, paths, out, threads, scheme=scheme)
    model = model_from(experiment)
    run = CommandRun('convergence', experiment)

    if experiment.slope_band is not None:
        band = tuple(experiment.slope_band)
    elif experiment.scheme == MILSTEIN:
        band = current_app.config['MILSTEIN_SLOPE_BAND']
    elif model.diffusion_is_constant:
        # additive noise: the EM step is the Milstein step
        band = current_app.config['MILSTEIN_SLOPE_BAND']
        click.echo("constant sigma: EM coincides with Milstein, checking against the order-one band")
    else:
        band = current_app.config['EM_SLOPE_BAND']

    try:
        fit = strong_error_curve(
            model, experiment.scheme, experiment.ns, experiment.n_ref, experiment.n_paths, experiment.seed,
            solver_config(), experiment.threads, current_app.config['PATH_BATCH_SIZE'],
            min_ratio=current_app.config['REFERENCE_RATIO'],
        )
    except (GridNestingError, DegenerateFitError) as exc:
        click.echo(f"cannot fit a rate: {exc}", err=True)
        run.count('grid_errors')
        run.finish(2)
        return
    except SimulationStepError as exc:
        _report_step_failure(run, exc)
        return

    run.write_csv('errors', generate_rate_csv(fit))
    for n, mse, stderr in zip(fit.ns, fit.errors, fit.std_errors):
        click.echo(f"n = {n}: mse {mse:.6g} +/- {stderr:.3g}")
    inside = fit.within(band)
    click.echo(f"slope {fit.slope:.4f} +/- {fit.slope_std_error:.2g} (L2 order {fit.l2_order:.3f}), "
               f"band [{band[0]:g}, {band[1]:g}]: {'inside' if inside else 'OUTSIDE'}")
    if not inside:
        current_app.logger.warning('slope %.4f outside band %s', fit.slope, band)
        run.count('slope_outside_band')
        run.finish(1)
        return
    run.finish(0)
