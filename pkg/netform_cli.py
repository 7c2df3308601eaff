#!/usr/bin/env python3
"""
Command-line entry point: simulate, estimate and analyse classroom network panels.

Every subcommand writes its results plus a manifest.json into the output
directory and is deterministic given its inputs, configuration and seed.
"""
import functools
import json
import os
import sys
from typing import Any, List, Optional

import click
import numpy as np
import pandas as pd

from config import config
from components.abc_sampler import KernelKind, KernelSpec, StatisticKind, abc_run
from components.counterfactual import (Scenario, ScenarioKind, run_scenario, scenario_projection_summary,
                                       welfare_difference, welfare_normalizer)
from components.dyadic_regression import dyad_frame_from_panel, dyadic_ols, regression_table
from components.ep_abc import ep_run, ep_run_local
from components.errors import ConfigurationError, NetformError
from components.exact_chain import (build_transition, count_positive_entries, dump_chain_csv, flow_balance_gap,
                                    infer_tau, matrix_power, stationary)
from components.helpers import make_generator, write_json, write_table
from components.ident_probes import (ProbeDesign, gamma_from_model, limit_probe_F, limit_probe_matching,
                                     limit_probe_rho, probe_report, recover_gamma)
from components.likelihood import exact_loglik, loglik_grid
from components.local_summaries import fit_local_summaries
from components.logger import DEBUG, INFO, get_logger, log_stage, setup_logging
from components.model import Network, ParamVector
from components.panel import NetworkPanel
from components.panel_io import load_panel, save_panel
from components.run_config import RunConfig, write_manifest
from components.simulator import simulate_panel_followups
from components.synthetic import GeneratorSpec, generate_synthetic
from components.table_processor import matrix_table, stack_tables
from components.tau_estimator import estimate_tau, tau_distance_table

logger = get_logger(__name__)

_POSTERIOR_STREAM = 7


def handle_errors(func):
    """Map toolkit errors to logged messages and category exit codes."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except NetformError as e:
            logger.error(str(e))
            sys.exit(e.exit_code)
        except Exception as e:
            logger.error(f'Unexpected failure: {e}', exc_info=True)
            sys.exit(1)
    return wrapper


def _run_config(config_path: Optional[str], **overrides: Any) -> RunConfig:
    base = RunConfig.from_json(config_path) if config_path else RunConfig()
    return base.with_overrides(**overrides)


def _load(rc: RunConfig) -> NetworkPanel:
    if not rc.networks or not rc.covariates:
        raise ConfigurationError('both --networks and --covariates (or the config keys) are required')
    with log_stage('load panel', logger):
        return load_panel(rc.networks, rc.covariates, rc.attributes, rc.categorical)


def _load_beta(path: str, panel: NetworkPanel) -> ParamVector:
    """Coefficients from a JSON file holding {"beta": [...]}, e.g. a synthetic truth.json."""
    try:
        with open(path, encoding='utf-8') as f:
            values = json.load(f)['beta']
    except (OSError, KeyError, json.JSONDecodeError) as e:
        raise ConfigurationError(f'cannot read coefficients from {path}: {e}') from e
    return ParamVector.from_array(values, panel.n_covariates)


def _classroom(panel: NetworkPanel, classroom: Optional[str]) -> int:
    if classroom is None:
        return 0
    if classroom not in panel.network_ids:
        raise ConfigurationError(f'classroom {classroom!r} is not in the panel')
    return panel.network_ids.index(classroom)


def _inputs(rc: RunConfig, *extra: Optional[str]) -> List[str]:
    return [p for p in (rc.networks, rc.covariates) + extra if p]


common_options = [
    click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False), help='JSON run configuration'),
    click.option('--networks', type=click.Path(exists=True, dir_okay=False), help='edge-list CSV'),
    click.option('--covariates', type=click.Path(exists=True, dir_okay=False), help='agent-table CSV'),
    click.option('--out', 'output_dir', type=click.Path(file_okay=False), help='output directory'),
    click.option('--seed', type=int, help='run seed'),
]


def with_common_options(func):
    for option in reversed(common_options):
        func = option(func)
    return func


@click.group()
@click.option('--debug', is_flag=True, help='enable debug logging')
@click.option('--debug-log', type=click.Path(dir_okay=False), help='path to write a debug log')
def cli(debug: bool, debug_log: Optional[str]) -> None:
    """Simulation and estimation of iterated network-formation games on classroom panels."""
    setup_logging(level=DEBUG if debug else INFO, log_file=debug_log)


@cli.command()
@with_common_options
@click.option('--beta-file', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--tau', type=int, help='rounds to simulate from each baseline')
@handle_errors
def simulate(config_path, networks, covariates, output_dir, seed, beta_file, tau):
    """Replace every follow-up by a simulation from its baseline."""
    rc = _run_config(config_path, networks=networks, covariates=covariates, output_dir=output_dir, seed=seed, tau=tau)
    panel = _load(rc)
    beta = _load_beta(beta_file, panel)
    rounds = rc.resolve_tau(panel)
    sims = simulate_panel_followups(panel, beta.to_array()[None, :], rounds, rc.seed, shocks=rc.shocks)
    simulated = panel.with_followups([Network(s[0]) for s in sims])
    save_panel(simulated, os.path.join(rc.output_dir, 'networks.csv'), os.path.join(rc.output_dir, 'covariates.csv'))
    write_manifest(rc.output_dir, 'simulate', rc, rc.seed, _inputs(rc, beta_file), {'tau': rounds})


@cli.command()
@click.option('--spec', 'spec_path', type=click.Path(exists=True, dir_okay=False), help='JSON generator spec')
@click.option('--out', 'output_dir', required=True, type=click.Path(file_okay=False))
@click.option('--seed', type=int, default=0, show_default=True)
@handle_errors
def generate(spec_path, output_dir, seed):
    """Write a synthetic panel with its truth manifest."""
    data = {}
    if spec_path:
        with open(spec_path, encoding='utf-8') as f:
            data = json.load(f)
    spec = GeneratorSpec.from_dict(data)
    generate_synthetic(spec, seed, output_dir)
    write_manifest(output_dir, 'generate', None, seed, [spec_path] if spec_path else [], {'generator': data})


@cli.command('estimate-tau')
@with_common_options
@handle_errors
def estimate_tau_command(config_path, networks, covariates, output_dir, seed):
    """Estimate the number of rounds as the largest baseline-to-follow-up edge distance."""
    rc = _run_config(config_path, networks=networks, covariates=covariates, output_dir=output_dir, seed=seed)
    panel = _load(rc)
    estimate = estimate_tau(panel)
    write_json(os.path.join(rc.output_dir, 'tau.json'), estimate.to_dict())
    write_table(os.path.join(rc.output_dir, 'tau_distances.csv'), tau_distance_table(panel, estimate.tau_hat))
    write_manifest(rc.output_dir, 'estimate-tau', rc, rc.seed, _inputs(rc))


@cli.command()
@with_common_options
@click.option('--beta-file', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--tau', type=int)
@click.option('--grid-coefficient', help='coefficient name to profile, e.g. direct:intercept')
@click.option('--grid', 'grid_values', help='comma-separated values for the profiled coefficient')
@handle_errors
def loglik(config_path, networks, covariates, output_dir, seed, beta_file, tau, grid_coefficient, grid_values):
    """Exact log-likelihood of the observed follow-ups by walk enumeration."""
    rc = _run_config(config_path, networks=networks, covariates=covariates, output_dir=output_dir, seed=seed, tau=tau)
    panel = _load(rc)
    beta = _load_beta(beta_file, panel)
    rounds = rc.resolve_tau(panel)
    per_network = {obs.network_id: exact_loglik(obs.baseline, obs.followup, obs.covariates, beta, rc.shocks, rounds)
                   for obs in panel}
    write_json(os.path.join(rc.output_dir, 'loglik.json'),
               {'tau': rounds, 'total': sum(per_network.values()), 'networks': per_network})
    if grid_coefficient:
        names = ParamVector.names(panel.covariate_names)
        if grid_coefficient not in names or not grid_values:
            raise ConfigurationError(f'--grid-coefficient must be one of {names} and --grid must list values')
        values = [float(v) for v in grid_values.split(',')]
        curve = loglik_grid(panel, beta, names.index(grid_coefficient), values, rc.shocks, rounds)
        write_table(os.path.join(rc.output_dir, 'loglik_grid.csv'),
                    {'headers': [grid_coefficient, 'loglik'], 'rows': [list(r) for r in zip(values, curve)]})
    write_manifest(rc.output_dir, 'loglik', rc, rc.seed, _inputs(rc, beta_file))


@cli.command()
@with_common_options
@click.option('--tau', type=int)
@click.option('--draws', 'abc_draws', type=int)
@click.option('--epsilon', type=float)
@click.option('--target-acceptance', type=float)
@click.option('--kernel', type=click.Choice([k.value for k in KernelKind]))
@click.option('--statistic', type=click.Choice([s.value for s in StatisticKind]))
@click.option('--n-jobs', type=int)
@handle_errors
def abc(config_path, networks, covariates, output_dir, seed, tau, abc_draws, epsilon, target_acceptance,
        kernel, statistic, n_jobs):
    """Accept-reject ABC posterior over the whole panel."""
    rc = _run_config(config_path, networks=networks, covariates=covariates, output_dir=output_dir, seed=seed,
                     tau=tau, abc_draws=abc_draws, epsilon=epsilon, target_acceptance=target_acceptance,
                     kernel=kernel, statistic=statistic, n_jobs=n_jobs)
    panel = _load(rc)
    rounds = rc.resolve_tau(panel)
    prior = rc.prior(panel.covariate_names, rounds)
    with log_stage('abc', logger):
        result = abc_run(panel, prior, kernel=KernelSpec(KernelKind(rc.kernel), rc.epsilon), tau=rounds,
                         n_draws=rc.abc_draws, statistic=StatisticKind(rc.statistic), seed=rc.seed,
                         halton=rc.halton, target_rate=rc.target_acceptance, n_pilot=rc.abc_pilot_draws,
                         shocks=rc.shocks, n_jobs=rc.n_jobs)
    write_json(os.path.join(rc.output_dir, 'abc_summary.json'), result.to_dict())
    write_table(os.path.join(rc.output_dir, 'posterior.csv'), result.summary_table())
    write_table(os.path.join(rc.output_dir, 'draws.csv'), result.draws_table())
    write_manifest(rc.output_dir, 'abc', rc, rc.seed, _inputs(rc), {'tau': rounds})


def _write_ep(rc: RunConfig, command: str, state, posterior, rounds: int) -> None:
    write_json(os.path.join(rc.output_dir, 'ep_posterior.json'),
               dict(posterior.to_dict(), passes=state.pass_count, convergence=state.convergence))
    write_table(os.path.join(rc.output_dir, 'posterior.csv'), posterior.summary_table())
    write_table(os.path.join(rc.output_dir, 'posterior_cov.csv'), matrix_table(posterior.cov, posterior.names))
    write_table(os.path.join(rc.output_dir, 'ep_sites.csv'), {
        'headers': ['pass', 'network_id', 'status', 'n_accepted', 'threshold', 'change'],
        'rows': [[r.pass_index, r.network_id, r.status, r.n_accepted, r.threshold, r.change] for r in state.history],
    })
    write_manifest(rc.output_dir, command, rc, rc.seed, _inputs(rc), {'tau': rounds})


ep_options = [
    click.option('--tau', type=int),
    click.option('--passes', 'ep_passes', type=int),
    click.option('--draws-per-site', 'ep_draws_per_site', type=int),
    click.option('--target-acceptance', type=float),
    click.option('--n-jobs', type=int),
]


def with_ep_options(func):
    for option in reversed(ep_options):
        func = option(func)
    return func


@cli.command()
@with_common_options
@with_ep_options
@handle_errors
def ep(config_path, networks, covariates, output_dir, seed, tau, ep_passes, ep_draws_per_site,
       target_acceptance, n_jobs):
    """EP-ABC with one Gaussian site per classroom."""
    rc = _run_config(config_path, networks=networks, covariates=covariates, output_dir=output_dir, seed=seed,
                     tau=tau, ep_passes=ep_passes, ep_draws_per_site=ep_draws_per_site,
                     target_acceptance=target_acceptance, n_jobs=n_jobs)
    panel = _load(rc)
    rounds = rc.resolve_tau(panel)
    with log_stage('ep', logger):
        state, posterior = ep_run(panel, rc.prior(panel.covariate_names, rounds), rc.shocks, rounds, rc.ep_passes,
                                  rc.ep_draws_per_site, rc.target_acceptance, rc.seed, rc.halton, rc.ep_tolerance,
                                  rc.ep_min_accepted, n_jobs=rc.n_jobs)
    _write_ep(rc, 'ep', state, posterior, rounds)


@cli.command('ep-local')
@with_common_options
@with_ep_options
@click.option('--summary-draws', 'local_summary_draws', type=int)
@click.option('--penalty', 'local_penalty', type=float)
@handle_errors
def ep_local(config_path, networks, covariates, output_dir, seed, tau, ep_passes, ep_draws_per_site,
             target_acceptance, n_jobs, local_summary_draws, local_penalty):
    """EP-ABC accepting draws by fitted per-classroom summary statistics."""
    rc = _run_config(config_path, networks=networks, covariates=covariates, output_dir=output_dir, seed=seed,
                     tau=tau, ep_passes=ep_passes, ep_draws_per_site=ep_draws_per_site,
                     target_acceptance=target_acceptance, n_jobs=n_jobs, local_summary_draws=local_summary_draws,
                     local_penalty=local_penalty)
    panel = _load(rc)
    rounds = rc.resolve_tau(panel)
    prior = rc.prior(panel.covariate_names, rounds)
    with log_stage('local summaries', logger):
        summaries = fit_local_summaries(panel, prior, rc.shocks, rounds, rc.local_summary_draws, rc.local_penalty,
                                        rc.seed, rc.halton, rc.n_jobs)
    state, posterior = ep_run_local(panel, prior, summaries, rc.shocks, rounds, rc.ep_passes, rc.ep_draws_per_site,
                                    rc.target_acceptance, rc.seed, rc.halton, rc.ep_tolerance, rc.ep_min_accepted,
                                    rc.n_jobs)
    _write_ep(rc, 'ep-local', state, posterior, rounds)


def _posterior_draws(path: str, names: List[str], n_draws: int, seed: int) -> np.ndarray:
    """
    Coefficient draws from an ABC draws.csv (resampled by weight) or an EP
    ep_posterior.json (Gaussian).
    """
    rng = make_generator(seed, _POSTERIOR_STREAM)
    if path.endswith('.json'):
        with open(path, encoding='utf-8') as f:
            data = json.load(f)
        mean, cov = np.asarray(data['mean'], dtype=float), np.asarray(data['cov'], dtype=float)
        if mean.shape[0] != len(names):
            raise ConfigurationError(f'{path} has {mean.shape[0]} coefficients, {len(names)} expected')
        return rng.multivariate_normal(mean, cov, size=n_draws, method='eigh')
    table = pd.read_csv(path)
    missing = [n for n in names if n not in table.columns]
    if missing:
        raise ConfigurationError(f'{path} lacks coefficient columns {missing}')
    weights = table['weight'].to_numpy(dtype=float) if 'weight' in table.columns else np.ones(len(table))
    picks = rng.choice(len(table), size=n_draws, replace=True, p=weights / weights.sum())
    return table[names].to_numpy(dtype=float)[picks]


@cli.command()
@with_common_options
@click.option('--posterior', 'posterior_path', required=True, type=click.Path(exists=True, dir_okay=False),
              help='draws.csv from abc or ep_posterior.json from ep')
@click.option('--tau', type=int)
@click.option('--scenario', 'scenarios', multiple=True, type=click.Choice([k.value for k in ScenarioKind]))
@click.option('--simulations', 'n_simulations', type=int)
@handle_errors
def counterfactual(config_path, networks, covariates, output_dir, seed, posterior_path, tau, scenarios,
                   n_simulations):
    """Welfare trajectories and follow-up projections under policy scenarios."""
    rc = _run_config(config_path, networks=networks, covariates=covariates, output_dir=output_dir, seed=seed,
                     tau=tau, scenarios=list(scenarios) or None, n_simulations=n_simulations)
    panel = _load(rc)
    rounds = rc.resolve_tau(panel)
    names = ParamVector.names(panel.covariate_names)
    draws = _posterior_draws(posterior_path, names, rc.n_simulations, rc.seed)

    results = {}
    for kind in rc.scenarios:
        scenario = Scenario(ScenarioKind(kind), rc.tracking_key)
        with log_stage(f'scenario {kind}', logger):
            results[kind] = run_scenario(panel, draws, scenario, rounds, seed=rc.seed, shocks=rc.shocks,
                                         common_random_numbers=rc.common_random_numbers)

    write_table(os.path.join(rc.output_dir, 'welfare.csv'),
                stack_tables({k: r.welfare.summary_table() for k, r in results.items()}, 'scenario'))
    write_table(os.path.join(rc.output_dir, 'projections.csv'),
                stack_tables({k: scenario_projection_summary(r.followups, r.panel).summary_table()
                              for k, r in results.items()}, 'scenario'))

    if ScenarioKind.BASE.value in results and len(results) > 1:
        normalizer = _normalizer(panel, names, draws)
        base = results[ScenarioKind.BASE.value].welfare
        diffs = {k: welfare_difference(base, r.welfare, normalizer).summary_table()
                 for k, r in results.items() if k != ScenarioKind.BASE.value}
        write_table(os.path.join(rc.output_dir, 'welfare_difference.csv'), stack_tables(diffs, 'scenario'))
    write_manifest(rc.output_dir, 'counterfactual', rc, rc.seed, _inputs(rc, posterior_path), {'tau': rounds})


def _normalizer(panel: NetworkPanel, names: List[str], draws: np.ndarray) -> float:
    key = f'direct:{config.WELFARE_GENDER_COVARIATE}'
    if key not in names:
        logger.warning(f'No {key} coefficient; welfare differences are normalized by the number of students only')
        return float(panel.n_students)
    coef = float(draws[:, names.index(key)].mean())
    if coef == 0:
        raise ConfigurationError(f'posterior mean of {key} is zero; welfare differences cannot be normalized')
    return welfare_normalizer(panel.n_students, coef)


@cli.command()
@with_common_options
@click.option('--no-fixed-effects', is_flag=True, help='regress with an intercept instead of sender/receiver effects')
@click.option('--instrument', 'with_instrument', is_flag=True, help='add the class-list distance as a regressor')
@handle_errors
def regress(config_path, networks, covariates, output_dir, seed, no_fixed_effects, with_instrument):
    """Dyadic regression of follow-up links on pair covariates, clustered by classroom."""
    rc = _run_config(config_path, networks=networks, covariates=covariates, output_dir=output_dir, seed=seed)
    panel = _load(rc)
    frame = dyad_frame_from_panel(panel)
    regressors = list(panel.covariate_names) + (['instrument'] if with_instrument else [])
    fit = dyadic_ols(frame, regressors, include_fixed_effects=not no_fixed_effects)
    write_table(os.path.join(rc.output_dir, 'regression.csv'), regression_table(fit))
    write_json(os.path.join(rc.output_dir, 'regression.json'), fit.to_dict())
    write_manifest(rc.output_dir, 'regress', rc, rc.seed, _inputs(rc))


@cli.command()
@with_common_options
@click.option('--beta-file', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--classroom', help='classroom id (default: the first)')
@click.option('--tau', type=int, help='also report the positive-entry count of the tau-step matrix')
@handle_errors
def exact(config_path, networks, covariates, output_dir, seed, beta_file, classroom, tau):
    """Exact transition matrix and stationary law of one small classroom."""
    rc = _run_config(config_path, networks=networks, covariates=covariates, output_dir=output_dir, seed=seed, tau=tau)
    panel = _load(rc)
    obs = panel[_classroom(panel, classroom)]
    beta = _load_beta(beta_file, panel)
    Pi = build_transition(obs.covariates, beta, rc.shocks)
    pi = stationary(Pi)
    dump_chain_csv(os.path.join(rc.output_dir, 'transition.csv'), os.path.join(rc.output_dir, 'stationary.csv'),
                   Pi, pi)
    summary = {'network_id': obs.network_id, 'n_states': Pi.shape[0], 'flow_balance_gap': flow_balance_gap(Pi, pi)}
    if rc.tau:
        power = matrix_power(Pi, rc.tau)
        summary.update(tau=rc.tau, positive_entries=count_positive_entries(power), inferred_tau=infer_tau(power))
    write_json(os.path.join(rc.output_dir, 'chain.json'), summary)
    write_manifest(rc.output_dir, 'exact', rc, rc.seed, _inputs(rc, beta_file))


@cli.command('probe-ident')
@with_common_options
@click.option('--beta-file', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--classroom', help='classroom id (default: the first)')
@click.option('--state', type=int, default=0, show_default=True, help='state code g')
@click.option('--pair', type=int, default=0, show_default=True, help='pair index toggled from g')
@click.option('--tau', type=int, default=1, show_default=True)
@handle_errors
def probe_ident(config_path, networks, covariates, output_dir, seed, beta_file, classroom, state, pair, tau):
    """Identification-at-infinity probes and primitive recovery on one small classroom."""
    rc = _run_config(config_path, networks=networks, covariates=covariates, output_dir=output_dir, seed=seed, tau=tau)
    panel = _load(rc)
    obs = panel[_classroom(panel, classroom)]
    beta = _load_beta(beta_file, panel)
    design = ProbeDesign.from_model(obs.covariates, beta)
    probes = {
        'rho': limit_probe_rho(design, state, pair, rc.tau),
        'flip': limit_probe_F(design, state, pair, rc.tau),
        'matching': limit_probe_matching(design, state, pair, rc.tau),
    }
    write_table(os.path.join(rc.output_dir, 'probes.csv'),
                stack_tables({k: probe_report(rows) for k, rows in probes.items()}, 'probe'))
    summary = {'network_id': obs.network_id, 'state': state, 'pair': pair, 'tau': rc.tau}
    if obs.n_agents == 2:
        truth = gamma_from_model(obs.covariates, beta, rc.shocks)
        recovered = recover_gamma(build_transition(obs.covariates, beta, rc.shocks))
        summary['recovery_max_abs_diff'] = truth.max_abs_diff(recovered)
    write_json(os.path.join(rc.output_dir, 'probes.json'), summary)
    write_manifest(rc.output_dir, 'probe-ident', rc, rc.seed, _inputs(rc, beta_file))


if __name__ == '__main__':
    cli()
