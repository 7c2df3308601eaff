import json
import os

import pytest
from click.testing import CliRunner

from netform_cli import cli

SPEC = {
    'n_classrooms': 4,
    'n_agents': [3, 3],
    'tau': 3,
    'baseline': 'bernoulli',
    'baseline_p': 0.2,
    'beta': [0.2, -0.5, 0.3, 0.0, -1.0, -0.8, 0.2, 0.5, 0.0, 0.0, 0.1, 0.0, 0.0],
}


def invoke(*args):
    return CliRunner().invoke(cli, [str(a) for a in args])


def read_json(path):
    with open(path, encoding='utf-8') as f:
        return json.load(f)


@pytest.fixture(scope='module')
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp('data')
    spec = root / 'spec.json'
    spec.write_text(json.dumps(SPEC))
    result = CliRunner().invoke(cli, ['generate', '--spec', str(spec), '--out', str(root), '--seed', '3'])
    assert result.exit_code == 0, result.output
    return {
        'networks': str(root / 'networks.csv'),
        'covariates': str(root / 'covariates.csv'),
        'truth': str(root / 'truth.json'),
    }


def data_args(dataset):
    return ['--networks', dataset['networks'], '--covariates', dataset['covariates']]


def test_generate_writes_manifest(dataset):
    manifest = read_json(os.path.join(os.path.dirname(dataset['truth']), 'manifest.json'))
    assert manifest['command'] == 'generate'
    assert manifest['seed'] == 3
    assert 'spec.json' in manifest['inputs']


def test_estimate_tau(dataset, tmp_path):
    result = invoke('estimate-tau', *data_args(dataset), '--out', tmp_path)
    assert result.exit_code == 0, result.output
    estimate = read_json(tmp_path / 'tau.json')
    assert 0 <= estimate['tau_hat'] <= 3
    assert (tmp_path / 'tau_distances.csv').read_text().startswith('network_id,')


def test_regress(dataset, tmp_path):
    result = invoke('regress', *data_args(dataset), '--out', tmp_path, '--no-fixed-effects', '--instrument')
    assert result.exit_code == 0, result.output
    fit = read_json(tmp_path / 'regression.json')
    assert set(fit['coefficients']) == {'intercept', 'gender', 'cognitive_skills', 'instrument'}
    assert fit['fixed_effects'] is False


def test_exact_chain(dataset, tmp_path):
    result = invoke('exact', *data_args(dataset), '--out', tmp_path, '--beta-file', dataset['truth'], '--tau', 2)
    assert result.exit_code == 0, result.output
    chain = read_json(tmp_path / 'chain.json')
    assert chain['n_states'] == 64
    assert chain['inferred_tau'] == 2
    assert (tmp_path / 'transition.csv').exists()


def test_loglik_with_grid(dataset, tmp_path):
    result = invoke('loglik', *data_args(dataset), '--out', tmp_path, '--beta-file', dataset['truth'], '--tau', 3,
                    '--grid-coefficient', 'direct:intercept', '--grid', '-1,0,1')
    assert result.exit_code == 0, result.output
    loglik = read_json(tmp_path / 'loglik.json')
    assert loglik['total'] == pytest.approx(sum(loglik['networks'].values()))
    assert len((tmp_path / 'loglik_grid.csv').read_text().splitlines()) == 4


def test_abc_then_counterfactual(dataset, tmp_path):
    abc_dir = tmp_path / 'abc'
    result = invoke('abc', *data_args(dataset), '--out', abc_dir, '--tau', 3, '--draws', 200, '--epsilon', 'inf')
    assert result.exit_code == 0, result.output
    summary = read_json(abc_dir / 'abc_summary.json')
    assert summary['n_accepted'] == 200

    cf_dir = tmp_path / 'cf'
    result = invoke('counterfactual', *data_args(dataset), '--out', cf_dir, '--tau', 3,
                    '--posterior', abc_dir / 'draws.csv', '--simulations', 20,
                    '--scenario', 'base', '--scenario', 'random_matching')
    assert result.exit_code == 0, result.output
    welfare = (cf_dir / 'welfare.csv').read_text().splitlines()
    assert welfare[0] == 'scenario,round,component,mean,lo,hi'
    assert len(welfare) == 1 + 2 * 4 * 4
    assert (cf_dir / 'welfare_difference.csv').exists()
    assert (cf_dir / 'projections.csv').exists()


def test_ep_then_counterfactual(dataset, tmp_path):
    ep_dir = tmp_path / 'ep'
    result = invoke('ep', *data_args(dataset), '--out', ep_dir, '--tau', 3, '--draws-per-site', 500,
                    '--target-acceptance', 0.3)
    assert result.exit_code == 0, result.output
    posterior = read_json(ep_dir / 'ep_posterior.json')
    assert posterior['passes'] == 1
    assert len(posterior['mean']) == 13

    cf_dir = tmp_path / 'cf'
    result = invoke('counterfactual', *data_args(dataset), '--out', cf_dir, '--tau', 3,
                    '--posterior', ep_dir / 'ep_posterior.json', '--simulations', 10, '--scenario', 'tracking')
    assert result.exit_code == 0, result.output
    assert not (cf_dir / 'welfare_difference.csv').exists()


def test_runs_are_deterministic(dataset, tmp_path):
    for name in ('a', 'b'):
        result = invoke('abc', *data_args(dataset), '--out', tmp_path / name, '--tau', 3, '--draws', 100,
                        '--epsilon', 4.0, '--seed', 12)
        assert result.exit_code == 0, result.output
    for filename in ('draws.csv', 'posterior.csv', 'abc_summary.json'):
        assert (tmp_path / 'a' / filename).read_text() == (tmp_path / 'b' / filename).read_text()


def test_config_file_and_overrides(dataset, tmp_path):
    config_path = tmp_path / 'run.json'
    config_path.write_text(json.dumps({'networks': dataset['networks'], 'covariates': dataset['covariates'],
                                       'tau_source': 'estimate', 'seed': 1}))
    result = invoke('estimate-tau', '--config', config_path, '--out', tmp_path / 'out', '--seed', 4)
    assert result.exit_code == 0, result.output
    manifest = read_json(tmp_path / 'out' / 'manifest.json')
    assert manifest['seed'] == 4
    assert manifest['config']['tau_source'] == 'estimate'


class TestExitCodes:
    def test_missing_inputs_is_config_error(self, tmp_path):
        assert invoke('estimate-tau', '--out', tmp_path).exit_code == 3

    def test_unknown_config_key(self, dataset, tmp_path):
        config_path = tmp_path / 'run.json'
        config_path.write_text(json.dumps({'epsilonn': 1}))
        assert invoke('regress', '--config', config_path, *data_args(dataset), '--out', tmp_path).exit_code == 3

    def test_parse_error(self, dataset, tmp_path):
        broken = tmp_path / 'networks.csv'
        broken.write_text('classroom_id,period,sender,receiver\nc000,T9,1,2\n')
        result = invoke('estimate-tau', '--networks', broken, '--covariates', dataset['covariates'], '--out', tmp_path)
        assert result.exit_code == 2

    def test_tolerance_error(self, dataset, tmp_path):
        result = invoke('abc', *data_args(dataset), '--out', tmp_path, '--tau', 3, '--draws', 2, '--epsilon', 0)
        assert result.exit_code == 6

    def test_capacity_error(self, tmp_path):
        spec = tmp_path / 'spec.json'
        spec.write_text(json.dumps({'n_classrooms': 1, 'n_agents': [5, 5], 'tau': 1}))
        assert invoke('generate', '--spec', spec, '--out', tmp_path, '--seed', 0).exit_code == 0
        truth = tmp_path / 'truth.json'
        result = invoke('exact', '--networks', tmp_path / 'networks.csv', '--covariates', tmp_path / 'covariates.csv',
                        '--out', tmp_path / 'chain', '--beta-file', truth)
        assert result.exit_code == 4


def test_probe_ident_recovers_two_agent_primitives(tmp_path):
    spec = tmp_path / 'spec.json'
    spec.write_text(json.dumps({'n_classrooms': 1, 'n_agents': [2, 2], 'tau': 2,
                                'beta': [0.3, -0.2, 0.4, 0.1, -0.5, 0.2, 0.3, 0.0, 0.1, 0.0, 0.2, 0.0, 0.0]}))
    assert invoke('generate', '--spec', spec, '--out', tmp_path, '--seed', 1).exit_code == 0
    result = invoke('probe-ident', '--networks', tmp_path / 'networks.csv', '--covariates', tmp_path / 'covariates.csv',
                    '--out', tmp_path / 'probes', '--beta-file', tmp_path / 'truth.json', '--tau', 2)
    assert result.exit_code == 0, result.output
    summary = read_json(tmp_path / 'probes' / 'probes.json')
    assert summary['recovery_max_abs_diff'] < 1e-8
    header = (tmp_path / 'probes' / 'probes.csv').read_text().splitlines()[0]
    assert header == 'probe,t,estimate,target,gap,complement_gap'
