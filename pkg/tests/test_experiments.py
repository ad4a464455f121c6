import math

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from src.data_generators import ScenarioConfig
from src.exceptions import ConfigError
from src.experiments import (
    EXPERIMENTS,
    MonteCarloExperiment,
    parse_method_label,
    run_replication,
    run_robustness_experiment,
    run_scenarios,
    run_type1_experiment
)
from tests.helpers import mc_margin

TINY = {'n_controls': 6, 'n_reps': 4, 'seed': 3}


def tiny_experiment(**simulation):
    return MonteCarloExperiment({'simulation': {**TINY, **simulation}})


class TestParseMethodLabel:
    @pytest.mark.parametrize('label, expected', [
        ('unmatched', ('unmatched', False)),
        ('sc', ('sc', False)),
        ('sc_adj', ('sc', True)),
        ('nn_l2_adj', ('nn_l2', True)),
        ('synthetic_adj', ('sc', True)),
    ])
    def test_labels(self, label, expected):
        assert parse_method_label(label) == expected

    @pytest.mark.parametrize('label', ['lasso', '_adj', 'sc_adjusted'])
    def test_unknown(self, label):
        with pytest.raises(ConfigError):
            parse_method_label(label)


class TestRunReplication:
    def test_results_per_method(self):
        config = ScenarioConfig(**TINY)
        results = run_replication(config, 0, ['unmatched', 'sc', 'sc_adj'])
        assert list(results) == ['unmatched', 'sc', 'sc_adj']
        for estimate, rejected in results.values():
            assert math.isfinite(estimate)
            assert isinstance(rejected, bool)
        assert results['sc'][0] != results['sc_adj'][0]

    def test_deterministic(self):
        config = ScenarioConfig(**TINY)
        assert run_replication(config, 2, ['nn_l2', 'nn_trend_adj']) == \
            run_replication(config, 2, ['nn_l2', 'nn_trend_adj'])

    def test_small_panel_never_rejects(self):
        # 7个单元时最小p值为1/7
        config = ScenarioConfig(**TINY)
        for rep in range(3):
            assert not any(rejected for _, rejected in run_replication(config, rep, ['unmatched', 'sc']).values())


class TestScenarios:
    def test_table1_mu(self):
        configs = tiny_experiment().scenarios('table1-mu')
        assert [c.mu1 for c in configs] == [1.0, 2.0, 3.0, 4.0, 5.0]
        assert all(c.spec.rho == 0.5 and c.is_null for c in configs)
        assert all(c.n_controls == 6 for c in configs)

    def test_table2(self):
        configs = tiny_experiment().scenarios('table2')
        assert len(configs) == 12
        assert configs[0].error_family == 'normal' and math.isinf(configs[0].df)
        assert all(c.error_family == 't' for c in configs[3:])
        assert [c.spec.rho for c in configs[:3]] == [0.25, 0.5, 0.75]
        assert all(c.mu1 == 1.0 for c in configs)

    def test_power_grid(self):
        thetas = [c.theta for c in tiny_experiment().scenarios('power')]
        assert_allclose(thetas, np.arange(0.0, -1.51, -0.25))

    def test_overrides(self):
        experiment = MonteCarloExperiment({
            'simulation': TINY,
            'experiments': {'table1-rho': {'values': [0.0, 0.9]}, 'table2': {'values': ['inf', 3]}},
        })
        assert [c.spec.rho for c in experiment.scenarios('table1-rho')] == [0.0, 0.9]
        assert len(experiment.scenarios('table2')) == 6
        assert experiment.scenarios('table1-rho', n_reps=9, seed=1)[0].n_reps == 9

    def test_unknown_experiment(self):
        with pytest.raises(ConfigError):
            tiny_experiment().scenarios('table3')

    def test_empty_sections_use_defaults(self):
        experiment = MonteCarloExperiment({'simulation': None, 'experiments': None, 'execution': None})
        assert experiment.n_jobs == 1
        assert experiment.results_dir == 'results'
        assert len(experiment.scenarios('table1-mu')) == 5

    def test_names(self):
        assert MonteCarloExperiment.names() == list(EXPERIMENTS)


class TestRun:
    def test_report_shape(self, tmp_path):
        experiment = tiny_experiment()
        report = experiment.run('table1-mu', n_reps=3)
        frame = report.to_frame()
        assert len(frame) == 20
        for column in ('mu1', 'rho', 'n_reps', 'seed', 'method', 'rejection_rate', 'mc_se', 'mean_theta', 'sd_theta'):
            assert column in frame.columns
        assert frame['method'].tolist()[:4] == ['unmatched', 'sc', 'nn_l2', 'nn_trend']
        assert (frame['n_reps'] == 3).all()
        path = experiment.save_report(report, str(tmp_path / 'out' / 'table1-mu.csv'))
        assert len(pd.read_csv(path)) == 20

    def test_report_records_effect_shape_and_t_scaling(self):
        report = tiny_experiment(effect_shape='constant', rescale_t=True).run('table1-mu', n_reps=2)
        frame = report.to_frame()
        assert (frame['effect_shape'] == 'constant').all()
        assert frame['rescale_t'].all()
        assert len(report.select('sc', effect_shape='constant', mu1=2.0)) == 1

    def test_methods_override(self):
        report = tiny_experiment().run('table1-rho', n_reps=2, methods=['sc_adj'])
        assert set(report.to_frame()['method']) == {'sc_adj'}
        assert len(report.summaries) == 5

    def test_select_and_rate(self):
        report = tiny_experiment().run('table1-mu', n_reps=2, methods=['unmatched'])
        assert report.rate('unmatched', mu1=5.0) == 0.0
        assert len(report.select('unmatched')) == 5
        with pytest.raises(KeyError):
            report.rate('sc', mu1=5.0)

    def test_deterministic_across_jobs(self):
        configs = [ScenarioConfig(**{**TINY, 'mu1': 2.0})]
        sequential = run_scenarios(configs, ['unmatched', 'nn_l2'], n_jobs=1).to_frame()
        parallel = run_scenarios(configs, ['unmatched', 'nn_l2'], n_jobs=2).to_frame()
        pd.testing.assert_frame_equal(sequential, parallel)

    def test_type1_requires_null(self):
        with pytest.raises(ConfigError):
            run_type1_experiment([ScenarioConfig(**TINY, theta=-0.5)], ['sc'])

    def test_invalid_method_fails_before_running(self):
        with pytest.raises(ConfigError):
            run_scenarios([ScenarioConfig(**TINY)], ['sc', 'bogus'])

    def test_robustness_runner(self):
        configs = tiny_experiment().scenarios('table2', n_reps=2)[::4]
        report = run_robustness_experiment(configs)
        assert [s.method for s in report.summaries] == ['sc_adj'] * 3
        assert [s.scenario.df for s in report.summaries] == [math.inf, 50.0, 10.0]
        with pytest.raises(ConfigError):
            run_robustness_experiment([configs[0].with_updates(theta=-1.0)])

    def test_mc_se(self):
        report = tiny_experiment().run('power', n_reps=4, methods=['unmatched'])
        for summary in report.summaries:
            rate = summary.rejection_rate
            assert summary.mc_se == pytest.approx(math.sqrt(rate * (1 - rate) / 4))


@pytest.mark.slow
class TestAcceptance:
    """全规模蒙特卡洛 (n0 = 40, 2000次重复), 需要数分钟"""

    @pytest.fixture(scope='class')
    def experiment(self):
        return MonteCarloExperiment({'execution': {'n_jobs': -1}})

    def test_type1_by_mean(self, experiment):
        report = experiment.run('table1-mu', methods=['unmatched', 'sc', 'nn_l2', 'nn_trend'])
        assert abs(report.rate('unmatched', mu1=5.0) - 0.04) <= 0.03
        assert abs(report.rate('sc', mu1=5.0) - 0.33) <= 0.04
        assert abs(report.rate('nn_l2', mu1=5.0) - 0.25) <= 0.04
        assert abs(report.rate('nn_trend', mu1=5.0) - 0.05) <= 0.02

    def test_type1_without_mean_difference(self, experiment):
        configs = experiment.scenarios('table1-mu')[:1]
        configs = [configs[0].with_updates(mu1=0.0)]
        report = run_scenarios(configs, ['unmatched', 'sc', 'nn_l2', 'nn_trend'], n_jobs=-1)
        for summary in report.summaries:
            assert abs(summary.rejection_rate - 0.05) <= max(0.02, mc_margin(0.05, summary.scenario.n_reps))

    def test_type1_by_rho(self, experiment):
        report = experiment.run('table1-rho', methods=['sc'])
        rates = [s.rejection_rate for s in report.summaries]
        assert rates[0] - rates[-1] >= 0.10
        for earlier, later in zip(report.summaries, report.summaries[1:]):
            slack = 2 * math.hypot(earlier.mc_se, later.mc_se)
            assert later.rejection_rate <= earlier.rejection_rate + slack

    def test_adjusted_under_heavy_tails(self, experiment):
        report = experiment.run('table2')
        for rho in (0.25, 0.5, 0.75):
            assert abs(report.rate('sc_adj', df=math.inf, rho=rho) - 0.05) <= 0.02
        assert abs(report.rate('sc_adj', df=50.0, rho=0.25) - 0.05) <= 0.02
        assert abs(report.rate('sc_adj', df=3.0, rho=0.75) - 0.12) <= 0.03

    def test_power_crossing(self, experiment):
        report = experiment.run('power', methods=['unmatched', 'sc'])
        thetas = [s.scenario.theta for s in report.select('sc')]
        gaps = [report.rate('unmatched', theta=t) - report.rate('sc', theta=t) for t in thetas]
        assert gaps[0] <= -0.15
        assert max(gaps) > 0

    def test_bias(self, experiment):
        report = experiment.run('bias', methods=['unmatched', 'sc', 'sc_adj'])
        unmatched = report.select('unmatched')[0]
        matched = report.select('sc')[0]
        assert abs(unmatched.mean_theta) <= 3 * unmatched.mean_theta_se
        assert abs(matched.mean_theta) > 3 * matched.mean_theta_se
        adjusted = report.select('sc_adj')[0]
        assert abs(adjusted.mean_theta) < abs(matched.mean_theta)

