import math

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.data_generators import Ar1PanelGenerator, ScenarioConfig, simulate_panel
from src.exceptions import ConfigError
from src.types import Ar1ErrorSpec
from src.utils.panel_io import read_panel_table


class TestScenarioConfig:
    def test_defaults(self):
        config = ScenarioConfig()
        assert (config.n_controls, config.n_times, config.tau0) == (40, 8, 4)
        assert config.is_null
        assert config.spec == Ar1ErrorSpec(1.0, 0.5)

    def test_from_dict(self):
        config = ScenarioConfig.from_dict({'n_controls': 10, 'rho': 0.75, 'sigma2': 2, 'error_family': 't',
                                           'df': 'inf', 'seed': 7})
        assert config.n_controls == 10
        assert config.spec == Ar1ErrorSpec(2.0, 0.75)
        assert math.isinf(config.df)
        assert config.seed == 7

    def test_with_updates(self):
        config = ScenarioConfig().with_updates(rho=0.9, theta=-0.5)
        assert config.spec.rho == 0.9
        assert config.spec.sigma2 == 1.0
        assert not config.is_null

    @pytest.mark.parametrize('changes', [
        {'n_reps': 0},
        {'n_controls': 0},
        {'tau0': 8},
        {'tau0': 0},
        {'error_family': 'cauchy'},
        {'effect_shape': 'linear'},
        {'df': 0.0},
        {'alpha': 1.0},
    ])
    def test_invalid(self, changes):
        with pytest.raises(ConfigError):
            ScenarioConfig(**changes)

    def test_invalid_rho_in_dict(self):
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict({'rho': 1.0})


class TestAr1PanelGenerator:
    def test_treated_mean_cumulative(self):
        generator = Ar1PanelGenerator(ScenarioConfig(theta=-1.5))
        assert_allclose(generator.treated_mean(), [5, 5, 5, 5, 3.5, 2, 0.5, -1])
        assert_allclose(generator.control_mean(), np.zeros(8))

    def test_treated_mean_constant(self):
        generator = Ar1PanelGenerator(ScenarioConfig(theta=-1.5, effect_shape='constant'))
        assert_allclose(generator.treated_mean(), [5, 5, 5, 5, 3.5, 3.5, 3.5, 3.5])

    def test_true_mean_model(self):
        model = Ar1PanelGenerator(ScenarioConfig(n_controls=3)).true_mean_model()
        assert_allclose(model.evaluate(), np.array([[5.0] * 8, [0.0] * 8, [0.0] * 8, [0.0] * 8]))

    def test_panel_layout(self):
        panel = simulate_panel(ScenarioConfig(n_controls=5), 0)
        assert panel.outcomes.shape == (6, 8)
        assert panel.treated_index == 0
        assert panel.treated_id == 'treated'
        assert panel.unit_ids[1] == 'control_01'
        assert panel.tau0 == 4
        assert_array_equal(panel.times, np.arange(1.0, 9.0))

    def test_deterministic_per_rep(self):
        config = ScenarioConfig(n_controls=5, seed=11)
        assert_array_equal(simulate_panel(config, 3).outcomes, simulate_panel(config, 3).outcomes)
        assert not np.array_equal(simulate_panel(config, 3).outcomes, simulate_panel(config, 4).outcomes)
        other = ScenarioConfig(n_controls=5, seed=12)
        assert not np.array_equal(simulate_panel(config, 3).outcomes, simulate_panel(other, 3).outcomes)

    def test_t_errors(self):
        config = ScenarioConfig(n_controls=5, error_family='t', df=3.0)
        panel = simulate_panel(config, 0)
        assert np.all(np.isfinite(panel.outcomes))
        assert not np.array_equal(panel.outcomes, simulate_panel(config.with_updates(df=math.inf), 0).outcomes)

    def test_t_with_infinite_df_matches_normal(self):
        config = ScenarioConfig(n_controls=5, error_family='t', df=math.inf)
        normal = config.with_updates(error_family='normal')
        assert_allclose(simulate_panel(config, 2).outcomes, simulate_panel(normal, 2).outcomes)

    def test_exchangeable_errors_under_null(self):
        config = ScenarioConfig(n_controls=3, seed=5)
        generator = Ar1PanelGenerator(config)
        errors = []
        for rep in range(2000):
            outcomes = generator.generate(rep).outcomes
            errors.append(outcomes - np.array([5.0, 0.0, 0.0, 0.0])[:, None])
        errors = np.array(errors)
        means = errors.mean(axis=(0, 2))
        variances = errors.var(axis=(0, 2))
        # 每个单元约2000个独立的长度8序列
        assert np.all(np.abs(means) < 0.08)
        assert np.all(np.abs(variances - 1.0) < 0.08)
        lag1 = [np.corrcoef(errors[:, unit, :-1].ravel(), errors[:, unit, 1:].ravel())[0, 1] for unit in range(4)]
        assert_allclose(lag1, 0.5, atol=0.04)

    def test_to_frame_and_save(self, tmp_path):
        generator = Ar1PanelGenerator(ScenarioConfig(n_controls=2))
        panel = generator.generate(0)
        frame = generator.to_frame(panel)
        assert isinstance(frame, pd.DataFrame)
        assert list(frame.columns) == ['unit_id', 'time', 'outcome']
        assert len(frame) == 24
        assert frame['time'].tolist()[:8] == list(range(1, 9))
        path = tmp_path / 'sim' / 'panel.csv'
        generator.save_to_csv(panel, str(path))
        table = read_panel_table(str(path))
        assert table.unit_ids == ('treated', 'control_01', 'control_02')
        assert_array_equal(table.outcomes, panel.outcomes)

    def test_from_dict(self):
        generator = Ar1PanelGenerator.from_dict({'n_controls': 4, 'mu1': 2.0})
        assert generator.generate(0).n_units == 5
        assert_allclose(generator.treated_mean(), np.full(8, 2.0))
