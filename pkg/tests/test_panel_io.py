from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.estimators.sensitivity import default_delta_grid
from src.exceptions import ConfigError, PanelSchemaError
from src.types import Panel, unit_labels
from src.utils.panel_io import (
    AnalysisConfig,
    load_panel,
    read_panel_table,
    save_panel,
    validate_csv
)

CONFIG_DIR = Path(__file__).parents[1] / 'config'


def write_csv(tmp_path, text, name='panel.csv'):
    path = tmp_path / name
    path.write_text(text, encoding='utf-8')
    return str(path)


def schema_issues(path, **kwargs):
    with pytest.raises(PanelSchemaError) as info:
        read_panel_table(path, **kwargs)
    return info.value.issues


class TestReadPanelTable:
    def test_small_panel(self, tmp_path):
        path = write_csv(tmp_path, "unit_id,time,outcome\n"
                                   "b,2,4.0\nb,1,3.0\nb,3,5.0\n"
                                   "a,1,1.0\na,2,1.5\na,3,2.0\n")
        table = read_panel_table(path)
        assert table.shape == (2, 3)
        assert table.unit_ids == ('b', 'a')
        assert_array_equal(table.times, [1.0, 2.0, 3.0])
        assert_array_equal(table.outcomes, [[3.0, 4.0, 5.0], [1.0, 1.5, 2.0]])

    def test_duplicate_row(self, tmp_path):
        path = write_csv(tmp_path, "unit_id,time,outcome\na,1,1\na,2,2\na,2,3\nb,1,1\nb,2,2\n")
        issues = schema_issues(path)
        assert len(issues) == 1
        assert issues[0].row == 4
        assert 'first seen on row 3' in issues[0].message

    def test_ragged_panel(self, tmp_path):
        path = write_csv(tmp_path, "unit_id,time,outcome\na,1,1\na,2,2\na,3,3\nb,1,1\nb,2,2\n")
        issues = schema_issues(path)
        assert [issue.row for issue in issues] == [5]
        assert 'ragged' in issues[0].message and '3' in issues[0].message

    def test_non_numeric_outcome(self, tmp_path):
        path = write_csv(tmp_path, "unit_id,time,outcome\na,1,1\na,2,abc\nb,1,1\nb,2,inf\n")
        issues = schema_issues(path)
        assert [issue.row for issue in issues] == [3, 5]
        assert str(issues[0]).startswith('row 3:')

    def test_missing_outcome_value(self, tmp_path):
        path = write_csv(tmp_path, "unit_id,time,outcome\na,1,\na,2,1\n")
        assert [issue.row for issue in schema_issues(path)] == [2]

    def test_missing_column(self, tmp_path):
        path = write_csv(tmp_path, "unit_id,time,value\na,1,1\n")
        issues = schema_issues(path)
        assert issues[0].row == 1
        assert 'outcome' in issues[0].message

    def test_missing_file(self, tmp_path):
        issues = schema_issues(str(tmp_path / 'absent.csv'))
        assert issues[0].row is None

    def test_covariates(self, tmp_path):
        path = write_csv(tmp_path, "unit_id,time,outcome,x,z\na,1,1,0.5,9\na,2,2,,9\nb,1,1,1.5,9\nb,2,2,2.5,9\n")
        table = read_panel_table(path, covariates=['x'])
        assert list(table.covariates) == ['x']
        assert np.isnan(table.covariates['x'][0, 1])
        assert_allclose(table.covariates['x'][1], [1.5, 2.5])
        assert set(read_panel_table(path).covariates) == {'x', 'z'}

    def test_bad_covariate(self, tmp_path):
        path = write_csv(tmp_path, "unit_id,time,outcome,x\na,1,1,abc\na,2,2,1\n")
        assert [issue.row for issue in schema_issues(path)] == [2]

    def test_custom_columns(self, tmp_path):
        path = write_csv(tmp_path, "state,year,cigsale\nA,1970,100\nA,1971,90\n")
        table = read_panel_table(path, unit_column='state', time_column='year', outcome_column='cigsale')
        assert_array_equal(table.times, [1970.0, 1971.0])


class TestLoadPanel:
    CSV = "unit_id,time,outcome\nA,2000,1\nA,2001,2\nA,2002,3\nB,2000,2\nB,2001,2\nB,2002,2\nC,2000,0\nC,2001,1\nC,2002,0\n"

    def test_tau0_from_last_pre_period(self, tmp_path):
        path = write_csv(tmp_path, self.CSV)
        panel = load_panel(path, {'treated_unit': 'B', 'last_pre_period': 2001})
        assert panel.treated_index == 1
        assert panel.tau0 == 2
        assert panel.n_post == 1

    def test_explicit_tau0(self, tmp_path):
        panel = load_panel(write_csv(tmp_path, self.CSV), AnalysisConfig(treated_unit='C', tau0=1))
        assert panel.tau0 == 1
        assert panel.treated_id == 'C'

    def test_unknown_treated_unit(self, tmp_path):
        with pytest.raises(PanelSchemaError, match="treated unit 'Z' not found"):
            load_panel(write_csv(tmp_path, self.CSV), {'treated_unit': 'Z', 'tau0': 1})

    def test_no_post_period(self, tmp_path):
        with pytest.raises(PanelSchemaError):
            load_panel(write_csv(tmp_path, self.CSV), {'treated_unit': 'A', 'last_pre_period': 2002})

    def test_validate_csv(self, tmp_path):
        path = write_csv(tmp_path, self.CSV)
        assert validate_csv(path).shape == (3, 3)
        with pytest.raises(PanelSchemaError):
            validate_csv(path, {'treated_unit': 'Z', 'tau0': 1})

    def test_wide_format(self, tmp_path):
        path = write_csv(tmp_path, "unit_id,2000,2001,2002\nA,1,2,3\nB,2,2,2\nC,0,1,0\n")
        wide = load_panel(path, {'treated_unit': 'A', 'tau0': 2}, wide=True)
        narrow = load_panel(write_csv(tmp_path, self.CSV, 'long.csv'), {'treated_unit': 'A', 'tau0': 2})
        assert wide.unit_ids == narrow.unit_ids
        assert_array_equal(wide.times, narrow.times)
        assert_array_equal(wide.outcomes, narrow.outcomes)

    def test_save_and_reload(self, tmp_path, rng):
        x = rng.normal(size=(3, 5))
        x[1, 2] = np.nan
        panel = Panel(outcomes=rng.normal(size=(3, 5)) * 1e3, unit_ids=unit_labels('s', 3),
                      times=np.arange(1990.0, 1995.0), treated_index=2, tau0=3, covariates={'x': x})
        path = str(tmp_path / 'nested' / 'panel.csv')
        save_panel(panel, path)
        loaded = load_panel(path, {'treated_unit': 's_03', 'last_pre_period': 1992})
        assert loaded.unit_ids == tuple(panel.unit_ids)
        assert loaded.treated_index == 2 and loaded.tau0 == 3
        assert_array_equal(loaded.outcomes, panel.outcomes)
        assert_array_equal(loaded.covariates['x'], x)


class TestAnalysisConfig:
    def test_defaults(self):
        config = AnalysisConfig.from_dict({'treated_unit': 'A', 'tau0': 4})
        assert config.method == 'sc'
        assert config.adjustment == 'gee'
        grid = config.delta_grid()
        assert len(grid) == 21 and 0.0 in grid

    def test_delta_values_gain_zero(self):
        config = AnalysisConfig.from_dict({'treated_unit': 'A', 'tau0': 4, 'delta_values': [1, -1]})
        assert_array_equal(config.delta_grid(), [-1.0, 0.0, 1.0])

    def test_range_grid_matches_sensitivity_default(self):
        config = AnalysisConfig.from_dict({'treated_unit': 'A', 'tau0': 4, 'delta_min': -2.0, 'delta_max': 2.0,
                                           'delta_num': 5})
        assert_array_equal(config.delta_grid(), default_delta_grid(-2.0, 2.0, 5))

    def test_even_grid_gains_zero(self):
        config = AnalysisConfig.from_dict({'treated_unit': 'A', 'tau0': 4, 'delta_num': 4})
        assert 0.0 in config.delta_grid()
        assert len(config.delta_grid()) == 5

    @pytest.mark.parametrize('values', [
        {},
        {'treated_unit': 'A'},
        {'treated_unit': 'A', 'tau0': 4, 'last_pre_period': 1988},
        {'treated_unit': 'A', 'tau0': 0},
        {'treated_unit': 'A', 'tau0': 4, 'adjustment': 'ols'},
        {'treated_unit': 'A', 'tau0': 4, 'adjustment': 'explicit', 'rho': 0.5},
        {'treated_unit': 'A', 'tau0': 4, 'adjustment': 'explicit', 'rho': 1.0, 's2': 1.0},
        {'treated_unit': 'A', 'tau0': 4, 'adjustment': 'explicit', 'rho': -0.2, 's2': 1.0},
        {'treated_unit': 'A', 'tau0': 4, 'adjustment': 'explicit', 'rho': 0.5, 's2': 0.0},
        {'treated_unit': 'A', 'tau0': 4, 'adjustment': 'explicit', 'rho': 0.5, 's2': -1.0},
        {'treated_unit': 'A', 'tau0': 4, 'alpha': 0.0},
        {'treated_unit': 'A', 'tau0': 4, 'n_jobs': 0},
        {'treated_unit': 'A', 'tau0': 4, 'colour': 'blue'},
        {'treated_unit': 'A', 'tau0': 4, 'predictors': [1, 2]},
        {'treated_unit': 'A', 'tau0': 4, 'covariates': {'x': 1}},
    ])
    def test_invalid(self, values):
        with pytest.raises(ConfigError):
            AnalysisConfig.from_dict(values)

    def test_yaml_errors(self, tmp_path):
        with pytest.raises(ConfigError):
            AnalysisConfig.from_yaml(str(tmp_path / 'absent.yaml'))
        path = tmp_path / 'list.yaml'
        path.write_text('- a\n- b\n', encoding='utf-8')
        with pytest.raises(ConfigError):
            AnalysisConfig.from_yaml(str(path))

    def test_prop99_config(self):
        config = AnalysisConfig.from_yaml(str(CONFIG_DIR / 'prop99.yaml'))
        assert config.treated_unit == 'California'
        assert config.covariates == ('lnincome', 'beer', 'age15to24', 'retprice')
        assert config.predictors['window'] == [1980, 1988]
        assert config.resolve_tau0(np.arange(1970.0, 2001.0)) == 19
