"""
长表面板CSV的读取、校验与写出, 以及观测数据分析的配置文件

CSV格式: 表头一行, 逗号分隔, 列 unit_id, time, outcome 以及任意数值协变量列。
每个 (unit_id, time) 唯一, 每个单元覆盖相同的时点集合, outcome必须为有限数值;
协变量允许留空 (缺失)。行号按文件行计, 表头为第1行。
"""
import logging
import math
import os
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import yaml

from src.exceptions import ConfigError, PanelSchemaError, SchemaIssue
from src.types import Panel

logger = logging.getLogger(__name__)

FIRST_DATA_ROW = 2
ADJUSTMENT_SOURCES = ('gee', 'explicit')
MISSING_TOKENS = ('', 'na', 'nan', 'null')


@dataclass(frozen=True)
class AnalysisConfig:
    """
    观测数据分析配置 (YAML, 键为扁平结构, 仅predictors可嵌套)

    参数:
        treated_unit: 处理单元id
        tau0: 处理前时期数; 与last_pre_period二选一
        last_pre_period: 最后一个处理前时点的时间标签, 例如1988
        unit_column, time_column, outcome_column: CSV中的列名
        covariates: 附加到面板的协变量列, None表示其余全部列
        method: 匹配方法
        predictors: 合成控制预测变量 (见PredictorSpec)
        adjustment: gee (拟合GEE均值模型并由残差估计rho, sigma2) 或 explicit (使用给定参数)
        gee_covariates: GEE中的时变协变量
        gee_use_predictors: 是否把单元级预测变量作为GEE回归量 (在时间上广播)
        rho, s2: explicit时的AR(1)参数
        alpha: 显著性水平
        delta_values: 敏感性分析的Delta网格, 未给定时由delta_min/delta_max/delta_num生成
        sensitivity_rho_values, sensitivity_s2_values: 可选的rho, sigma2敏感性网格
        literal_anchor: 所有单元以处理单元在tau0的均值中心化
        n_jobs: 安慰剂重标记的并行任务数
        logging: 日志配置, 与全局配置的logging段相同 (level)
    """
    treated_unit: str
    tau0: Optional[int] = None
    last_pre_period: Optional[float] = None
    unit_column: str = 'unit_id'
    time_column: str = 'time'
    outcome_column: str = 'outcome'
    covariates: Optional[Tuple[str, ...]] = None
    method: str = 'sc'
    predictors: Dict[str, Any] = field(default_factory=dict)
    adjustment: str = 'gee'
    gee_covariates: Tuple[str, ...] = ()
    gee_use_predictors: bool = False
    rho: Optional[float] = None
    s2: Optional[float] = None
    alpha: float = 0.05
    delta_values: Optional[Tuple[float, ...]] = None
    delta_min: float = -5.0
    delta_max: float = 5.0
    delta_num: int = 21
    sensitivity_rho_values: Optional[Tuple[float, ...]] = None
    sensitivity_s2_values: Optional[Tuple[float, ...]] = None
    literal_anchor: bool = False
    n_jobs: int = 1
    logging: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.treated_unit:
            raise ConfigError("treated_unit is required")
        if (self.tau0 is None) == (self.last_pre_period is None):
            raise ConfigError("give exactly one of tau0 and last_pre_period")
        if self.tau0 is not None and self.tau0 < 1:
            raise ConfigError(f"tau0 must be at least 1, got {self.tau0}")
        if self.adjustment not in ADJUSTMENT_SOURCES:
            raise ConfigError(f"adjustment must be one of {ADJUSTMENT_SOURCES}, got '{self.adjustment}'")
        if self.adjustment == 'explicit' and (self.rho is None or self.s2 is None):
            raise ConfigError("explicit adjustment needs both rho and s2")
        if self.rho is not None and not 0.0 <= self.rho < 1.0:
            raise ConfigError(f"rho must lie in [0, 1), got {self.rho}")
        if self.s2 is not None and not self.s2 > 0:
            raise ConfigError(f"s2 must be positive, got {self.s2}")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.delta_values is None and self.delta_num < 1:
            raise ConfigError(f"delta_num must be at least 1, got {self.delta_num}")
        if self.n_jobs == 0:
            raise ConfigError("n_jobs must be nonzero")

    @classmethod
    def from_dict(cls, config: Dict[str, Any]) -> 'AnalysisConfig':
        """
        由配置字典构建, 未知键视为错误

        参数:
            config: 配置字典

        返回:
            AnalysisConfig
        """
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(config) - known)
        if unknown:
            raise ConfigError(f"unknown analysis config key(s): {unknown}")
        values = dict(config)
        for key in ('covariates', 'gee_covariates'):
            if values.get(key) is not None:
                values[key] = tuple(str(v) for v in _as_list(values[key], key))
        for key in ('delta_values', 'sensitivity_rho_values', 'sensitivity_s2_values'):
            if values.get(key) is not None:
                values[key] = tuple(float(v) for v in _as_list(values[key], key))
        if 'treated_unit' in values:
            values['treated_unit'] = str(values['treated_unit'])
        if values.get('predictors') is None:
            values['predictors'] = {}
        if not isinstance(values['predictors'], dict):
            raise ConfigError("predictors must be a mapping")
        if values.get('logging') is None:
            values['logging'] = {}
        if not isinstance(values['logging'], dict):
            raise ConfigError("logging must be a mapping")
        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_yaml(cls, path: str) -> 'AnalysisConfig':
        try:
            with open(path, 'r', encoding='utf-8') as file:
                config = yaml.safe_load(file)
        except OSError as exc:
            raise ConfigError(f"cannot read analysis config '{path}': {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"analysis config '{path}' is not valid YAML: {exc}") from exc
        if not isinstance(config, dict):
            raise ConfigError(f"analysis config '{path}' must be a mapping of keys to values")
        return cls.from_dict(config)

    def with_updates(self, **changes) -> 'AnalysisConfig':
        return replace(self, **changes)

    def delta_grid(self) -> np.ndarray:
        if self.delta_values is not None:
            grid = np.asarray(self.delta_values, dtype=float)
        else:
            from src.estimators.sensitivity import default_delta_grid
            grid = default_delta_grid(self.delta_min, self.delta_max, self.delta_num)
        if 0.0 not in grid:
            grid = np.sort(np.append(grid, 0.0))
        return grid

    def resolve_tau0(self, times: np.ndarray) -> int:
        if self.tau0 is not None:
            return int(self.tau0)
        return int(np.count_nonzero(np.asarray(times) <= self.last_pre_period))


def _as_list(value: Any, key: str) -> List[Any]:
    if isinstance(value, (str, int, float)):
        return [value]
    if isinstance(value, (list, tuple)):
        return list(value)
    raise ConfigError(f"{key} must be a list")


def load_analysis_config(config: Union[str, Dict[str, Any], AnalysisConfig]) -> AnalysisConfig:
    if isinstance(config, AnalysisConfig):
        return config
    if isinstance(config, dict):
        return AnalysisConfig.from_dict(config)
    return AnalysisConfig.from_yaml(config)


@dataclass(frozen=True, eq=False)
class PanelTable:
    """通过校验的矩形面板数据 (尚未指定处理单元与处理时点)"""
    outcomes: np.ndarray
    unit_ids: Tuple[str, ...]
    times: np.ndarray
    covariates: Dict[str, np.ndarray]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.outcomes.shape

    def to_panel(self, treated_unit: str, tau0: int) -> Panel:
        if treated_unit not in self.unit_ids:
            raise PanelSchemaError([SchemaIssue(None, f"treated unit '{treated_unit}' not found in the data")])
        if not 1 <= tau0 < len(self.times):
            raise PanelSchemaError([SchemaIssue(
                None, f"tau0 = {tau0} leaves no pre- or post-treatment period among {len(self.times)} times")])
        return Panel(outcomes=self.outcomes, unit_ids=self.unit_ids, times=self.times,
                     treated_index=self.unit_ids.index(treated_unit), tau0=tau0, covariates=self.covariates)


def _numeric_column(raw: pd.Series, allow_missing: bool) -> Tuple[pd.Series, List[int]]:
    text = raw.str.strip()
    missing = text.str.lower().isin(MISSING_TOKENS)
    values = pd.to_numeric(text.where(~missing), errors='coerce')
    bad = values.isna() & ~missing
    if not allow_missing:
        bad |= missing
    bad |= np.isinf(values.fillna(0.0))
    return values, [int(position) for position in np.flatnonzero(bad.to_numpy())]


def read_panel_table(path: str, unit_column: str = 'unit_id', time_column: str = 'time',
                     outcome_column: str = 'outcome',
                     covariates: Optional[Sequence[str]] = None) -> PanelTable:
    """
    读取并校验长表CSV

    参数:
        path: CSV路径
        unit_column, time_column, outcome_column: 列名
        covariates: 读取的协变量列, None表示其余全部列

    返回:
        PanelTable, 单元按首次出现顺序排列, 时点升序

    异常:
        PanelSchemaError: 列缺失、非数值、非有限结果、重复 (unit, time)、时点覆盖不一致
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise PanelSchemaError([SchemaIssue(None, f"cannot read '{path}': {exc}")]) from exc
    return validate_frame(frame, unit_column, time_column, outcome_column, covariates)


def validate_frame(frame: pd.DataFrame, unit_column: str = 'unit_id', time_column: str = 'time',
                   outcome_column: str = 'outcome',
                   covariates: Optional[Sequence[str]] = None) -> PanelTable:
    """校验字符串型长表DataFrame并构建PanelTable, 行号为 DataFrame位置 + 2"""
    frame = frame.astype(str).reset_index(drop=True)
    required = [unit_column, time_column, outcome_column]
    missing_columns = [c for c in required if c not in frame.columns]
    if covariates is None:
        covariates = [c for c in frame.columns if c not in required]
    missing_columns += [c for c in covariates if c not in frame.columns]
    if missing_columns:
        raise PanelSchemaError([SchemaIssue(1, f"missing column(s): {missing_columns}")])
    if frame.empty:
        raise PanelSchemaError([SchemaIssue(None, "file has no data rows")])

    issues: List[SchemaIssue] = []
    units = frame[unit_column].str.strip()
    for position in np.flatnonzero((units == '').to_numpy()):
        issues.append(SchemaIssue(int(position) + FIRST_DATA_ROW, f"empty {unit_column}"))

    times, bad = _numeric_column(frame[time_column], allow_missing=False)
    for position in bad:
        issues.append(SchemaIssue(position + FIRST_DATA_ROW,
                                  f"{time_column} '{frame[time_column].iat[position]}' is not numeric"))
    outcomes, bad = _numeric_column(frame[outcome_column], allow_missing=False)
    for position in bad:
        issues.append(SchemaIssue(position + FIRST_DATA_ROW,
                                  f"{outcome_column} '{frame[outcome_column].iat[position]}' is not a finite number"))
    covariate_values = {}
    for name in covariates:
        values, bad = _numeric_column(frame[name], allow_missing=True)
        for position in bad:
            issues.append(SchemaIssue(position + FIRST_DATA_ROW,
                                      f"covariate {name} '{frame[name].iat[position]}' is not numeric"))
        covariate_values[name] = values

    keys = pd.DataFrame({'unit': units, 'time': times})
    first_rows: Dict[Tuple[str, float], int] = {}
    for position, (unit, time) in enumerate(zip(keys['unit'], keys['time'])):
        if math.isnan(time):
            continue
        row = position + FIRST_DATA_ROW
        if (unit, time) in first_rows:
            issues.append(SchemaIssue(row, f"duplicate ({unit}, {time:g}) first seen on row {first_rows[(unit, time)]}"))
        else:
            first_rows[(unit, time)] = row

    valid = keys['time'].notna() & (keys['unit'] != '')
    all_times = np.sort(keys.loc[valid, 'time'].unique())
    order = list(pd.unique(keys.loc[valid, 'unit']))
    coverage = keys[valid].groupby('unit', sort=False)['time'].apply(set)
    expected = set(all_times)
    for unit in order:
        missing_times = sorted(expected - coverage[unit])
        if missing_times:
            row = int(np.flatnonzero((keys['unit'] == unit).to_numpy())[0]) + FIRST_DATA_ROW
            listed = ', '.join(f"{t:g}" for t in missing_times)
            issues.append(SchemaIssue(row, f"unit '{unit}' is missing time(s) {listed} (ragged panel)"))

    if issues:
        raise PanelSchemaError(sorted(issues, key=lambda issue: (issue.row or 0)))

    long = pd.DataFrame({'_unit': units, '_time': times, '_outcome': outcomes, **covariate_values})

    def pivot(column: str) -> np.ndarray:
        wide = long.pivot(index='_unit', columns='_time', values=column)
        return wide.reindex(index=order, columns=all_times).to_numpy(dtype=float)

    return PanelTable(
        outcomes=pivot('_outcome'),
        unit_ids=tuple(order),
        times=all_times.astype(float),
        covariates={name: pivot(name) for name in covariates},
    )


def _read_table(csv_path: str, config: Optional[AnalysisConfig], wide: bool) -> PanelTable:
    if wide:
        unit_column = config.unit_column if config is not None else 'unit_id'
        return validate_frame(read_wide_csv(csv_path, unit_column), covariates=())
    if config is None:
        return read_panel_table(csv_path)
    return read_panel_table(csv_path, config.unit_column, config.time_column, config.outcome_column,
                            config.covariates)


def load_panel(csv_path: str, config: Union[str, Dict[str, Any], AnalysisConfig], wide: bool = False) -> Panel:
    """
    读取长表CSV与分析配置, 构建通过校验的面板

    参数:
        csv_path: 长表CSV路径
        config: 配置文件路径、配置字典或AnalysisConfig
        wide: 输入为宽表 (每个时点一列) 时为True, 先转为长表

    返回:
        Panel, 单元按首次出现顺序排列, 附带协变量
    """
    config = load_analysis_config(config)
    table = _read_table(csv_path, config, wide)
    panel = table.to_panel(config.treated_unit, config.resolve_tau0(table.times))
    logger.info("loaded panel %s: %d units x %d times, treated '%s', %d pre-treatment periods",
                csv_path, panel.n_units, panel.n_times, panel.treated_id, panel.tau0)
    return panel


def validate_csv(csv_path: str, config: Union[None, str, Dict[str, Any], AnalysisConfig] = None,
                 wide: bool = False) -> PanelTable:
    """
    只做格式校验; 给定配置时还检查处理单元与处理时点

    参数:
        csv_path: CSV路径
        config: 可选的分析配置
        wide: 输入是否为宽表

    返回:
        PanelTable
    """
    config = None if config is None else load_analysis_config(config)
    table = _read_table(csv_path, config, wide)
    if config is not None:
        table.to_panel(config.treated_unit, config.resolve_tau0(table.times))
    return table


def panel_to_frame(panel: Panel) -> pd.DataFrame:
    """
    面板转长表 DataFrame (unit_id, time, outcome, 协变量...)

    参数:
        panel: 面板

    返回:
        按单元顺序、时点升序排列的长表
    """
    n_units, n_times = panel.outcomes.shape
    times = panel.times
    if np.all(times == np.round(times)):
        times = times.astype(np.int64)
    frame = pd.DataFrame({
        'unit_id': np.repeat(np.asarray(panel.unit_ids, dtype=object), n_times),
        'time': np.tile(times, n_units),
        'outcome': panel.outcomes.reshape(-1),
    })
    for name, values in panel.covariates.items():
        frame[name] = values.reshape(-1)
    return frame


def save_panel(panel: Panel, path: str) -> None:
    """以17位有效数字写出长表CSV, 读回后数值完全相同"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    panel_to_frame(panel).to_csv(path, index=False, float_format='%.17g')


def wide_to_long(frame: pd.DataFrame, unit_column: str, value_name: str = 'outcome',
                 time_name: str = 'time') -> pd.DataFrame:
    """
    宽表 (每个时点一列) 转为长表

    参数:
        frame: 宽表, unit_column列为单元id, 其余列名为时间标签
        unit_column: 单元列名
        value_name: 长表中结果列名
        time_name: 长表中时间列名

    返回:
        列为 unit_id, time, outcome 的字符串型长表, 行按单元首次出现顺序、时点列顺序排列
    """
    if unit_column not in frame.columns:
        raise PanelSchemaError([SchemaIssue(1, f"missing unit column '{unit_column}'")])
    long = frame.melt(id_vars=[unit_column], var_name=time_name, value_name=value_name)
    long = long.rename(columns={unit_column: 'unit_id'})
    # melt按列堆叠, 这里恢复为按单元分组
    unit_order = {unit: i for i, unit in enumerate(pd.unique(frame[unit_column]))}
    long['_unit_order'] = long['unit_id'].map(unit_order)
    long = long.sort_values('_unit_order', kind='stable').drop(columns='_unit_order').reset_index(drop=True)
    return long.astype(str)


def read_wide_csv(path: str, unit_column: str = 'unit_id') -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise PanelSchemaError([SchemaIssue(None, f"cannot read '{path}': {exc}")]) from exc
    return wide_to_long(frame, unit_column)
