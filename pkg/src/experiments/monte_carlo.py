"""
蒙特卡洛实验

每个情景独立生成n_reps个面板, 对每个方法执行安慰剂置换检验, 汇总拒绝率、
蒙特卡洛标准误以及估计值的均值和标准差。重复之间使用互不相交的随机数流,
汇总按重复编号顺序进行, 结果与并行度无关。
"""
import logging
import math
import os
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from src.data_generators import Ar1PanelGenerator, ScenarioConfig
from src.estimators.placebo import EstimatorConfig, count_extreme, placebo_estimates
from src.exceptions import ConfigError
from src.matching import ALIASES, MATCHERS
from src.utils.metrics import calculate_metrics

logger = logging.getLogger(__name__)

DEFAULT_METHODS = ('unmatched', 'sc', 'nn_l2', 'nn_trend')
ADJUSTED_SUFFIX = '_adj'
REPORT_COLUMNS = ['method', 'rejection_rate', 'mc_se', 'mean_theta', 'sd_theta']

# 命名实验的默认网格, config.yaml的experiments段可以覆盖其中任意键
EXPERIMENTS: Dict[str, Dict[str, Any]] = {
    'table1-mu': {
        'axis': 'mu1',
        'values': [1.0, 2.0, 3.0, 4.0, 5.0],
        'fixed': {'rho': 0.5, 'theta': 0.0},
        'methods': list(DEFAULT_METHODS),
        'kind': 'type1',
    },
    'table1-rho': {
        'axis': 'rho',
        'values': [0.0, 0.25, 0.5, 0.75, 0.9],
        'fixed': {'mu1': 5.0, 'theta': 0.0},
        'methods': list(DEFAULT_METHODS),
        'kind': 'type1',
    },
    'power': {
        'axis': 'theta',
        'values': [0.0, -0.25, -0.5, -0.75, -1.0, -1.25, -1.5],
        'fixed': {'mu0': 0.0, 'mu1': 5.0, 'rho': 0.5},
        'methods': list(DEFAULT_METHODS),
        'kind': 'power',
    },
    'table2': {
        'axis': 'df',
        'values': [math.inf, 50.0, 10.0, 3.0],
        'rho_values': [0.25, 0.5, 0.75],
        'fixed': {'mu0': 0.0, 'mu1': 1.0, 'theta': 0.0, 'error_family': 't'},
        'methods': ['sc_adj'],
        'kind': 'robustness',
    },
    'bias': {
        'axis': 'mu1',
        'values': [5.0],
        'fixed': {'mu0': 0.0, 'rho': 0.5, 'theta': 0.0},
        'methods': list(DEFAULT_METHODS) + ['sc_adj'],
        'kind': 'type1',
    },
}


def parse_method_label(label: str) -> Tuple[str, bool]:
    """
    解析方法标签, 带_adj后缀表示RTM校正版本

    参数:
        label: 例如 sc, nn_l2_adj

    返回:
        (匹配方法, 是否校正)
    """
    adjust = label.endswith(ADJUSTED_SUFFIX)
    method = label[:-len(ADJUSTED_SUFFIX)] if adjust else label
    method = ALIASES.get(method, method)
    if method not in MATCHERS:
        raise ConfigError(f"unknown method '{label}'; choose from {sorted(MATCHERS)} with optional '_adj'")
    return method, adjust


def run_replication(config: ScenarioConfig, rep: int, methods: Sequence[str]) -> Dict[str, Tuple[float, bool]]:
    """
    单次重复: 生成面板并对每个方法执行置换检验

    同一匹配方法的未校正与校正版本共用每个重标记的对照权重。
    校正版本使用真实的数据生成参数 (均值与AR(1)结构)。

    参数:
        config: 模拟情景
        rep: 重复编号
        methods: 方法标签

    返回:
        方法标签 -> (处理单元估计值, 是否拒绝原假设)
    """
    generator = Ar1PanelGenerator(config)
    panel = generator.generate(rep)
    true_model = generator.true_mean_model()
    weights_cache = {}
    results = {}
    for label in methods:
        method, adjust = parse_method_label(label)
        estimator = EstimatorConfig(method=method)
        if adjust:
            estimator = estimator.with_updates(adjust=True, mean_model=true_model, spec=config.spec)
        estimates, weights = placebo_estimates(panel, estimator, weights_by_unit=weights_cache.get(method))
        weights_cache[method] = weights
        n_extreme = count_extreme(estimates, panel.treated_index)
        p_value = n_extreme / panel.n_units
        results[label] = (float(estimates[panel.treated_index]), p_value < config.alpha)
    return results


@dataclass(frozen=True)
class MethodSummary:
    """一个情景下一个方法的蒙特卡洛汇总"""
    scenario: ScenarioConfig
    method: str
    rejection_rate: float
    mc_se: float
    mean_theta: float
    sd_theta: float
    mean_theta_se: float

    def __post_init__(self):
        if not 0.0 <= self.rejection_rate <= 1.0:
            raise ValueError(f"rejection rate {self.rejection_rate} outside [0, 1]")

    def as_row(self) -> Dict[str, Any]:
        return {**self.scenario.describe(), 'method': self.method, 'rejection_rate': self.rejection_rate,
                'mc_se': self.mc_se, 'mean_theta': self.mean_theta, 'sd_theta': self.sd_theta}


@dataclass(frozen=True)
class ExperimentReport:
    """实验报告: 情景 x 方法 的汇总行, 顺序与情景定义和方法列表一致"""
    name: str
    summaries: Tuple[MethodSummary, ...]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([summary.as_row() for summary in self.summaries])

    def to_csv(self, path: str) -> None:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format='%.17g')

    def select(self, method: str, **scenario) -> List[MethodSummary]:
        """按方法和情景参数筛选汇总行, 例如 select('sc', rho=0.5)"""
        selected = []
        for summary in self.summaries:
            described = summary.scenario.describe()
            if summary.method == method and all(described[key] == value for key, value in scenario.items()):
                selected.append(summary)
        return selected

    def rate(self, method: str, **scenario) -> float:
        matches = self.select(method, **scenario)
        if len(matches) != 1:
            raise KeyError(f"{len(matches)} rows match method={method} {scenario}")
        return matches[0].rejection_rate


def summarize_scenario(config: ScenarioConfig, methods: Sequence[str],
                       replications: Sequence[Dict[str, Tuple[float, bool]]]) -> List[MethodSummary]:
    summaries = []
    for label in methods:
        estimates = [rep[label][0] for rep in replications]
        rejections = [rep[label][1] for rep in replications]
        metrics = calculate_metrics(estimates, rejections)
        summaries.append(MethodSummary(
            scenario=config,
            method=label,
            rejection_rate=metrics['rejection_rate'],
            mc_se=metrics['mc_se'],
            mean_theta=metrics['mean_theta'],
            sd_theta=metrics['sd_theta'],
            mean_theta_se=metrics['mean_theta_se'],
        ))
    return summaries


def run_scenarios(configs: Iterable[ScenarioConfig], methods: Sequence[str] = DEFAULT_METHODS,
                  n_jobs: int = 1, name: str = 'experiment') -> ExperimentReport:
    """
    对每个情景运行全部重复并汇总

    参数:
        configs: 情景列表
        methods: 方法标签列表
        n_jobs: joblib并行任务数 (重复级别并行)
        name: 报告名称

    返回:
        ExperimentReport
    """
    methods = list(methods)
    for label in methods:
        parse_method_label(label)
    summaries = []
    for config in configs:
        logger.info("%s: %s, %d reps, methods %s", name, config.describe(), config.n_reps, methods)
        if n_jobs == 1:
            replications = [run_replication(config, rep, methods) for rep in range(config.n_reps)]
        else:
            replications = Parallel(n_jobs=n_jobs)(
                delayed(run_replication)(config, rep, methods) for rep in range(config.n_reps)
            )
        summaries.extend(summarize_scenario(config, methods, replications))
    return ExperimentReport(name=name, summaries=tuple(summaries))


def _require_null(configs: Sequence[ScenarioConfig], experiment: str) -> None:
    for config in configs:
        if not config.is_null:
            raise ConfigError(f"{experiment} requires theta = 0, got theta = {config.theta}")


def run_type1_experiment(configs: Sequence[ScenarioConfig], methods: Sequence[str] = DEFAULT_METHODS,
                         n_jobs: int = 1, name: str = 'type1') -> ExperimentReport:
    """
    原假设下的第一类错误率实验

    参数:
        configs: 情景列表 (通常沿mu1或rho变化), theta必须为0
        methods: 方法标签列表
        n_jobs: 并行任务数
        name: 报告名称

    返回:
        ExperimentReport
    """
    configs = list(configs)
    _require_null(configs, 'type I error experiment')
    return run_scenarios(configs, methods, n_jobs=n_jobs, name=name)


def run_power_experiment(configs: Sequence[ScenarioConfig], methods: Sequence[str] = DEFAULT_METHODS,
                         n_jobs: int = 1, name: str = 'power') -> ExperimentReport:
    """
    功效曲线: 每个theta下每个方法的拒绝率

    参数:
        configs: 沿theta变化的情景列表
        methods: 方法标签列表
        n_jobs: 并行任务数
        name: 报告名称

    返回:
        ExperimentReport, 可直接用于绘图
    """
    return run_scenarios(list(configs), methods, n_jobs=n_jobs, name=name)


def run_robustness_experiment(configs: Sequence[ScenarioConfig], methods: Sequence[str] = ('sc_adj',),
                              n_jobs: int = 1, name: str = 'table2') -> ExperimentReport:
    """
    误差非正态时校正后估计量的第一类错误率

    参数:
        configs: 沿df x rho变化的情景列表, theta必须为0
        methods: 方法标签列表, 默认为校正后的合成控制
        n_jobs: 并行任务数
        name: 报告名称

    返回:
        ExperimentReport
    """
    configs = list(configs)
    _require_null(configs, 'robustness experiment')
    return run_scenarios(configs, methods, n_jobs=n_jobs, name=name)


RUNNERS = {
    'type1': run_type1_experiment,
    'power': run_power_experiment,
    'robustness': run_robustness_experiment,
}


class MonteCarloExperiment:
    """按名称构造并运行蒙特卡洛实验"""

    def __init__(self, config: Dict[str, Any]):
        """
        初始化实验运行器

        参数:
            config: 全局配置字典, 读取其中的simulation与experiments段
        """
        self.config = config
        self.base = ScenarioConfig.from_dict(config.get('simulation', {}) or {})
        self.overrides = config.get('experiments', {}) or {}
        execution = config.get('execution') or {}
        self.n_jobs = int(execution.get('n_jobs', 1))
        self.results_dir = execution.get('results_dir', 'results')

    @staticmethod
    def names() -> List[str]:
        return list(EXPERIMENTS)

    def definition(self, name: str) -> Dict[str, Any]:
        if name not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment '{name}'; choose from {sorted(EXPERIMENTS)}")
        definition = dict(EXPERIMENTS[name])
        definition.update(self.overrides.get(name, {}) or {})
        return definition

    def scenarios(self, name: str, n_reps: Optional[int] = None, seed: Optional[int] = None) -> List[ScenarioConfig]:
        """
        命名实验的情景列表

        参数:
            name: 实验名称
            n_reps: 覆盖重复次数
            seed: 覆盖随机种子

        返回:
            ScenarioConfig列表, 顺序即报告行顺序
        """
        definition = self.definition(name)
        base = self.base.with_updates(**dict(definition.get('fixed', {}) or {}))
        if n_reps is not None:
            base = base.with_updates(n_reps=int(n_reps))
        if seed is not None:
            base = base.with_updates(seed=int(seed))
        axis = definition['axis']
        rho_values = definition.get('rho_values')
        try:
            configs = []
            for value in definition['values']:
                value = _as_number(value)
                changes = {axis: value}
                if axis == 'df':
                    # df为inf的行使用正态误差
                    changes['error_family'] = 'normal' if math.isinf(value) else 't'
                if rho_values:
                    configs.extend(base.with_updates(rho=float(rho), **changes) for rho in rho_values)
                else:
                    configs.append(base.with_updates(**changes))
        except ValueError as exc:
            raise ConfigError(f"experiment '{name}': {exc}") from exc
        return configs

    def run(self, name: str, n_reps: Optional[int] = None, seed: Optional[int] = None,
            n_jobs: Optional[int] = None, methods: Optional[Sequence[str]] = None) -> ExperimentReport:
        """
        运行命名实验

        参数:
            name: table1-mu, table1-rho, power, table2 或 bias
            n_reps: 覆盖重复次数
            seed: 覆盖随机种子
            n_jobs: 覆盖并行任务数
            methods: 覆盖方法列表

        返回:
            ExperimentReport
        """
        definition = self.definition(name)
        configs = self.scenarios(name, n_reps=n_reps, seed=seed)
        runner = RUNNERS[definition.get('kind', 'power')]
        return runner(configs, list(methods or definition['methods']),
                      n_jobs=self.n_jobs if n_jobs is None else n_jobs, name=name)

    def save_report(self, report: ExperimentReport, path: Optional[str] = None) -> str:
        """保存报告CSV, 默认保存到results目录下的<实验名>.csv"""
        path = path or os.path.join(self.results_dir, f"{report.name}.csv")
        report.to_csv(path)
        logger.info("report written to %s", path)
        return path


def _as_number(value: Any) -> float:
    if isinstance(value, str) and value.lower() in ('inf', 'infinity', '.inf'):
        return math.inf
    number = float(value)
    if np.isnan(number):
        raise ValueError("grid values must not be NaN")
    return number
