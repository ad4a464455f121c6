import logging
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from src.estimators import (
    EstimatorConfig,
    SensitivityGrid,
    adjusted_att,
    did_estimate,
    placebo_estimates,
    placebo_test,
    robustness_thresholds,
    sensitivity_sweep
)
from src.exceptions import AnalysisError, RtmDidError
from src.matching import PredictorSpec, get_matcher
from src.types import Ar1ErrorSpec, AttResult, ControlWeights, MeanModel, Panel, PlaceboDistribution, SensitivityRow
from src.utils.gee import RHO_CEILING, GeeFit, gee_ar1_fit, residual_ar1_estimates
from src.utils.panel_io import AnalysisConfig, load_analysis_config, load_panel

logger = logging.getLogger(__name__)

REPORT_FILES = ('weights.csv', 'att.csv', 'placebo.csv', 'gee.csv', 'sensitivity.csv')
PREDICTOR_PREFIX = 'predictor_'


@dataclass(frozen=True, eq=False)
class AnalysisReport:
    """
    观测数据分析结果

    参数:
        panel: 分析的面板
        config: 分析配置
        att: theta_obs, theta_rtm, theta_adj 与对照权重
        placebo: 未校正估计的安慰剂分布
        placebo_adjusted: 校正后估计的安慰剂分布
        mean_model: 校正使用的均值模型
        spec: 校正使用的AR(1)误差结构
        gee: GEE拟合结果 (adjustment为explicit时为None)
        residual_s2, residual_rho: 残差方差与相邻残差相关 (未截断)
        sensitivity: 敏感性分析结果
        thresholds: 每个(rho, sigma2)下翻转显著性所需的最小|Delta|
    """
    panel: Panel
    config: AnalysisConfig
    att: AttResult
    placebo: PlaceboDistribution
    placebo_adjusted: PlaceboDistribution
    mean_model: MeanModel
    spec: Ar1ErrorSpec
    gee: Optional[GeeFit]
    residual_s2: Optional[float]
    residual_rho: Optional[float]
    sensitivity: List[SensitivityRow] = field(default_factory=list)
    thresholds: Dict[Tuple[float, float], Optional[float]] = field(default_factory=dict)

    def __post_init__(self):
        if self.att.theta_adj != self.att.theta_obs - self.att.theta_rtm:
            raise ValueError("report violates theta_adj = theta_obs - theta_rtm")

    @property
    def weights(self) -> ControlWeights:
        return self.att.weights

    def weights_frame(self) -> pd.DataFrame:
        weights = self.weights
        return pd.DataFrame({
            'unit_id': [self.panel.unit_ids[i] for i in weights.control_indices],
            'weight': weights.weights,
        })

    def att_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{
            'treated_unit': self.panel.treated_id,
            'method': self.config.method,
            'theta_obs': self.att.theta_obs,
            'theta_rtm': self.att.theta_rtm,
            'theta_adj': self.att.theta_adj,
            'p_value': self.placebo.p_value,
            'n_extreme': self.placebo.n_extreme,
            'p_value_adj': self.placebo_adjusted.p_value,
            'n_extreme_adj': self.placebo_adjusted.n_extreme,
            'n_units': self.panel.n_units,
            'rho': self.spec.rho,
            's2': self.spec.sigma2,
            'alpha': self.config.alpha,
        }])

    def placebo_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'unit_id': list(self.panel.unit_ids),
            'is_treated': [i == self.panel.treated_index for i in range(self.panel.n_units)],
            'theta_obs': self.placebo.estimates,
            'theta_adj': self.placebo_adjusted.estimates,
        })

    def gee_frame(self) -> pd.DataFrame:
        if self.gee is not None:
            rows = self.gee.summary_rows()
            rows.append({'term': 'residual_s2', 'estimate': self.residual_s2, 'std_error': np.nan})
            rows.append({'term': 'residual_rho', 'estimate': self.residual_rho, 'std_error': np.nan})
        else:
            rows = [{'term': 'explicit_s2', 'estimate': self.spec.sigma2, 'std_error': np.nan},
                    {'term': 'explicit_rho', 'estimate': self.spec.rho, 'std_error': np.nan}]
        return pd.DataFrame(rows, columns=['term', 'estimate', 'std_error'])

    def sensitivity_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{
            'delta': row.delta,
            'rho': row.rho,
            's2': row.s2,
            'theta_adj': row.theta_adj,
            'p_value': row.p_value,
            'reject_at_alpha': row.rejects(self.config.alpha),
        } for row in self.sensitivity], columns=['delta', 'rho', 's2', 'theta_adj', 'p_value', 'reject_at_alpha'])

    def write(self, out_dir: str) -> List[str]:
        """
        写出全部报告文件

        参数:
            out_dir: 输出目录

        返回:
            写出的文件路径
        """
        os.makedirs(out_dir, exist_ok=True)
        frames = {
            'weights.csv': self.weights_frame(),
            'att.csv': self.att_frame(),
            'placebo.csv': self.placebo_frame(),
            'gee.csv': self.gee_frame(),
            'sensitivity.csv': self.sensitivity_frame(),
        }
        paths = []
        for name in REPORT_FILES:
            path = os.path.join(out_dir, name)
            frames[name].to_csv(path, index=False, float_format='%.17g')
            paths.append(path)
        return paths


def _stage(name: str, action: Callable[[], Any]) -> Any:
    try:
        return action()
    except AnalysisError:
        raise
    except Exception as exc:
        raise AnalysisError(name, exc) from exc


def matcher_options(config: AnalysisConfig) -> Dict[str, Any]:
    if config.method == 'sc' and config.predictors:
        return {'predictors': PredictorSpec.from_dict(config.predictors)}
    return {}


def with_predictor_covariates(panel: Panel, config: AnalysisConfig) -> Tuple[Panel, List[str]]:
    """把单元级预测变量在时间上广播, 作为GEE可用的协变量附加到面板"""
    spec = PredictorSpec.from_dict(config.predictors)
    values = spec.unit_predictors(panel)
    covariates = dict(panel.covariates)
    names = []
    for name, row in zip(spec.predictor_names(), values):
        column = f"{PREDICTOR_PREFIX}{name}"
        covariates[column] = np.repeat(row[:, None], panel.n_times, axis=1)
        names.append(column)
    return Panel(outcomes=panel.outcomes, unit_ids=panel.unit_ids, times=panel.times,
                 treated_index=panel.treated_index, tau0=panel.tau0, covariates=covariates), names


def fit_mean_model(panel: Panel, config: AnalysisConfig) -> Tuple[MeanModel, Ar1ErrorSpec, Optional[GeeFit],
                                                                   Optional[float], Optional[float]]:
    """
    校正所需的均值模型与AR(1)误差结构

    gee: GEE拟合均值模型, 再由残差估计sigma2与rho (rho截断到[0, 0.99]);
    explicit: 每个单元取处理前均值为常数均值, sigma2与rho取配置值。

    返回:
        (均值模型, 误差结构, GEE拟合, 残差方差, 残差相关)
    """
    if config.adjustment == 'explicit':
        model = MeanModel.constant(panel.pre_outcomes.mean(axis=1), panel.times)
        return model, Ar1ErrorSpec(sigma2=float(config.s2), rho=float(config.rho)), None, None, None

    gee_panel, columns = panel, list(config.gee_covariates)
    if config.gee_use_predictors:
        gee_panel, extra = with_predictor_covariates(panel, config)
        columns += extra
    fit = gee_ar1_fit(gee_panel, columns)
    s2_hat, rho_hat = residual_ar1_estimates(gee_panel, fit.model)
    rho = float(np.clip(rho_hat, 0.0, RHO_CEILING))
    if rho != rho_hat:
        logger.warning("residual correlation %.4f clamped to %.2f for the adjustment", rho_hat, rho)
    return fit.model, Ar1ErrorSpec(sigma2=s2_hat, rho=rho), fit, s2_hat, rho_hat


def analyze(panel: Panel, config) -> AnalysisReport:
    """
    观测数据分析流水线

    匹配 -> DID -> 均值模型 (GEE或给定参数) -> RTM校正 -> 安慰剂检验 (未校正与校正) -> 敏感性分析。
    任何阶段失败都会包装为带阶段名的AnalysisError。

    参数:
        panel: 面板
        config: AnalysisConfig、配置字典或配置文件路径

    返回:
        AnalysisReport
    """
    config = load_analysis_config(config)
    # 方法名和预测变量配置错误属于配置问题, 不包装为阶段错误
    estimator = EstimatorConfig(method=config.method, matcher_options=matcher_options(config),
                                literal_anchor=config.literal_anchor)
    matcher = get_matcher(estimator.method, estimator.matcher_options)

    weights = _stage('matching', lambda: matcher.match(panel))
    theta_obs = _stage('did', lambda: did_estimate(panel, weights))
    logger.info("%s weights on %d control(s); theta_obs = %.4f", config.method, weights.selected.size, theta_obs)

    mean_model, spec, fit, residual_s2, residual_rho = _stage('mean_model', lambda: fit_mean_model(panel, config))
    logger.info("adjustment parameters: rho = %.4f, s2 = %.4f (%s)", spec.rho, spec.sigma2, config.adjustment)
    att = _stage('adjustment', lambda: adjusted_att(panel, weights, mean_model, spec,
                                                   literal_anchor=config.literal_anchor))

    adjusted = estimator.with_updates(adjust=True, mean_model=mean_model, spec=spec)

    def placebo_stage():
        _, weights_by_unit = placebo_estimates(panel, estimator, n_jobs=config.n_jobs)
        plain = placebo_test(panel, estimator, weights_by_unit=weights_by_unit, n_jobs=config.n_jobs)
        corrected = placebo_test(panel, adjusted, weights_by_unit=weights_by_unit, n_jobs=config.n_jobs)
        return weights_by_unit, plain, corrected

    weights_by_unit, placebo, placebo_adjusted = _stage('placebo', placebo_stage)
    logger.info("placebo p = %d/%d unadjusted, %d/%d adjusted", placebo.n_extreme, placebo.n_units,
                placebo_adjusted.n_extreme, placebo_adjusted.n_units)

    def sensitivity_stage():
        grid = SensitivityGrid(delta_values=config.delta_grid(), base_mean_model=mean_model, base_spec=spec,
                               rho_values=config.sensitivity_rho_values, s2_values=config.sensitivity_s2_values)
        rows = sensitivity_sweep(panel, grid, adjusted, n_jobs=config.n_jobs, weights_by_unit=weights_by_unit)
        return rows, robustness_thresholds(rows, config.alpha)

    rows, thresholds = _stage('sensitivity', sensitivity_stage)
    return AnalysisReport(panel=panel, config=config, att=att, placebo=placebo, placebo_adjusted=placebo_adjusted,
                          mean_model=mean_model, spec=spec, gee=fit, residual_s2=residual_s2,
                          residual_rho=residual_rho, sensitivity=rows, thresholds=thresholds)


def print_report(report: AnalysisReport) -> None:
    print(f"\n{'='*60}")
    print(f"处理单元: {report.panel.treated_id}  方法: {report.config.method}")
    print(f"{'='*60}")
    print(f"对照权重 (非零):")
    for unit, weight in zip(report.weights.control_indices, report.weights.weights):
        if weight > 1e-6:
            print(f"  {report.panel.unit_ids[unit]}: {weight:.4f}")
    print(f"theta_obs: {report.att.theta_obs:.4f}  p = {report.placebo.n_extreme}/{report.placebo.n_units}")
    print(f"theta_rtm: {report.att.theta_rtm:.4f}")
    print(f"theta_adj: {report.att.theta_adj:.4f}  "
          f"p = {report.placebo_adjusted.n_extreme}/{report.placebo_adjusted.n_units}")
    print(f"校正参数: rho = {report.spec.rho:.4f}, s2 = {report.spec.sigma2:.4f}")
    for (rho, s2), threshold in report.thresholds.items():
        label = '网格内无翻转' if threshold is None else f"{threshold:+.3f}"
        print(f"敏感性 (rho={rho:.3f}, s2={s2:.3f}) 翻转显著性的最小Delta: {label}")


def run_analysis(data_path: str, config_path: str, out_dir: str = 'results/analysis',
                 wide: bool = False, n_jobs: Optional[int] = None) -> AnalysisReport:
    """
    读取数据与配置, 运行分析并写出报告

    参数:
        data_path: 面板CSV路径
        config_path: 分析配置路径
        out_dir: 报告输出目录
        wide: 输入是否为宽表
        n_jobs: 覆盖配置中的并行任务数

    返回:
        AnalysisReport
    """
    config = load_analysis_config(config_path)
    if n_jobs is not None:
        config = config.with_updates(n_jobs=n_jobs)
    panel = load_panel(data_path, config, wide=wide)
    report = analyze(panel, config)
    paths = report.write(out_dir)
    print_report(report)
    print(f"\n报告已保存到: {out_dir} ({len(paths)} 个文件)")
    return report


def run_sensitivity(data_path: str, config_path: str, out_path: str = 'results/sensitivity.csv',
                    wide: bool = False, n_jobs: Optional[int] = None) -> AnalysisReport:
    """只输出敏感性分析结果的分析流程"""
    config = load_analysis_config(config_path)
    if n_jobs is not None:
        config = config.with_updates(n_jobs=n_jobs)
    report = analyze(load_panel(data_path, config, wide=wide), config)
    directory = os.path.dirname(out_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    report.sensitivity_frame().to_csv(out_path, index=False, float_format='%.17g')
    for (rho, s2), threshold in report.thresholds.items():
        label = 'none' if threshold is None else f"{threshold:+.3f}"
        print(f"rho={rho:.3f} s2={s2:.3f}: smallest flipping delta {label}")
    print(f"敏感性分析结果已保存到: {out_path}")
    return report


if __name__ == '__main__':
    import argparse

    parser = argparse.ArgumentParser(description='rtmdid 观测数据分析')
    parser.add_argument('--data', type=str, required=True, help='面板CSV路径')
    parser.add_argument('--config', type=str, default='config/prop99.yaml', help='分析配置路径')
    parser.add_argument('--out', type=str, default='results/analysis', help='报告输出目录')
    parser.add_argument('--wide', action='store_true', help='输入为宽表 (每年一列)')
    args = parser.parse_args()

    logging.basicConfig(level=logging.INFO, format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        run_analysis(args.data, args.config, out_dir=args.out, wide=args.wide)
    except RtmDidError as exc:
        print(f"分析失败: {exc}")
        raise SystemExit(2)
