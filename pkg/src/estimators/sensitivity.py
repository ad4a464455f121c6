"""
RTM敏感性分析

把处理单元均值模型的平移Delta (以及可选的rho, sigma2) 当作敏感性参数,
在网格的每个点上重新计算theta_adj和安慰剂p值。对照权重只计算一次, 不随Delta重新匹配。
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.estimators.placebo import EstimatorConfig, placebo_estimates, placebo_test
from src.types import Ar1ErrorSpec, ControlWeights, MeanModel, Panel, SensitivityRow

logger = logging.getLogger(__name__)


def shift_mean_model(model: MeanModel, delta: float, unit: int) -> MeanModel:
    """
    把指定单元的均值在所有时点平移delta

    参数:
        model: 均值模型
        delta: 平移量
        unit: 单元下标

    返回:
        新的均值模型, 其余单元不变
    """
    return model.with_offset(unit, delta)


def default_delta_grid(start: float = -5.0, stop: float = 5.0, num: int = 21) -> np.ndarray:
    return np.linspace(start, stop, num)


@dataclass(frozen=True, eq=False)
class SensitivityGrid:
    """
    敏感性参数网格

    参数:
        delta_values: 处理单元均值平移量
        base_mean_model: 基准均值模型
        base_spec: 基准AR(1)误差结构
        rho_values: 可选的rho网格, 默认只用base_spec.rho
        s2_values: 可选的sigma2网格, 默认只用base_spec.sigma2
    """
    delta_values: Sequence[float]
    base_mean_model: MeanModel
    base_spec: Ar1ErrorSpec
    rho_values: Optional[Sequence[float]] = None
    s2_values: Optional[Sequence[float]] = None

    def __post_init__(self):
        for name in ('delta_values', 'rho_values', 's2_values'):
            values = getattr(self, name)
            if values is None:
                continue
            values = tuple(float(v) for v in values)
            if not values:
                raise ValueError(f"{name} must not be empty")
            if not all(np.isfinite(values)):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, values)

    def specs(self) -> List[Ar1ErrorSpec]:
        rhos = self.rho_values or (self.base_spec.rho,)
        variances = self.s2_values or (self.base_spec.sigma2,)
        return [Ar1ErrorSpec(sigma2=s2, rho=rho) for rho in rhos for s2 in variances]

    def points(self) -> List[Tuple[Ar1ErrorSpec, float]]:
        return [(spec, delta) for spec in self.specs() for delta in self.delta_values]


def sensitivity_sweep(panel: Panel, grid: SensitivityGrid, estimator_config: EstimatorConfig,
                      n_jobs: int = 1,
                      weights_by_unit: Optional[Sequence[ControlWeights]] = None) -> List[SensitivityRow]:
    """
    在敏感性网格上重算theta_adj与安慰剂p值

    参数:
        panel: 面板
        grid: 敏感性网格
        estimator_config: 估计流程配置 (使用其匹配方法与选项, 均值模型与误差结构取自网格)
        n_jobs: 安慰剂重标记的并行任务数
        weights_by_unit: 已经算好的每个重标记的对照权重, 未给定时匹配一次

    返回:
        SensitivityRow列表, 顺序为 rho -> sigma2 -> Delta
    """
    if grid.base_mean_model.n_units != panel.n_units:
        raise ValueError(f"base mean model covers {grid.base_mean_model.n_units} units, panel has {panel.n_units}")
    if weights_by_unit is None:
        matching_only = estimator_config.with_updates(adjust=False, mean_model=None, spec=None, delta=0.0)
        _, weights_by_unit = placebo_estimates(panel, matching_only, n_jobs=n_jobs)

    rows = []
    for spec, delta in grid.points():
        config = estimator_config.with_updates(adjust=True, mean_model=grid.base_mean_model, spec=spec, delta=delta)
        dist = placebo_test(panel, config, weights_by_unit=weights_by_unit, n_jobs=n_jobs)
        rows.append(SensitivityRow(delta=delta, rho=spec.rho, s2=spec.sigma2, theta_adj=dist.treated_estimate,
                                   p_value=dist.p_value, n_extreme=dist.n_extreme, n_units=dist.n_units))
        logger.info("sensitivity delta=%+.3f rho=%.3f s2=%.3f: theta_adj=%.4f p=%d/%d",
                    delta, spec.rho, spec.sigma2, dist.treated_estimate, dist.n_extreme, dist.n_units)
    return rows


def robustness_threshold(rows: Sequence[SensitivityRow], alpha: float) -> Optional[float]:
    """
    使显著性结论相对Delta = 0翻转的最小|Delta|

    参数:
        rows: 同一(rho, sigma2)下按Delta排序的敏感性结果
        alpha: 显著性水平

    返回:
        翻转所需的Delta (绝对值相同取排在前面的), 网格内没有翻转时返回None
    """
    if not rows:
        raise ValueError("no sensitivity rows")
    baseline = [row for row in rows if row.delta == 0.0]
    if len(baseline) != 1:
        raise ValueError(f"expected exactly one row at delta = 0, found {len(baseline)}")
    base_decision = baseline[0].rejects(alpha)
    flipped = [row.delta for row in rows if row.delta != 0.0 and row.rejects(alpha) != base_decision]
    if not flipped:
        return None
    return min(flipped, key=abs)


def robustness_thresholds(rows: Sequence[SensitivityRow], alpha: float) -> Dict[Tuple[float, float], Optional[float]]:
    """对多参数网格按(rho, sigma2)分组分别计算robustness_threshold"""
    groups: Dict[Tuple[float, float], List[SensitivityRow]] = {}
    for row in rows:
        groups.setdefault((row.rho, row.s2), []).append(row)
    return {key: robustness_threshold(sorted(group, key=lambda r: r.delta), alpha)
            for key, group in groups.items()}
