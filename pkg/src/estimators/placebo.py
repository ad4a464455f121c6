"""
安慰剂置换检验

依次把每个单元重标记为处理单元, 其余单元作为对照, 重新执行完整流程
(匹配 -> DID -> 可选的RTM校正), 得到每个单元的估计值。
p = #{i : |theta_i| >= |theta_treated|} / n, 计数包含处理单元本身, 因而 p >= 1/n。
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from src.estimators.did import adjusted_att, did_estimate
from src.exceptions import ConfigError, EstimationError
from src.matching import BaseMatcher, get_matcher
from src.types import Ar1ErrorSpec, ControlWeights, MeanModel, Panel, PlaceboDistribution

logger = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-10


@dataclass(frozen=True, eq=False)
class EstimatorConfig:
    """
    估计流程配置

    参数:
        method: 匹配方法 unmatched, sc, nn_l2, nn_trend
        matcher_options: 传给匹配器的参数
        adjust: 是否做RTM校正
        mean_model: 校正所用的均值模型 (adjust为True时必需)
        spec: 校正所用的AR(1)误差结构 (adjust为True时必需)
        delta: 对当前处理单元均值模型的平移 (敏感性参数)
        literal_anchor: 是否所有单元都以处理单元在tau0的均值中心化
    """
    method: str = 'sc'
    matcher_options: Dict[str, Any] = field(default_factory=dict)
    adjust: bool = False
    mean_model: Optional[MeanModel] = None
    spec: Optional[Ar1ErrorSpec] = None
    delta: float = 0.0
    literal_anchor: bool = False

    def __post_init__(self):
        if self.adjust and (self.mean_model is None or self.spec is None):
            raise ConfigError("RTM adjustment needs both a mean model and an AR(1) error spec")

    def matcher(self) -> BaseMatcher:
        return get_matcher(self.method, self.matcher_options)

    def with_updates(self, **changes) -> 'EstimatorConfig':
        return replace(self, **changes)

    @property
    def label(self) -> str:
        return f"{self.method}_adj" if self.adjust else self.method


def relabelled_estimate(panel: Panel, config: EstimatorConfig, unit: int,
                        weights: Optional[ControlWeights] = None,
                        matcher: Optional[BaseMatcher] = None) -> Tuple[float, ControlWeights]:
    """
    以unit为处理单元执行估计流程

    参数:
        panel: 面板 (处理单元标记任意)
        config: 估计流程配置
        unit: 被重标记为处理单元的行下标
        weights: 预先计算好的对照权重, 给定时不再重新匹配
        matcher: 复用的匹配器实例

    返回:
        (估计值, 对照权重); 校正开启时估计值为theta_adj, 否则为theta_obs
    """
    relabelled = panel.with_treated(unit)
    if weights is None:
        weights = (matcher or config.matcher()).match(relabelled)
    if not config.adjust:
        return did_estimate(relabelled, weights), weights
    mean_model = config.mean_model
    if config.delta:
        mean_model = mean_model.with_offset(unit, config.delta)
    result = adjusted_att(relabelled, weights, mean_model, config.spec, literal_anchor=config.literal_anchor)
    return result.theta_adj, weights


def _guarded_estimate(panel: Panel, config: EstimatorConfig, unit: int,
                      weights: Optional[ControlWeights]) -> Tuple[float, ControlWeights]:
    try:
        return relabelled_estimate(panel, config, unit, weights=weights)
    except Exception as exc:
        raise EstimationError(panel.unit_ids[unit], exc) from exc


def count_extreme(estimates: np.ndarray, treated_index: int) -> int:
    """|theta_i| >= |theta_treated| 的单元数 (相对容差内的并列计入)"""
    magnitudes = np.abs(np.asarray(estimates, dtype=float))
    reference = magnitudes[treated_index]
    slack = TIE_TOLERANCE * max(1.0, reference)
    return int(np.count_nonzero(magnitudes >= reference - slack))


def placebo_estimates(panel: Panel, config: EstimatorConfig,
                      weights_by_unit: Optional[Sequence[ControlWeights]] = None,
                      n_jobs: int = 1) -> Tuple[np.ndarray, List[ControlWeights]]:
    """
    每个重标记下的估计值与对照权重

    参数:
        panel: 面板
        config: 估计流程配置
        weights_by_unit: 每个重标记预先计算的对照权重 (长度n_units), 可选
        n_jobs: 并行任务数, 1表示顺序执行

    返回:
        (估计值向量, 权重列表), 顺序与面板单元顺序一致
    """
    if panel.n_units < 2:
        raise ValueError("placebo test needs at least two units")
    if weights_by_unit is not None and len(weights_by_unit) != panel.n_units:
        raise ValueError(f"{len(weights_by_unit)} precomputed weight vectors for {panel.n_units} units")
    precomputed = list(weights_by_unit) if weights_by_unit is not None else [None] * panel.n_units
    if n_jobs == 1:
        matcher = config.matcher()
        results = []
        for unit in range(panel.n_units):
            try:
                results.append(relabelled_estimate(panel, config, unit, weights=precomputed[unit], matcher=matcher))
            except Exception as exc:
                raise EstimationError(panel.unit_ids[unit], exc) from exc
    else:
        results = Parallel(n_jobs=n_jobs)(
            delayed(_guarded_estimate)(panel, config, unit, precomputed[unit]) for unit in range(panel.n_units)
        )
    estimates = np.array([estimate for estimate, _ in results])
    return estimates, [weights for _, weights in results]


def placebo_test(panel: Panel, config: EstimatorConfig,
                 weights_by_unit: Optional[Sequence[ControlWeights]] = None,
                 n_jobs: int = 1) -> PlaceboDistribution:
    """
    安慰剂置换检验

    参数:
        panel: 面板
        config: 估计流程配置 (匹配方法, 是否校正, 均值模型与误差结构)
        weights_by_unit: 预先计算的每个重标记的对照权重, 可选
        n_jobs: 并行任务数

    返回:
        PlaceboDistribution
    """
    estimates, _ = placebo_estimates(panel, config, weights_by_unit=weights_by_unit, n_jobs=n_jobs)
    n_extreme = count_extreme(estimates, panel.treated_index)
    logger.debug("placebo test (%s): treated estimate %.6g, p = %d/%d",
                 config.label, estimates[panel.treated_index], n_extreme, panel.n_units)
    return PlaceboDistribution(estimates=estimates, unit_ids=panel.unit_ids,
                               treated_index=panel.treated_index, n_extreme=n_extreme)


def reject_null(dist: PlaceboDistribution, alpha: float) -> bool:
    """
    p值严格小于alpha时拒绝无处理效应的原假设

    参数:
        dist: 安慰剂分布
        alpha: 显著性水平, 0 < alpha < 1

    返回:
        是否拒绝
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return dist.p_value < alpha
