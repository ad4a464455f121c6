from typing import Optional, Sequence

import numpy as np

from src.matching.base import BaseMatcher
from src.types import ControlWeights, Panel
from src.utils.linalg import ols_fit


def _as_inputs(treated_pre, control_pre):
    treated_pre = np.asarray(treated_pre, dtype=float)
    control_pre = np.asarray(control_pre, dtype=float)
    if control_pre.ndim != 2 or control_pre.shape[1] == 0:
        raise ValueError("need at least one control")
    if treated_pre.shape != (control_pre.shape[0],):
        raise ValueError(f"treated vector of shape {treated_pre.shape} does not match {control_pre.shape[0]} rows")
    if not (np.all(np.isfinite(treated_pre)) and np.all(np.isfinite(control_pre))):
        raise ValueError("matching inputs must be finite")
    return treated_pre, control_pre


def l2_distances(treated_pre, control_pre) -> np.ndarray:
    """处理单元与每个对照单元处理前结果的欧氏距离"""
    treated_pre, control_pre = _as_inputs(treated_pre, control_pre)
    return np.linalg.norm(control_pre - treated_pre[:, None], axis=0)


def nn_l2(treated_pre, control_pre, control_indices: Optional[Sequence[int]] = None) -> ControlWeights:
    """
    最近邻匹配 (L2距离)

    参数:
        treated_pre: 处理单元处理前结果
        control_pre: (处理前时点数, 对照数) 矩阵
        control_indices: 对照单元在面板中的下标, 默认0..K-1

    返回:
        one-hot ControlWeights, 距离相同时取下标最小者
    """
    distances = l2_distances(treated_pre, control_pre)
    if control_indices is None:
        control_indices = np.arange(distances.shape[0])
    return ControlWeights.one_hot(control_indices, int(np.argmin(distances)), 'nn_l2')


def trend_coefficients(series, time_index) -> np.ndarray:
    """
    每个序列对时间的OLS截距与斜率

    参数:
        series: (时点数,) 或 (时点数, 序列数)
        time_index: 时间标签

    返回:
        (2,) 或 (2, 序列数) 系数 [截距, 斜率]
    """
    time_index = np.asarray(time_index, dtype=float)
    if time_index.shape[0] < 2 or np.ptp(time_index) == 0:
        raise ValueError("time index is degenerate: need at least two distinct pre-treatment times")
    design = np.column_stack([np.ones_like(time_index), time_index])
    return ols_fit(design, np.asarray(series, dtype=float))


def trend_distances(treated_pre, control_pre, time_index, slope_only: bool = False) -> np.ndarray:
    """处理单元与每个对照单元趋势系数的L1距离"""
    treated_pre, control_pre = _as_inputs(treated_pre, control_pre)
    treated = trend_coefficients(treated_pre, time_index)
    controls = trend_coefficients(control_pre, time_index)
    gaps = np.abs(controls - treated[:, None])
    return gaps[1] if slope_only else gaps.sum(axis=0)


def nn_trend(treated_pre, control_pre, time_index, slope_only: bool = False,
             control_indices: Optional[Sequence[int]] = None) -> ControlWeights:
    """
    最近邻匹配 (处理前线性趋势系数的L1距离)

    参数:
        treated_pre: 处理单元处理前结果
        control_pre: (处理前时点数, 对照数) 矩阵
        time_index: 处理前时间标签
        slope_only: 为True时只比较斜率
        control_indices: 对照单元在面板中的下标, 默认0..K-1

    返回:
        one-hot ControlWeights, 距离相同时取下标最小者
    """
    distances = trend_distances(treated_pre, control_pre, time_index, slope_only=slope_only)
    if control_indices is None:
        control_indices = np.arange(distances.shape[0])
    return ControlWeights.one_hot(control_indices, int(np.argmin(distances)), 'nn_trend')


class NearestNeighborL2Matcher(BaseMatcher):
    """NN1: 处理前结果水平的最近邻"""

    name = 'nn_l2'

    def match(self, panel: Panel) -> ControlWeights:
        return nn_l2(panel.pre_outcomes[panel.treated_index], panel.control_pre_matrix(),
                     control_indices=panel.control_indices)


class NearestNeighborTrendMatcher(BaseMatcher):
    """NN2: 处理前线性趋势的最近邻"""

    name = 'nn_trend'
    params = (
        ('slope_only', False),
    )

    def match(self, panel: Panel) -> ControlWeights:
        return nn_trend(panel.pre_outcomes[panel.treated_index], panel.control_pre_matrix(), panel.pre_times,
                        slope_only=self.p.slope_only, control_indices=panel.control_indices)
