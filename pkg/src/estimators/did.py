"""
DID估计与回归均值 (RTM) 校正

theta_obs: 处理后时期 (处理单元 - 加权对照) 的均值减去处理前时期同一差值的均值。
theta_rtm: 以"给定最后一个处理前观测的条件期望"替换处理后观测得到的DID, 即纯RTM在无处理效应时造成的DID。
theta_adj = theta_obs - theta_rtm。
"""
from typing import Optional

import numpy as np

from src.types import Ar1ErrorSpec, AttResult, ControlWeights, MeanModel, Panel


def _check_weights(panel: Panel, weights: ControlWeights) -> None:
    indices = weights.control_indices
    if indices.size and (indices.min() < 0 or indices.max() >= panel.n_units):
        raise ValueError(f"weights reference units outside a panel of {panel.n_units} units")
    if panel.treated_index in indices:
        raise ValueError(f"weights include the treated unit '{panel.treated_id}'")


def weighted_control(panel: Panel, weights: ControlWeights) -> np.ndarray:
    """加权对照 (合成对照) 序列 sum_k w_k Y_k"""
    _check_weights(panel, weights)
    return weights.weights @ panel.outcomes[weights.control_indices]


def did_estimate(panel: Panel, weights: ControlWeights) -> float:
    """
    对任意对照权重计算DID

    参数:
        panel: 面板
        weights: 对照权重

    返回:
        theta_obs
    """
    gap = panel.treated_series - weighted_control(panel, weights)
    return float(np.mean(gap[panel.tau0:]) - np.mean(gap[:panel.tau0]))


def rtm_expected_outcomes(series, unit_mean, spec: Ar1ErrorSpec, tau0: int,
                          anchor: Optional[float] = None) -> np.ndarray:
    """
    给定最后一个处理前观测时处理后各期的条件期望

    Y_hat_{tau0+k} = mu_{tau0+k} + Sigma_{j,tau0} / Sigma_{tau0,tau0} * (Y_tau0 - mu_tau0),
    在AR(1)下增益为 rho^k。

    参数:
        series: 单元的结果序列
        unit_mean: 同一单元各期均值
        spec: AR(1)误差结构
        tau0: 处理前时期数 (条件观测为第tau0个时点)
        anchor: 中心化所用的均值, 默认为本单元在tau0时的均值

    返回:
        长度 n_times - tau0 的期望向量
    """
    series = np.asarray(series, dtype=float)
    unit_mean = np.asarray(unit_mean, dtype=float)
    if series.shape != unit_mean.shape or series.ndim != 1:
        raise ValueError("series and unit mean must be vectors of equal length")
    if not 1 <= tau0 < series.shape[0]:
        raise ValueError(f"tau0 must satisfy 1 <= tau0 < {series.shape[0]}, got {tau0}")
    if not 0.0 <= spec.rho < 1.0:
        raise ValueError(f"rho must lie in [0, 1), got {spec.rho}")
    last = tau0 - 1
    centre = unit_mean[last] if anchor is None else float(anchor)
    gains = np.cumprod(np.full(series.shape[0] - tau0, spec.rho))
    return unit_mean[tau0:] + gains * (series[last] - centre)


def theta_rtm(panel: Panel, weights: ControlWeights, mean_model: MeanModel, spec: Ar1ErrorSpec,
              literal_anchor: bool = False) -> float:
    """
    纯RTM下的期望DID (增广合成控制)

    对处理单元和每个正权重对照计算处理后条件期望, 用同一组权重构造增广对照;
    返回 处理后期望差值的均值 - 处理前观测差值的均值。

    参数:
        panel: 面板
        weights: 对照权重
        mean_model: 未处理状态均值模型
        spec: AR(1)误差结构
        literal_anchor: 为True时所有单元都以处理单元在tau0的均值中心化

    返回:
        theta_rtm
    """
    _check_weights(panel, weights)
    if mean_model.n_units != panel.n_units or mean_model.n_times != panel.n_times:
        raise ValueError(f"mean model covers {mean_model.n_units} units x {mean_model.n_times} times, "
                         f"panel has {panel.n_units} x {panel.n_times}")
    means = mean_model.evaluate()
    treated = panel.treated_index
    active = weights.weights > 0
    needed = np.concatenate([[treated], weights.control_indices[active]])
    missing = [panel.unit_ids[i] for i in needed if not np.all(np.isfinite(means[i]))]
    if missing:
        raise ValueError(f"mean model does not cover weighted unit(s): {missing}")

    anchor = means[treated, panel.tau0 - 1] if literal_anchor else None
    expected_treated = rtm_expected_outcomes(panel.outcomes[treated], means[treated], spec, panel.tau0, anchor)
    expected_control = np.zeros(panel.n_post)
    for unit, weight in zip(weights.control_indices[active], weights.weights[active]):
        expected_control += weight * rtm_expected_outcomes(panel.outcomes[unit], means[unit], spec,
                                                           panel.tau0, anchor)
    pre_gap = panel.treated_series[:panel.tau0] - weighted_control(panel, weights)[:panel.tau0]
    return float(np.mean(expected_treated - expected_control) - np.mean(pre_gap))


def adjusted_att(panel: Panel, weights: ControlWeights, mean_model: MeanModel, spec: Ar1ErrorSpec,
                 literal_anchor: bool = False) -> AttResult:
    """
    RTM校正后的ATT

    参数:
        panel: 面板
        weights: 对照权重
        mean_model: 未处理状态均值模型
        spec: AR(1)误差结构
        literal_anchor: 见theta_rtm

    返回:
        AttResult, theta_adj = theta_obs - theta_rtm
    """
    observed = did_estimate(panel, weights)
    expected = theta_rtm(panel, weights, mean_model, spec, literal_anchor=literal_anchor)
    return AttResult.build(observed, expected, weights)
