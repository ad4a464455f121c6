"""
合成控制: 单纯形约束最小二乘

min_w  sum_j r_j (treated_j - sum_k w_k control_jk)^2   s.t.  w >= 0, sum w = 1

用带函数值重启的加速投影梯度求解, 每步做精确的单纯形投影 (排序法)。
协变量预测变量以额外行的形式进入拟合矩阵, 行权重由调用方给定。
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.matching.base import BaseMatcher
from src.types import ControlWeights, FitReport, Panel

logger = logging.getLogger(__name__)

IMPROVEMENT_TOLERANCE = 1e-10
PATIENCE = 20
MAX_ITERATIONS = 50000


def project_simplex(values: np.ndarray) -> np.ndarray:
    """
    欧氏投影到概率单纯形 {x >= 0, sum x = 1}

    参数:
        values: 任意实向量

    返回:
        投影结果
    """
    u = np.sort(values)[::-1]
    cumulative = np.cumsum(u) - 1.0
    positions = np.arange(1, values.shape[0] + 1)
    support = np.nonzero(u - cumulative / positions > 0)[0][-1]
    shift = cumulative[support] / (support + 1)
    return np.maximum(values - shift, 0.0)


def _check_inputs(control_pre: np.ndarray, treated_pre: np.ndarray,
                  row_weights: Optional[np.ndarray]) -> np.ndarray:
    if control_pre.ndim != 2 or control_pre.shape[1] == 0:
        raise ValueError("control set is empty")
    n_rows = control_pre.shape[0]
    if n_rows < 1:
        raise ValueError("need at least one pre-treatment row")
    if treated_pre.shape != (n_rows,):
        raise ValueError(f"treated vector of shape {treated_pre.shape} does not match {n_rows} rows")
    if not (np.all(np.isfinite(control_pre)) and np.all(np.isfinite(treated_pre))):
        raise ValueError("synthetic control inputs must be finite")
    if row_weights is None:
        return np.ones(n_rows)
    row_weights = np.asarray(row_weights, dtype=float)
    if row_weights.shape != (n_rows,) or not np.all(np.isfinite(row_weights)) or np.any(row_weights < 0):
        raise ValueError("row weights must be a finite nonnegative vector with one entry per row")
    return row_weights


def fit_synthetic_control(control_pre, treated_pre, row_weights=None,
                          control_indices: Optional[Sequence[int]] = None,
                          tolerance: float = IMPROVEMENT_TOLERANCE,
                          patience: int = PATIENCE,
                          max_iterations: int = MAX_ITERATIONS) -> Tuple[ControlWeights, FitReport]:
    """
    拟合合成控制权重

    参数:
        control_pre: (行数, 对照数) 处理前对照矩阵, 行可以是处理前时点或标准化后的预测变量
        treated_pre: 处理单元对应的向量
        row_weights: 非负行权重, 默认全为1
        control_indices: 对照单元在面板中的下标, 默认0..K-1
        tolerance: 目标函数改进阈值
        patience: 连续多少次改进低于阈值视为收敛
        max_iterations: 最大迭代次数

    返回:
        (ControlWeights, FitReport)
    """
    control_pre = np.asarray(control_pre, dtype=float)
    treated_pre = np.asarray(treated_pre, dtype=float)
    row_weights = _check_inputs(control_pre, treated_pre, row_weights)
    n_controls = control_pre.shape[1]
    if control_indices is None:
        control_indices = np.arange(n_controls)

    scale = np.sqrt(row_weights)
    a = control_pre * scale[:, None]
    b = treated_pre * scale
    gram = a.T @ a
    linear = a.T @ b
    offset = float(b @ b)

    def objective(w: np.ndarray) -> float:
        return float(w @ gram @ w - 2.0 * linear @ w + offset)

    lipschitz = 2.0 * float(np.max(np.linalg.eigvalsh(gram)))
    weights = np.full(n_controls, 1.0 / n_controls)
    iterations = 0
    converged = True
    if n_controls > 1 and lipschitz > 0:
        step = 1.0 / lipschitz
        current = weights
        current_value = objective(current)
        best, best_value = current, current_value
        momentum_point = current
        t = 1.0
        stall = 0
        converged = False
        for iterations in range(1, max_iterations + 1):
            gradient = 2.0 * (gram @ momentum_point - linear)
            candidate = project_simplex(momentum_point - step * gradient)
            candidate_value = objective(candidate)
            if candidate_value > current_value:
                # 函数值上升: 丢弃动量, 从当前点重新开始
                t = 1.0
                momentum_point = current
            else:
                t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
                momentum_point = candidate + ((t - 1.0) / t_next) * (candidate - current)
                current, current_value, t = candidate, candidate_value, t_next
            if best_value - candidate_value < tolerance:
                stall += 1
            else:
                stall = 0
            if candidate_value < best_value:
                best, best_value = candidate, candidate_value
            if stall >= patience:
                converged = True
                break
        weights = best
        if not converged:
            logger.warning("synthetic control solver stopped after %d iterations without converging", iterations)

    # 顶点不劣于任何单个对照
    vertex_values = np.sum((a - b[:, None]) ** 2, axis=0)
    vertex = int(np.argmin(vertex_values))
    residual = a @ weights - b
    value = float(residual @ residual)
    if vertex_values[vertex] <= value:
        weights = np.zeros(n_controls)
        weights[vertex] = 1.0
        value = float(vertex_values[vertex])
    weights = weights / weights.sum()
    logger.debug("synthetic control fit: objective=%.3e iterations=%d", value, iterations)
    return (ControlWeights(weights=weights, control_indices=control_indices, method_tag='synthetic'),
            FitReport(objective=value, iterations=iterations, converged=converged))


@dataclass(frozen=True)
class PredictorSpec:
    """
    合成控制的预测变量行

    参数:
        covariates: 在window内取时间平均后作为预测变量的协变量
        window: (起始时间, 结束时间), 含端点; None表示全部处理前时期
        outcome_times: 直接作为预测变量的处理前结果时点 (时间标签)
        include_pre_outcomes: 是否把全部处理前结果也作为拟合行
        predictor_weight: 预测变量行的行权重
        standardize: 是否把每个预测变量行标准化为单位样本方差
    """
    covariates: Tuple[str, ...] = ()
    window: Optional[Tuple[float, float]] = None
    outcome_times: Tuple[float, ...] = ()
    include_pre_outcomes: bool = True
    predictor_weight: float = 1.0
    standardize: bool = True

    @classmethod
    def from_dict(cls, config: Dict[str, Any]) -> 'PredictorSpec':
        window = config.get('window')
        return cls(
            covariates=tuple(config.get('covariates', ()) or ()),
            window=None if window is None else (float(window[0]), float(window[1])),
            outcome_times=tuple(float(t) for t in config.get('outcome_times', ()) or ()),
            include_pre_outcomes=bool(config.get('include_pre_outcomes', True)),
            predictor_weight=float(config.get('predictor_weight', 1.0)),
            standardize=bool(config.get('standardize', True)),
        )

    def predictor_names(self) -> List[str]:
        return list(self.covariates) + [f"outcome_{t:g}" for t in self.outcome_times]

    def unit_predictors(self, panel: Panel) -> np.ndarray:
        """
        单元级预测变量矩阵 (预测变量数, n_units), 未标准化

        参数:
            panel: 面板

        返回:
            每行一个预测变量
        """
        if self.window is None:
            columns = np.arange(panel.tau0)
        else:
            columns = np.flatnonzero((panel.times >= self.window[0]) & (panel.times <= self.window[1]))
            if columns.size == 0:
                raise ValueError(f"predictor window {self.window} contains no panel times")
        rows = []
        for name in self.covariates:
            if name not in panel.covariates:
                raise KeyError(f"predictor covariate '{name}' not present in panel")
            window_values = panel.covariates[name][:, columns]
            if np.any(np.all(np.isnan(window_values), axis=1)):
                raise ValueError(f"covariate '{name}' is missing throughout the predictor window for some unit")
            rows.append(np.nanmean(window_values, axis=1))
        for time in self.outcome_times:
            column = np.flatnonzero(panel.times == time)
            if column.size == 0 or column[0] >= panel.tau0:
                raise ValueError(f"outcome predictor time {time:g} is not a pre-treatment time")
            rows.append(panel.outcomes[:, column[0]])
        if not rows:
            return np.empty((0, panel.n_units))
        return np.vstack(rows)

    def fitting_rows(self, panel: Panel) -> Tuple[np.ndarray, np.ndarray]:
        """
        拟合矩阵 (行数, n_units) 与行权重

        参数:
            panel: 面板

        返回:
            (拟合矩阵, 行权重)
        """
        blocks = []
        weights = []
        if self.include_pre_outcomes:
            blocks.append(panel.pre_outcomes.T)
            weights.append(np.ones(panel.tau0))
        predictors = self.unit_predictors(panel)
        if predictors.shape[0]:
            if self.standardize:
                spread = np.std(predictors, axis=1, ddof=1)
                spread[spread == 0] = 1.0
                predictors = predictors / spread[:, None]
            blocks.append(predictors)
            weights.append(np.full(predictors.shape[0], self.predictor_weight))
        if not blocks:
            raise ValueError("synthetic control has no fitting rows (no pre-treatment outcomes and no predictors)")
        return np.vstack(blocks), np.concatenate(weights)


class SyntheticControlMatcher(BaseMatcher):
    """合成控制: 对照单元的凸组合在处理前拟合处理单元"""

    name = 'sc'
    params = (
        ('predictors', None),        # PredictorSpec, None表示只用处理前结果
        ('tolerance', IMPROVEMENT_TOLERANCE),
        ('max_iterations', MAX_ITERATIONS),
    )

    def __init__(self, **kwargs):
        super().__init__(**kwargs)
        if isinstance(self.p.predictors, dict):
            self.p.predictors = PredictorSpec.from_dict(self.p.predictors)
        if self.p.predictors is None:
            self.p.predictors = PredictorSpec()
        self.last_report: Optional[FitReport] = None

    def match(self, panel: Panel) -> ControlWeights:
        rows, row_weights = self.p.predictors.fitting_rows(panel)
        controls = panel.control_indices
        weights, report = fit_synthetic_control(
            rows[:, controls], rows[:, panel.treated_index], row_weights,
            control_indices=controls,
            tolerance=self.p.tolerance,
            max_iterations=self.p.max_iterations,
        )
        self.last_report = report
        return weights
