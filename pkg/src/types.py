"""
rtmdid的领域数据类型

面板、误差结构、均值模型、对照权重以及估计结果。所有类型在构造时校验自身约束,
数组字段在构造后视为只读。
"""
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, List, Optional, Sequence

import numpy as np

METHOD_TAGS = ('synthetic', 'nn_l2', 'nn_trend', 'uniform')
MEAN_MODEL_KINDS = ('constant', 'linear', 'fitted')


def _readonly(values, dtype=float) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Ar1ErrorSpec:
    """
    AR(1)误差结构: 边际方差sigma2, 一阶自相关rho

    参数:
        sigma2: 边际方差, 必须为正
        rho: 滞后1期相关系数, 取值[0, 1)
    """
    sigma2: float = 1.0
    rho: float = 0.5

    def __post_init__(self):
        if not np.isfinite(self.sigma2) or self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if not np.isfinite(self.rho) or not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")


@dataclass(frozen=True, eq=False)
class MeanModel:
    """
    每个单元在未处理状态下的期望结果 mu_ij

    kind为constant时 mu_ij = intercept_i;
    kind为linear时 mu_ij = intercept_i + slope_i * t_j;
    kind为fitted时 mu_ij = design[i, j, :] @ coefficients (回归拟合值, design保存拟合时使用的回归量)。
    offsets是敏感性分析中对单个单元施加的平移量, 对所有类型都叠加在最后。
    """
    kind: str
    times: np.ndarray
    intercepts: np.ndarray
    slopes: np.ndarray
    coefficients: Optional[np.ndarray] = None
    design: Optional[np.ndarray] = None
    term_names: Sequence[str] = ()
    offsets: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in MEAN_MODEL_KINDS:
            raise ValueError(f"unknown mean model kind '{self.kind}'")
        object.__setattr__(self, 'times', _readonly(self.times))
        object.__setattr__(self, 'intercepts', _readonly(self.intercepts))
        object.__setattr__(self, 'slopes', _readonly(self.slopes))
        n_units = self.intercepts.shape[0]
        if self.slopes.shape != (n_units,):
            raise ValueError("intercepts and slopes must have one entry per unit")
        offsets = np.zeros(n_units) if self.offsets is None else self.offsets
        object.__setattr__(self, 'offsets', _readonly(offsets))
        if self.offsets.shape != (n_units,):
            raise ValueError("offsets must have one entry per unit")
        if self.kind == 'fitted':
            if self.coefficients is None or self.design is None:
                raise ValueError("fitted mean model needs coefficients and the design it was fitted on")
            object.__setattr__(self, 'coefficients', _readonly(self.coefficients))
            object.__setattr__(self, 'design', _readonly(self.design))
            expected = (n_units, self.times.shape[0], self.coefficients.shape[0])
            if self.design.shape != expected:
                raise ValueError(f"design shape {self.design.shape} does not match {expected}")
        object.__setattr__(self, 'term_names', tuple(self.term_names))

    @classmethod
    def constant(cls, levels: Sequence[float], times: Sequence[float]) -> 'MeanModel':
        levels = np.asarray(levels, dtype=float)
        return cls(kind='constant', times=times, intercepts=levels, slopes=np.zeros_like(levels))

    @classmethod
    def linear(cls, intercepts: Sequence[float], slopes: Sequence[float], times: Sequence[float]) -> 'MeanModel':
        return cls(kind='linear', times=times, intercepts=intercepts, slopes=slopes)

    @property
    def n_units(self) -> int:
        return self.intercepts.shape[0]

    @property
    def n_times(self) -> int:
        return self.times.shape[0]

    def evaluate(self) -> np.ndarray:
        """
        计算全部单元、全部时点的均值

        返回:
            形状为 (n_units, n_times) 的均值矩阵
        """
        if self.kind == 'fitted':
            values = self.design @ self.coefficients
        elif self.kind == 'linear':
            values = self.intercepts[:, None] + self.slopes[:, None] * self.times[None, :]
        else:
            values = np.repeat(self.intercepts[:, None], self.n_times, axis=1)
        return values + self.offsets[:, None]

    def with_offset(self, unit: int, delta: float) -> 'MeanModel':
        if not 0 <= unit < self.n_units:
            raise IndexError(f"unit {unit} out of range for a mean model of {self.n_units} units")
        offsets = np.array(self.offsets, copy=True)
        offsets[unit] += delta
        return replace(self, offsets=offsets)


@dataclass(frozen=True, eq=False)
class Panel:
    """
    单元 x 时间 的矩形面板, 恰有一个处理单元

    参数:
        outcomes: (n_units, n_times) 结果矩阵, 不允许缺失
        unit_ids: 单元标签
        times: 数值型时间标签 (模拟中为1..T, 观测数据中为年份)
        treated_index: 处理单元的行下标
        tau0: 处理前时期数, 即最后一个处理前观测在时间轴上的1起始位置
        covariates: 协变量名 -> (n_units, n_times) 矩阵
    """
    outcomes: np.ndarray
    unit_ids: Sequence[str]
    times: np.ndarray
    treated_index: int
    tau0: int
    covariates: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        outcomes = _readonly(self.outcomes)
        if outcomes.ndim != 2:
            raise ValueError("outcomes must be a unit x time matrix")
        n_units, n_times = outcomes.shape
        object.__setattr__(self, 'outcomes', outcomes)
        object.__setattr__(self, 'unit_ids', tuple(str(u) for u in self.unit_ids))
        object.__setattr__(self, 'times', _readonly(self.times))
        if len(self.unit_ids) != n_units:
            raise ValueError(f"{len(self.unit_ids)} unit ids for {n_units} outcome rows")
        if len(set(self.unit_ids)) != n_units:
            raise ValueError("unit ids must be unique")
        if self.times.shape != (n_times,):
            raise ValueError(f"{self.times.shape[0]} time labels for {n_times} outcome columns")
        if not np.all(np.isfinite(outcomes)):
            raise ValueError("outcomes must be finite (no missing values)")
        if not 0 <= self.treated_index < n_units:
            raise ValueError(f"treated index {self.treated_index} out of range")
        if not 1 <= self.tau0 < n_times:
            raise ValueError(f"tau0 must satisfy 1 <= tau0 < n_times, got {self.tau0} with {n_times} times")
        covariates = {}
        for name, values in self.covariates.items():
            matrix = _readonly(values)
            if matrix.shape != outcomes.shape:
                raise ValueError(f"covariate '{name}' has shape {matrix.shape}, expected {outcomes.shape}")
            covariates[name] = matrix
        object.__setattr__(self, 'covariates', covariates)

    @property
    def n_units(self) -> int:
        return self.outcomes.shape[0]

    @property
    def n_times(self) -> int:
        return self.outcomes.shape[1]

    @property
    def n_post(self) -> int:
        return self.n_times - self.tau0

    @property
    def control_indices(self) -> np.ndarray:
        return np.array([i for i in range(self.n_units) if i != self.treated_index], dtype=int)

    @property
    def treated_id(self) -> str:
        return self.unit_ids[self.treated_index]

    @property
    def treated_series(self) -> np.ndarray:
        return self.outcomes[self.treated_index]

    @property
    def pre_outcomes(self) -> np.ndarray:
        return self.outcomes[:, :self.tau0]

    @property
    def pre_times(self) -> np.ndarray:
        return self.times[:self.tau0]

    def control_pre_matrix(self) -> np.ndarray:
        """处理前对照结果, 形状 (tau0, n_controls), 列顺序与control_indices一致"""
        return self.pre_outcomes[self.control_indices].T

    def with_treated(self, unit: int) -> 'Panel':
        """将第unit个单元重标记为处理单元, 其余单元全部作为对照"""
        return replace(self, treated_index=int(unit))

    def with_outcomes(self, outcomes: np.ndarray) -> 'Panel':
        return replace(self, outcomes=outcomes)

    def unit_index(self, unit_id: str) -> int:
        try:
            return self.unit_ids.index(str(unit_id))
        except ValueError:
            raise KeyError(f"unit '{unit_id}' not in panel") from None


@dataclass(frozen=True, eq=False)
class ControlWeights:
    """
    对照单元上的非负权重, 和为1

    参数:
        weights: 与control_indices一一对应的权重
        control_indices: 对照单元在面板中的行下标
        method_tag: synthetic, nn_l2, nn_trend 或 uniform
    """
    weights: np.ndarray
    control_indices: np.ndarray
    method_tag: str

    SUM_TOLERANCE = 1e-8

    def __post_init__(self):
        weights = _readonly(self.weights)
        indices = _readonly(self.control_indices, dtype=int)
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'control_indices', indices)
        if self.method_tag not in METHOD_TAGS:
            raise ValueError(f"unknown method tag '{self.method_tag}'")
        if weights.ndim != 1 or weights.shape != indices.shape or weights.size == 0:
            raise ValueError("weights and control indices must be non-empty vectors of equal length")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValueError("weights must be finite and nonnegative")
        if abs(weights.sum() - 1.0) > self.SUM_TOLERANCE:
            raise ValueError(f"weights must sum to 1, got {weights.sum():.12g}")
        if self.method_tag.startswith('nn_') and np.count_nonzero(weights == 1.0) != 1:
            raise ValueError("nearest-neighbour weights must be one-hot")
        if self.method_tag == 'uniform' and not np.allclose(weights, 1.0 / weights.size, rtol=0, atol=1e-15):
            raise ValueError("uniform weights must all equal 1/n0")

    @classmethod
    def one_hot(cls, control_indices: Sequence[int], position: int, method_tag: str) -> 'ControlWeights':
        weights = np.zeros(len(control_indices))
        weights[position] = 1.0
        return cls(weights=weights, control_indices=control_indices, method_tag=method_tag)

    @classmethod
    def uniform(cls, control_indices: Sequence[int]) -> 'ControlWeights':
        n = len(control_indices)
        return cls(weights=np.full(n, 1.0 / n), control_indices=control_indices, method_tag='uniform')

    @property
    def selected(self) -> np.ndarray:
        """权重为正的对照单元行下标"""
        return self.control_indices[self.weights > 0]

    def as_unit_vector(self, n_units: int) -> np.ndarray:
        """展开为长度n_units的权重向量 (处理单元位置为0)"""
        full = np.zeros(n_units)
        full[self.control_indices] = self.weights
        return full


@dataclass(frozen=True)
class FitReport:
    """合成控制求解器诊断信息"""
    objective: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class AttResult:
    """观测DID、RTM期望DID与校正后的ATT, theta_adj = theta_obs - theta_rtm"""
    theta_obs: float
    theta_rtm: float
    theta_adj: float
    weights: ControlWeights

    def __post_init__(self):
        if self.theta_adj != self.theta_obs - self.theta_rtm:
            raise ValueError("theta_adj must equal theta_obs - theta_rtm")

    @classmethod
    def build(cls, theta_obs: float, theta_rtm: float, weights: ControlWeights) -> 'AttResult':
        theta_obs = float(theta_obs)
        theta_rtm = float(theta_rtm)
        return cls(theta_obs=theta_obs, theta_rtm=theta_rtm, theta_adj=theta_obs - theta_rtm, weights=weights)


@dataclass(frozen=True, eq=False)
class PlaceboDistribution:
    """
    置换检验的安慰剂分布

    estimates[i] 为第i个单元被重标记为处理单元时的估计值;
    p值 = #{i : |theta_i| >= |theta_treated|} / n, 计数包含处理单元本身。
    """
    estimates: np.ndarray
    unit_ids: Sequence[str]
    treated_index: int
    n_extreme: int

    def __post_init__(self):
        object.__setattr__(self, 'estimates', _readonly(self.estimates))
        object.__setattr__(self, 'unit_ids', tuple(self.unit_ids))
        n = self.estimates.shape[0]
        if n < 2 or len(self.unit_ids) != n:
            raise ValueError("placebo distribution needs one estimate per unit and at least two units")
        if not 1 <= self.n_extreme <= n:
            raise ValueError(f"extreme count {self.n_extreme} outside [1, {n}]")

    @property
    def n_units(self) -> int:
        return self.estimates.shape[0]

    @property
    def p_fraction(self) -> Fraction:
        return Fraction(self.n_extreme, self.n_units)

    @property
    def p_value(self) -> float:
        return self.n_extreme / self.n_units

    @property
    def treated_estimate(self) -> float:
        return float(self.estimates[self.treated_index])


@dataclass(frozen=True)
class SensitivityRow:
    """敏感性分析网格上的一个点"""
    delta: float
    rho: float
    s2: float
    theta_adj: float
    p_value: float
    n_extreme: int
    n_units: int

    def rejects(self, alpha: float) -> bool:
        return self.p_value < alpha


def unit_labels(prefix: str, count: int) -> List[str]:
    width = max(2, len(str(count)))
    return [f"{prefix}_{i:0{width}d}" for i in range(1, count + 1)]
