"""
高斯恒等连接、AR(1)工作相关矩阵的GEE均值模型拟合, 以及残差AR(1)参数估计
"""
import logging
import warnings
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from statsmodels.genmod import families
from statsmodels.genmod.cov_struct import CovStruct
from statsmodels.genmod.generalized_estimating_equations import GEE
from statsmodels.tools.sm_exceptions import ConvergenceWarning, IterationLimitWarning

from src.types import MeanModel, Panel
from src.utils.linalg import ols_fit

logger = logging.getLogger(__name__)

RHO_CEILING = 0.99
COEFFICIENT_TOLERANCE = 1e-8
MAX_ITERATIONS = 100


@dataclass(frozen=True, eq=False)
class GeeFit:
    """
    GEE拟合结果

    可按 (model, rho_hat, s2_hat) 解包。
    """
    model: MeanModel
    rho_hat: float
    s2_hat: float
    converged: bool
    iterations: int
    rho_clamped: bool
    std_errors: np.ndarray
    term_names: Tuple[str, ...]

    def __iter__(self) -> Iterator:
        return iter((self.model, self.rho_hat, self.s2_hat))

    @property
    def coefficients(self) -> np.ndarray:
        return self.model.coefficients

    def summary_rows(self) -> List[dict]:
        rows = [
            {'term': name, 'estimate': float(coef), 'std_error': float(se)}
            for name, coef, se in zip(self.term_names, self.coefficients, self.std_errors)
        ]
        rows.append({'term': 'rho_hat', 'estimate': self.rho_hat, 'std_error': float('nan')})
        rows.append({'term': 's2_hat', 'estimate': self.s2_hat, 'std_error': float('nan')})
        return rows


def untreated_mask(panel: Panel) -> np.ndarray:
    """全部单元的处理前观测 + 对照单元的处理后观测 (排除处理单元处理后的观测)"""
    mask = np.ones(panel.outcomes.shape, dtype=bool)
    mask[panel.treated_index, panel.tau0:] = False
    return mask


def build_design(panel: Panel, covariate_columns: Sequence[str]) -> Tuple[np.ndarray, Tuple[str, ...]]:
    """
    构建 (n_units, n_times, p) 设计张量: 截距, 时间, 协变量

    参数:
        panel: 面板
        covariate_columns: 协变量名

    返回:
        (设计张量, 回归项名称)
    """
    n_units, n_times = panel.outcomes.shape
    layers = [np.ones((n_units, n_times)), np.broadcast_to(panel.times, (n_units, n_times))]
    names = ['intercept', 'time']
    for name in covariate_columns:
        if name not in panel.covariates:
            raise KeyError(f"covariate '{name}' not present in panel")
        values = panel.covariates[name]
        if not np.all(np.isfinite(values)):
            raise ValueError(f"covariate '{name}' has missing values; GEE needs every unit-time covered")
        layers.append(values)
        names.append(name)
    return np.stack(layers, axis=-1), tuple(names)


def _adjacent_pairs(mask: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """单元内相邻且都被选中的(t, t+1)观测对"""
    both = mask[:, :-1] & mask[:, 1:]
    units, columns = np.nonzero(both)
    return units, columns


class Ar1MomentCovariance(CovStruct):
    """
    AR(1)工作相关: R[s, t] = rho^|s - t|

    update() 用单元内相邻残差乘积的均值除以残差平方均值估计rho, 并截断到 [0, RHO_CEILING]。
    时间取整数列下标, 只有相差1的观测对计入。
    """

    def __init__(self, rho: float = 0.0):
        super().__init__()
        self.dep_params = float(rho)
        self.clamped = False

    def moment_estimate(self, params: np.ndarray) -> Optional[float]:
        lag_sum = 0.0
        n_pairs = 0
        square_sum = 0.0
        n_obs = 0
        scale = 0.0
        for endog, exog, time in zip(self.model.endog_li, self.model.exog_li, self.model.time_li):
            residuals = endog - exog @ params
            adjacent = np.diff(np.ravel(time)) == 1
            lag_sum += float(np.sum(residuals[:-1][adjacent] * residuals[1:][adjacent]))
            n_pairs += int(adjacent.sum())
            square_sum += float(np.sum(residuals ** 2))
            n_obs += residuals.size
            scale += float(np.sum(np.abs(residuals)))
        if n_pairs == 0 or n_obs == 0:
            return None
        variance = square_sum / n_obs
        if variance <= 1e-20 * (1.0 + scale / n_obs):
            return None
        return (lag_sum / n_pairs) / variance

    def update(self, params):
        estimate = self.moment_estimate(np.asarray(params, dtype=np.float64))
        if estimate is None:
            return
        self.clamped = not 0.0 <= estimate <= RHO_CEILING
        self.dep_params = float(np.clip(estimate, 0.0, RHO_CEILING))

    def covariance_matrix(self, endog_expval, index):
        time = np.ravel(self.model.time_li[index])
        lags = np.abs(np.subtract.outer(time, time))
        return np.power(self.dep_params, lags), True

    def summary(self):
        return f"AR(1) working correlation, lag-1 moment estimate rho = {self.dep_params:.4f}"


def _long_format(design: np.ndarray, outcomes: np.ndarray,
                 mask: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """按 (单元, 时间) 顺序展开为长表: endog, exog, groups, time"""
    units, columns = np.nonzero(mask)
    return outcomes[mask], design[mask], units, columns.astype(np.float64)


def gee_ar1_fit(panel: Panel, covariate_columns: Sequence[str] = (),
                fixed_rho: Optional[float] = None,
                tolerance: float = COEFFICIENT_TOLERANCE,
                max_iterations: int = MAX_ITERATIONS) -> GeeFit:
    """
    AR(1)工作相关的GEE拟合, 得到未处理状态下的均值模型

    拟合使用全部单元的处理前观测和对照单元的处理后观测。交替进行
    (a) 给定R(rho)的GEE系数更新 (statsmodels), (b) 由单元内相邻残差乘积矩估计rho,
    直到系数最大绝对变化小于tolerance或达到max_iterations。标准误为稳健(三明治)估计。

    参数:
        panel: 面板, 每个单元至少2个时点
        covariate_columns: 作为回归量的协变量名 (截距和时间总是包含)
        fixed_rho: 给定时固定工作相关, 不再估计 (0时等价于混合OLS)
        tolerance: 系数收敛阈值
        max_iterations: 最大迭代次数

    返回:
        GeeFit, 可解包为 (MeanModel, rho_hat, s2_hat)
    """
    if panel.n_times < 2:
        raise ValueError("GEE needs at least two time points per unit")
    if fixed_rho is not None and not 0.0 <= fixed_rho < 1.0:
        raise ValueError(f"fixed_rho must lie in [0, 1), got {fixed_rho}")
    design, names = build_design(panel, covariate_columns)
    mask = untreated_mask(panel)
    n_obs = int(mask.sum())
    n_terms = design.shape[-1]
    if n_obs <= n_terms:
        raise ValueError(f"{n_obs} observations cannot identify {n_terms} coefficients")

    endog, exog, groups, time = _long_format(design, panel.outcomes, mask)
    # 独立工作相关下的初值就是混合OLS, 同时检查设计矩阵秩
    beta = ols_fit(exog, endog)
    cov_struct = Ar1MomentCovariance(0.0 if fixed_rho is None else fixed_rho)
    gee = GEE(endog, exog, groups=groups, time=time, family=families.Gaussian(),
              cov_struct=cov_struct, update_dep=False)

    converged = False
    iteration = 0
    result = None
    for iteration in range(1, max_iterations + 1):
        if fixed_rho is None:
            cov_struct.update(beta)
        with warnings.catch_warnings():
            # 高斯恒等连接下一步更新即为给定R(rho)的精确解
            warnings.simplefilter('ignore', IterationLimitWarning)
            warnings.simplefilter('ignore', ConvergenceWarning)
            result = gee.fit(maxiter=1, start_params=beta)
        beta_new = np.asarray(result.params, dtype=np.float64)
        change = np.max(np.abs(beta_new - beta))
        beta = beta_new
        logger.debug("GEE iteration %d: rho=%.6f max coefficient change=%.3e",
                     iteration, cov_struct.dep_params, change)
        if change < tolerance:
            converged = True
            break

    if not converged:
        logger.warning("GEE did not converge after %d iterations; returning last iterate", max_iterations)
    if cov_struct.clamped:
        logger.warning("GEE working correlation estimate clamped into [0, %.2f]", RHO_CEILING)

    s2_hat = float(np.sum((endog - exog @ beta) ** 2) / (n_obs - n_terms))
    std_errors = np.sqrt(np.clip(np.diag(np.asarray(result.cov_robust)), 0.0, None))
    model = MeanModel(
        kind='fitted',
        times=panel.times,
        intercepts=np.full(panel.n_units, beta[0]),
        slopes=np.full(panel.n_units, beta[1]),
        coefficients=beta,
        design=design,
        term_names=names,
    )
    return GeeFit(model=model, rho_hat=float(cov_struct.dep_params), s2_hat=s2_hat, converged=converged,
                  iterations=iteration, rho_clamped=cov_struct.clamped, std_errors=std_errors, term_names=names)


def residual_ar1_estimates(panel: Panel, model: MeanModel,
                           mask: Optional[np.ndarray] = None) -> Tuple[float, float]:
    """
    残差方差与单元内相邻残差相关

    参数:
        panel: 面板
        model: 均值模型, 需覆盖面板全部单元与时点
        mask: 参与计算的单元-时点, 默认与GEE拟合相同 (排除处理单元的处理后观测)

    返回:
        (s2_hat, rho_hat): 合并残差的样本方差; 单元内 (e_t, e_t+1) 对合并后的样本相关
    """
    means = model.evaluate()
    if means.shape != panel.outcomes.shape:
        raise ValueError(f"mean model covers {means.shape}, panel is {panel.outcomes.shape}")
    mask = untreated_mask(panel) if mask is None else np.asarray(mask, dtype=bool)
    residuals = panel.outcomes - means
    units, columns = _adjacent_pairs(mask)
    if units.size < 2:
        raise ValueError(f"need at least 2 adjacent residual pairs, found {units.size}")
    s2_hat = float(np.var(residuals[mask], ddof=1))
    leading = residuals[units, columns]
    trailing = residuals[units, columns + 1]
    if np.ptp(leading) == 0 or np.ptp(trailing) == 0:
        raise ValueError("residual correlation is undefined (constant residuals)")
    rho_hat = float(np.corrcoef(leading, trailing)[0, 1])
    return s2_hat, rho_hat
