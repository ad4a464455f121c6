import logging

import numpy as np
from scipy.linalg import lapack, solve_triangular

from src.exceptions import NotPositiveDefiniteError, RankDeficientError
from src.types import Ar1ErrorSpec

logger = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-12
RANK_TOLERANCE = 1e-10


def build_ar1_cov(n_times: int, spec: Ar1ErrorSpec) -> np.ndarray:
    """
    构建AR(1)协方差矩阵

    参数:
        n_times: 时点数
        spec: 误差结构, 元素(i, j) = sigma2 * rho^|i-j|

    返回:
        (n_times, n_times) 对称正定矩阵
    """
    if n_times < 1:
        raise ValueError(f"n_times must be at least 1, got {n_times}")
    # Ar1ErrorSpec已在构造时校验sigma2与rho
    lags = np.abs(np.subtract.outer(np.arange(n_times), np.arange(n_times)))
    return spec.sigma2 * np.power(spec.rho, lags)


def cholesky(cov: np.ndarray) -> np.ndarray:
    """
    下三角Cholesky分解, L @ L.T = cov

    参数:
        cov: 对称正定矩阵

    返回:
        下三角因子L
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError(f"covariance must be square, got shape {cov.shape}")
    scale = max(1.0, float(np.max(np.abs(cov)))) if cov.size else 1.0
    if np.max(np.abs(cov - cov.T), initial=0.0) > SYMMETRY_TOLERANCE * scale:
        raise ValueError("covariance matrix is not symmetric")
    # dpotrf的info给出第一个失败主元(1起始)
    factor, info = lapack.dpotrf(cov, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefiniteError(pivot=info - 1)
    if info < 0:
        raise ValueError(f"invalid argument {-info} passed to dpotrf")
    return factor


def ols_fit(design: np.ndarray, response: np.ndarray) -> np.ndarray:
    """
    普通最小二乘

    参数:
        design: (n, p) 设计矩阵, 需列满秩
        response: 长度n的响应向量, 或 (n, m) 矩阵 (每列单独回归)

    返回:
        长度p的系数向量, 或 (p, m) 系数矩阵
    """
    design = np.asarray(design, dtype=float)
    response = np.asarray(response, dtype=float)
    if design.ndim == 1:
        design = design[:, None]
    n, p = design.shape
    if response.ndim not in (1, 2) or response.shape[0] != n:
        raise ValueError(f"design has {n} rows but response has shape {response.shape}")
    if n < p:
        raise RankDeficientError(column=n)
    q, r = np.linalg.qr(design, mode='reduced')
    diagonal = np.abs(np.diag(r))
    column_scale = np.linalg.norm(design, axis=0)
    for column in range(p):
        if diagonal[column] <= RANK_TOLERANCE * max(column_scale[column], 1.0):
            raise RankDeficientError(column=column)
    return solve_triangular(r, q.T @ response, lower=False)
