"""
可复现的随机数流与多元正态 / 多元t抽样

每个蒙特卡洛重复使用独立的RngStream。流由(seed, stream_id)派生出计数器型
Philox生成器, 因此同一个(seed, stream_id)在任意平台、任意并行度下都产生相同序列,
与其他流的调度顺序无关。
"""
import math
from dataclasses import dataclass, field

import numpy as np

SEED_MASK = (1 << 64) - 1


@dataclass
class RngStream:
    """
    (seed, stream_id) 确定的随机数流

    参数:
        seed: 64位整数种子
        stream_id: 流编号, 每个蒙特卡洛重复一个
    """
    seed: int
    stream_id: int = 0
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.stream_id < 0:
            raise ValueError(f"stream_id must be nonnegative, got {self.stream_id}")
        sequence = np.random.SeedSequence(entropy=int(self.seed) & SEED_MASK, spawn_key=(int(self.stream_id),))
        self.generator = np.random.Generator(np.random.Philox(sequence))

    def standard_normal(self, size) -> np.ndarray:
        return self.generator.standard_normal(size)

    def chisquare(self, df: float) -> float:
        return float(self.generator.chisquare(df))


def _check_dimensions(mean: np.ndarray, factor: np.ndarray) -> None:
    if factor.ndim != 2 or factor.shape[0] != factor.shape[1]:
        raise ValueError(f"factor must be square, got shape {factor.shape}")
    if mean.shape != (factor.shape[0],):
        raise ValueError(f"mean of length {mean.shape} does not match factor dimension {factor.shape[0]}")


def sample_mvn(mean, factor, rng: RngStream) -> np.ndarray:
    """
    多元正态抽样 mean + L @ z

    参数:
        mean: 均值向量
        factor: 下三角因子L (通常来自cholesky)
        rng: 随机数流

    返回:
        一次抽样
    """
    mean = np.asarray(mean, dtype=float)
    factor = np.asarray(factor, dtype=float)
    _check_dimensions(mean, factor)
    z = rng.standard_normal(mean.shape[0])
    return mean + factor @ z


def sample_mvt(mean, factor, df: float, rng: RngStream, rescale: bool = False) -> np.ndarray:
    """
    多元t抽样 mean + (L @ z) / sqrt(w / df), w ~ chi2(df)

    Sigma作为尺度矩阵, 边际方差为 sigma2 * df / (df - 2)。
    df为math.inf时退化为sample_mvn, 与同一流上的正态抽样逐次相同。

    参数:
        mean: 均值向量
        factor: 下三角因子L
        df: 自由度, 必须为正
        rng: 随机数流
        rescale: 为True时乘以sqrt((df - 2) / df), 使边际方差等于sigma2 (要求df > 2)

    返回:
        一次抽样
    """
    if not df > 0:
        raise ValueError(f"degrees of freedom must be positive, got {df}")
    mean = np.asarray(mean, dtype=float)
    factor = np.asarray(factor, dtype=float)
    _check_dimensions(mean, factor)
    z = rng.standard_normal(mean.shape[0])
    if math.isinf(df):
        return mean + factor @ z
    w = rng.chisquare(df)
    scale = 1.0 / math.sqrt(w / df)
    if rescale:
        if df <= 2:
            raise ValueError(f"rescaling to unit marginal variance needs df > 2, got {df}")
        scale *= math.sqrt((df - 2.0) / df)
    return mean + (factor @ z) * scale
