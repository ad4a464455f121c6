import numpy as np
from typing import Any, Dict, Sequence


def rejection_rate(rejections: Sequence[bool]) -> float:
    """
    计算拒绝率

    参数:
        rejections: 每次重复是否拒绝原假设

    返回:
        拒绝次数 / 重复次数
    """
    rejections = np.asarray(rejections, dtype=bool)
    if rejections.size == 0:
        raise ValueError("no replications to summarise")
    return float(np.count_nonzero(rejections)) / rejections.size


def mc_standard_error(rate: float, n_reps: int) -> float:
    """
    拒绝率的蒙特卡洛标准误 sqrt(r(1-r)/n)

    参数:
        rate: 拒绝率
        n_reps: 重复次数

    返回:
        标准误
    """
    if n_reps < 1:
        raise ValueError(f"n_reps must be at least 1, got {n_reps}")
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate must lie in [0, 1], got {rate}")
    return float(np.sqrt(rate * (1.0 - rate) / n_reps))


def summarize_estimates(estimates: Sequence[float]) -> Dict[str, float]:
    """
    估计值的蒙特卡洛均值、标准差与均值的标准误

    参数:
        estimates: 每次重复的估计值

    返回:
        包含 mean, sd, mean_se 的字典; 只有一次重复时sd记为nan
    """
    estimates = np.asarray(estimates, dtype=float)
    if estimates.size == 0:
        raise ValueError("no estimates to summarise")
    mean = float(np.mean(estimates))
    if estimates.size < 2:
        return {'mean': mean, 'sd': float('nan'), 'mean_se': float('nan')}
    sd = float(np.std(estimates, ddof=1))
    return {'mean': mean, 'sd': sd, 'mean_se': sd / np.sqrt(estimates.size)}


def calculate_metrics(estimates: Sequence[float], rejections: Sequence[bool]) -> Dict[str, Any]:
    """
    一个方法在一个情景下的全部蒙特卡洛指标

    参数:
        estimates: 每次重复的估计值
        rejections: 每次重复是否拒绝原假设

    返回:
        包含 rejection_rate, mc_se, mean_theta, sd_theta, mean_theta_se, n_reps 的字典
    """
    if len(estimates) != len(rejections):
        raise ValueError("estimates and rejections must have one entry per replication")
    rate = rejection_rate(rejections)
    summary = summarize_estimates(estimates)
    return {
        'rejection_rate': rate,
        'mc_se': mc_standard_error(rate, len(rejections)),
        'mean_theta': summary['mean'],
        'sd_theta': summary['sd'],
        'mean_theta_se': summary['mean_se'],
        'n_reps': len(rejections),
    }
