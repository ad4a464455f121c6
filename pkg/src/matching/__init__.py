from typing import Any, Dict, Type

from src.exceptions import ConfigError

from .base import BaseMatcher, UnmatchedMatcher
from .synthetic_control import (
    PredictorSpec,
    SyntheticControlMatcher,
    fit_synthetic_control,
    project_simplex
)
from .nearest_neighbor import (
    NearestNeighborL2Matcher,
    NearestNeighborTrendMatcher,
    nn_l2,
    nn_trend
)

MATCHERS: Dict[str, Type[BaseMatcher]] = {
    'unmatched': UnmatchedMatcher,
    'sc': SyntheticControlMatcher,
    'nn_l2': NearestNeighborL2Matcher,
    'nn_trend': NearestNeighborTrendMatcher,
}

ALIASES = {
    'uniform': 'unmatched',
    'synthetic': 'sc',
    'nn1': 'nn_l2',
    'nn2': 'nn_trend',
}


def get_matcher(method: str, options: Dict[str, Any] = None) -> BaseMatcher:
    """
    根据方法名获取匹配器实例

    参数:
        method: unmatched, sc, nn_l2, nn_trend (或别名 uniform, synthetic, nn1, nn2)
        options: 匹配器参数

    返回:
        匹配器
    """
    key = ALIASES.get(method, method)
    if key not in MATCHERS:
        raise ConfigError(f"unknown matching method '{method}'; choose from {sorted(MATCHERS)}")
    return MATCHERS[key](**(options or {}))


__all__ = [
    'BaseMatcher',
    'UnmatchedMatcher',
    'SyntheticControlMatcher',
    'NearestNeighborL2Matcher',
    'NearestNeighborTrendMatcher',
    'PredictorSpec',
    'MATCHERS',
    'ALIASES',
    'get_matcher',
    'fit_synthetic_control',
    'project_simplex',
    'nn_l2',
    'nn_trend'
]
