from abc import ABC, abstractmethod
from types import SimpleNamespace
from typing import Any, Dict, Tuple

from src.types import ControlWeights, Panel


class BaseMatcher(ABC):
    """
    对照构造方法的基类

    子类用params声明参数及默认值, 实例化时用关键字参数覆盖, 通过self.p访问。
    """

    name: str = ''
    params: Tuple[Tuple[str, Any], ...] = ()

    def __init__(self, **kwargs):
        known = dict(self.params)
        unknown = set(kwargs) - set(known)
        if unknown:
            raise TypeError(f"{type(self).__name__} got unknown parameter(s): {sorted(unknown)}")
        known.update(kwargs)
        self.p = SimpleNamespace(**known)

    @abstractmethod
    def match(self, panel: Panel) -> ControlWeights:
        """
        由处理前数据构造对照权重

        参数:
            panel: 面板, panel.treated_index为当前处理单元

        返回:
            ControlWeights, 覆盖除处理单元外的全部单元
        """
        pass

    def describe(self) -> Dict[str, Any]:
        return {'method': self.name, **vars(self.p)}


class UnmatchedMatcher(BaseMatcher):
    """不匹配: 对照组取全部对照单元的简单平均"""

    name = 'unmatched'

    def match(self, panel: Panel) -> ControlWeights:
        return ControlWeights.uniform(panel.control_indices)
