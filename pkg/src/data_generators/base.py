import pandas as pd
from abc import ABC, abstractmethod
from typing import Any, Dict

from src.data_generators.scenario import ScenarioConfig
from src.types import Panel
from src.utils.panel_io import panel_to_frame, save_panel


class BasePanelGenerator(ABC):
    """模拟面板生成器的基类"""

    def __init__(self, config: ScenarioConfig):
        """
        初始化面板生成器

        参数:
            config: 模拟情景, 包含均值、误差结构、处理效应和种子
        """
        self.config = config
        self.seed = config.seed

    @classmethod
    def from_dict(cls, config: Dict[str, Any]) -> 'BasePanelGenerator':
        return cls(ScenarioConfig.from_dict(config))

    @abstractmethod
    def generate(self, rep: int) -> Panel:
        """
        生成第rep次蒙特卡洛重复的面板

        参数:
            rep: 重复编号, 同时作为随机数流编号

        返回:
            Panel, 处理单元位于第0行
        """
        pass

    @staticmethod
    def to_frame(panel: Panel) -> pd.DataFrame:
        """
        将面板转换为长表 (unit_id, time, outcome)

        参数:
            panel: 生成的面板

        返回:
            pandas DataFrame
        """
        return panel_to_frame(panel)

    def save_to_csv(self, panel: Panel, filename: str) -> None:
        """
        将生成的面板保存为长表CSV文件

        参数:
            panel: 生成的面板
            filename: 保存的文件名
        """
        save_panel(panel, filename)
