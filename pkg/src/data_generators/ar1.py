import numpy as np

from src.data_generators.base import BasePanelGenerator
from src.data_generators.scenario import ScenarioConfig
from src.types import MeanModel, Panel, unit_labels
from src.utils.linalg import build_ar1_cov, cholesky
from src.utils.random import RngStream, sample_mvn, sample_mvt


class Ar1PanelGenerator(BasePanelGenerator):
    """
    AR(1)误差面板生成器

    对照单元均值恒为mu0, 处理单元均值为mu1, 处理期叠加处理效应。
    误差来自多元正态或多元t分布, 协方差 (尺度矩阵) 为 sigma2 * rho^|i-j|。
    """

    def __init__(self, config: ScenarioConfig):
        """
        初始化AR(1)面板生成器

        参数:
            config: 模拟情景
        """
        super().__init__(config)
        self.times = np.arange(1, config.n_times + 1, dtype=float)
        self.factor = cholesky(build_ar1_cov(config.n_times, config.spec))
        self.unit_ids = ['treated'] + unit_labels('control', config.n_controls)

    def treated_mean(self) -> np.ndarray:
        """处理单元的期望结果向量, 第m个处理后时点为 mu1 + m*theta (constant形状为 mu1 + theta)"""
        config = self.config
        mean = np.full(config.n_times, config.mu1)
        steps = np.arange(1, config.n_times - config.tau0 + 1, dtype=float)
        if config.effect_shape == 'constant':
            steps = np.ones_like(steps)
        mean[config.tau0:] += steps * config.theta
        return mean

    def control_mean(self) -> np.ndarray:
        return np.full(self.config.n_times, self.config.mu0)

    def true_mean_model(self) -> MeanModel:
        """未处理状态下的真实均值模型 (处理单元mu1, 对照mu0)"""
        levels = np.full(self.config.n_controls + 1, self.config.mu0)
        levels[0] = self.config.mu1
        return MeanModel.constant(levels, self.times)

    def _draw(self, mean: np.ndarray, rng: RngStream) -> np.ndarray:
        config = self.config
        if config.error_family == 't':
            return sample_mvt(mean, self.factor, config.df, rng, rescale=config.rescale_t)
        return sample_mvn(mean, self.factor, rng)

    def generate(self, rep: int) -> Panel:
        """
        生成第rep次重复的面板, 同一(seed, rep)总是得到相同面板

        参数:
            rep: 重复编号

        返回:
            Panel
        """
        rng = RngStream(self.seed, rep)
        rows = [self._draw(self.treated_mean(), rng)]
        control_mean = self.control_mean()
        for _ in range(self.config.n_controls):
            rows.append(self._draw(control_mean, rng))
        return Panel(
            outcomes=np.vstack(rows),
            unit_ids=self.unit_ids,
            times=self.times,
            treated_index=0,
            tau0=self.config.tau0,
        )


def simulate_panel(config: ScenarioConfig, rep: int) -> Panel:
    """
    按情景生成一次重复的面板

    参数:
        config: 模拟情景
        rep: 重复编号 (随机数流编号)

    返回:
        Panel, 处理单元位于第0行
    """
    return Ar1PanelGenerator(config).generate(rep)
