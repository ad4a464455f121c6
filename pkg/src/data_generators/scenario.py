import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict

from src.exceptions import ConfigError
from src.types import Ar1ErrorSpec

ERROR_FAMILIES = ('normal', 't')
EFFECT_SHAPES = ('cumulative', 'constant')


@dataclass(frozen=True)
class ScenarioConfig:
    """
    一个模拟情景的全部参数

    参数:
        n_controls: 对照单元数
        n_times: 每个单元的观测时点数
        tau0: 处理前时期数
        mu0: 对照单元均值
        mu1: 处理单元均值
        spec: AR(1)误差结构
        theta: 处理期每多一个时点, 处理单元期望结果增加theta
        error_family: normal 或 t
        df: t分布自由度 (error_family为t时使用, math.inf等价于正态)
        rescale_t: t误差是否缩放到边际方差sigma2
        effect_shape: cumulative (第m个处理后时点平移m*theta) 或 constant (平移theta)
        n_reps: 蒙特卡洛重复次数
        alpha: 显著性水平
        seed: 随机种子
    """
    n_controls: int = 40
    n_times: int = 8
    tau0: int = 4
    mu0: float = 0.0
    mu1: float = 5.0
    spec: Ar1ErrorSpec = field(default_factory=Ar1ErrorSpec)
    theta: float = 0.0
    error_family: str = 'normal'
    df: float = math.inf
    rescale_t: bool = False
    effect_shape: str = 'cumulative'
    n_reps: int = 2000
    alpha: float = 0.05
    seed: int = 42

    def __post_init__(self):
        if self.n_reps < 1:
            raise ConfigError(f"n_reps must be at least 1, got {self.n_reps}")
        if self.n_controls < 1:
            raise ConfigError(f"n_controls must be at least 1, got {self.n_controls}")
        if not 1 <= self.tau0 < self.n_times:
            raise ConfigError(f"tau0 must satisfy 1 <= tau0 < n_times, got tau0={self.tau0}, n_times={self.n_times}")
        if self.error_family not in ERROR_FAMILIES:
            raise ConfigError(f"unknown error family '{self.error_family}'")
        if self.effect_shape not in EFFECT_SHAPES:
            raise ConfigError(f"unknown effect shape '{self.effect_shape}'")
        if not self.df > 0:
            raise ConfigError(f"df must be positive, got {self.df}")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")

    @classmethod
    def from_dict(cls, config: Dict[str, Any]) -> 'ScenarioConfig':
        """
        从配置字典构建情景 (config.yaml中的simulation段)

        参数:
            config: 配置字典, 缺失的键使用默认值

        返回:
            ScenarioConfig
        """
        try:
            spec = Ar1ErrorSpec(sigma2=float(config.get('sigma2', 1.0)), rho=float(config.get('rho', 0.5)))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        df = config.get('df', math.inf)
        return cls(
            n_controls=int(config.get('n_controls', 40)),
            n_times=int(config.get('n_times', 8)),
            tau0=int(config.get('tau0', 4)),
            mu0=float(config.get('mu0', 0.0)),
            mu1=float(config.get('mu1', 5.0)),
            spec=spec,
            theta=float(config.get('theta', 0.0)),
            error_family=str(config.get('error_family', 'normal')),
            df=math.inf if df in (None, 'inf', 'infinity') else float(df),
            rescale_t=bool(config.get('rescale_t', False)),
            effect_shape=str(config.get('effect_shape', 'cumulative')),
            n_reps=int(config.get('n_reps', 2000)),
            alpha=float(config.get('alpha', 0.05)),
            seed=int(config.get('seed', 42)),
        )

    def with_updates(self, **changes) -> 'ScenarioConfig':
        """返回修改了部分参数的新情景, sigma2/rho会写入spec"""
        sigma2 = changes.pop('sigma2', self.spec.sigma2)
        rho = changes.pop('rho', self.spec.rho)
        if 'spec' not in changes:
            changes['spec'] = Ar1ErrorSpec(sigma2=float(sigma2), rho=float(rho))
        return replace(self, **changes)

    def describe(self) -> Dict[str, Any]:
        """报告CSV中记录的情景参数列"""
        return {
            'n_controls': self.n_controls,
            'n_times': self.n_times,
            'tau0': self.tau0,
            'mu0': self.mu0,
            'mu1': self.mu1,
            'sigma2': self.spec.sigma2,
            'rho': self.spec.rho,
            'theta': self.theta,
            'error_family': self.error_family,
            'df': self.df,
            'rescale_t': self.rescale_t,
            'effect_shape': self.effect_shape,
            'n_reps': self.n_reps,
            'alpha': self.alpha,
            'seed': self.seed,
        }

    @property
    def is_null(self) -> bool:
        return self.theta == 0.0
