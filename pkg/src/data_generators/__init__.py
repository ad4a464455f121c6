from .base import BasePanelGenerator
from .scenario import ScenarioConfig
from .ar1 import Ar1PanelGenerator, simulate_panel

__all__ = [
    'BasePanelGenerator',
    'ScenarioConfig',
    'Ar1PanelGenerator',
    'simulate_panel'
]
