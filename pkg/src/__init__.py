from . import data_generators
from . import matching
from . import estimators
from . import experiments
from . import utils

__all__ = [
    'data_generators',
    'matching',
    'estimators',
    'experiments',
    'utils'
]
