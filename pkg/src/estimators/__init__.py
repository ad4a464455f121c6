from .did import (
    adjusted_att,
    did_estimate,
    rtm_expected_outcomes,
    theta_rtm,
    weighted_control
)
from .placebo import (
    EstimatorConfig,
    placebo_estimates,
    placebo_test,
    reject_null
)
from .sensitivity import (
    SensitivityGrid,
    default_delta_grid,
    robustness_threshold,
    robustness_thresholds,
    sensitivity_sweep,
    shift_mean_model
)

__all__ = [
    'adjusted_att',
    'did_estimate',
    'rtm_expected_outcomes',
    'theta_rtm',
    'weighted_control',
    'EstimatorConfig',
    'placebo_estimates',
    'placebo_test',
    'reject_null',
    'SensitivityGrid',
    'default_delta_grid',
    'robustness_threshold',
    'robustness_thresholds',
    'sensitivity_sweep',
    'shift_mean_model'
]
