from .monte_carlo import (
    DEFAULT_METHODS,
    EXPERIMENTS,
    ExperimentReport,
    MethodSummary,
    MonteCarloExperiment,
    parse_method_label,
    run_power_experiment,
    run_replication,
    run_robustness_experiment,
    run_scenarios,
    run_type1_experiment
)

__all__ = [
    'DEFAULT_METHODS',
    'EXPERIMENTS',
    'ExperimentReport',
    'MethodSummary',
    'MonteCarloExperiment',
    'parse_method_label',
    'run_power_experiment',
    'run_replication',
    'run_robustness_experiment',
    'run_scenarios',
    'run_type1_experiment'
]
