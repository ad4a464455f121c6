from .linalg import (
    build_ar1_cov,
    cholesky,
    ols_fit
)
from .random import (
    RngStream,
    sample_mvn,
    sample_mvt
)
from .gee import (
    GeeFit,
    gee_ar1_fit,
    residual_ar1_estimates
)
from .metrics import (
    calculate_metrics,
    mc_standard_error,
    rejection_rate,
    summarize_estimates
)
from .panel_io import (
    AnalysisConfig,
    PanelTable,
    load_panel,
    save_panel,
    validate_csv,
    wide_to_long
)

__all__ = [
    'build_ar1_cov',
    'cholesky',
    'ols_fit',
    'RngStream',
    'sample_mvn',
    'sample_mvt',
    'GeeFit',
    'gee_ar1_fit',
    'residual_ar1_estimates',
    'calculate_metrics',
    'mc_standard_error',
    'rejection_rate',
    'summarize_estimates',
    'AnalysisConfig',
    'PanelTable',
    'load_panel',
    'save_panel',
    'validate_csv',
    'wide_to_long'
]
