"""Shared panel builders and tolerances for the test suite."""
import math
from typing import Optional

import numpy as np

from src.types import Ar1ErrorSpec, Panel, unit_labels
from src.utils.linalg import build_ar1_cov, cholesky
from src.utils.random import RngStream, sample_mvn


def mc_margin(rate: float, n_reps: int, k: float = 3.0) -> float:
    """k Monte Carlo standard errors of a rejection rate"""
    return k * math.sqrt(rate * (1.0 - rate) / n_reps)


def random_panel(rng: np.random.Generator, n_units: int = 6, n_times: int = 8, tau0: int = 4,
                 treated_index: int = 0, scale: float = 1.0) -> Panel:
    return Panel(
        outcomes=rng.normal(scale=scale, size=(n_units, n_times)),
        unit_ids=unit_labels('u', n_units),
        times=np.arange(1, n_times + 1, dtype=float),
        treated_index=treated_index,
        tau0=tau0,
    )


def ar1_panel(seed: int, n_units: int, n_times: int, spec: Ar1ErrorSpec, intercept: float = 0.0,
              slope: float = 0.0, tau0: Optional[int] = None, first_time: float = 1.0) -> Panel:
    """AR(1) errors around a common linear mean intercept + slope * t"""
    times = first_time + np.arange(n_times, dtype=float)
    factor = cholesky(build_ar1_cov(n_times, spec))
    mean = intercept + slope * times
    rows = [sample_mvn(mean, factor, RngStream(seed, unit)) for unit in range(n_units)]
    return Panel(
        outcomes=np.vstack(rows),
        unit_ids=unit_labels('u', n_units),
        times=times,
        treated_index=0,
        tau0=tau0 if tau0 is not None else n_times // 2,
    )
