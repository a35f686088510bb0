"""Convergence-rate fitting on solver traces."""

from __future__ import annotations

import math

import numpy as np

__all__ = ["fit_rate"]

_FLOOR_SHIFT = 1e-12
_FLOOR_CUTOFF = 1e-11
_MIN_POINTS = 20


def fit_rate(trace, tail_fraction: float, f_ref: float) -> float:
    """Least-squares slope of log(F - F_ref') versus log k over the trace tail.

    ``f_ref`` should be the minimum objective of a several-times-longer
    reference run; it is shifted down by 1e-12 so exact convergence stays
    loggable.  Rows whose gap sits at the shift floor are treated as converged
    and dropped; if fewer than 20 fittable rows remain the run is reported as
    already converged with the sentinel slope -inf.
    """
    if not 0.0 < tail_fraction <= 1.0:
        raise ValueError("tail_fraction must lie in (0, 1]")
    k = np.asarray(trace.k, dtype=float)
    F = np.asarray(trace.objective, dtype=float)
    n = len(k)
    start = max(1, n - int(math.ceil(tail_fraction * n)))  # k = 0 never enters
    k = k[start:]
    F = F[start:]
    gaps = F - (f_ref - _FLOOR_SHIFT)
    usable = gaps > _FLOOR_CUTOFF
    if int(usable.sum()) < _MIN_POINTS:
        return -math.inf
    logs_k = np.log(k[usable])
    logs_g = np.log(gaps[usable])
    slope, _ = np.polyfit(logs_k, logs_g, 1)
    return float(slope)
