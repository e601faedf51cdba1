"""Two-point mean functions used by entropy-conservative fluxes.

All means accept scalars or same-shaped numpy arrays.  The geometric,
harmonic and logarithmic means vanish as either argument goes to zero,
which is what makes the associated fluxes positivity-preserving.
"""

from __future__ import annotations

import numpy as np

# Below this value of zeta = ((a-b)/(a+b))^2 the logarithmic mean is
# evaluated by its series to avoid cancellation in ln(b) - ln(a).
_LOG_MEAN_ZETA = 1e-4


def _require_positive(*args):
    for x in args:
        if np.any(np.asarray(x) <= 0.0):
            raise ValueError("mean arguments must be positive")


def mean_arith(a, b):
    return 0.5 * (np.asarray(a, float) + np.asarray(b, float))


def mean_geo(a, b):
    _require_positive(a, b)
    return np.sqrt(np.asarray(a, float) * np.asarray(b, float))


def mean_harm(a, b):
    _require_positive(a, b)
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    return 2.0 * a * b / (a + b)


def mean_log(a, b):
    """(b - a) / (ln b - ln a), continued by its limit value a at a = b.

    Near-equal arguments use the series
    (a + b) / (2 (1 + zeta/3 + zeta^2/5 + zeta^3/7)).
    """
    _require_positive(a, b)
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    s = a + b
    zeta = ((a - b) / s) ** 2
    series = 0.5 * s / (1.0 + zeta * (1.0 / 3.0 + zeta * (0.2 + zeta / 7.0)))
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = np.where(a == b, series, (b - a) / (np.log(b) - np.log(a)))
    result = np.where(zeta < _LOG_MEAN_ZETA, series, direct)
    return result if result.ndim else float(result)
