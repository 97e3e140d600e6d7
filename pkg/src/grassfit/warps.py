"""Generalized logistic reparametrization of the independent variable.

The warp f(r) = (1 + beta * exp(-k (r - M)))^(-1/m) is strictly increasing,
maps the whole real line into (0, 1), and with beta == shape the parameter M
marks the location of maximum growth.  It is the parametric family used to
re-index measurements before fitting a geodesic in warped time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidArgumentError

_EXP_MAX = 700.0  # exp overflows shortly above this; saturate instead


@dataclass(frozen=True)
class TimeWarp:
    growth_rate: float        # k > 0
    peak_time: float          # M
    beta: float = 1.0         # > 0
    shape: float = 1.0        # m > 0

    def __post_init__(self):
        if not (self.growth_rate > 0):
            raise InvalidArgumentError("growth_rate must be positive")
        if not (self.shape > 0):
            raise InvalidArgumentError("shape must be positive")
        if not (self.beta > 0):
            raise InvalidArgumentError("beta must be positive")

    @classmethod
    def evenly_spread(cls, rs) -> "TimeWarp":
        """Initial warp whose values run from 0.05 to 0.95 across the data span."""
        rs = np.asarray(rs, dtype=float)
        lo, hi = float(np.min(rs)), float(np.max(rs))
        if hi <= lo:
            raise InvalidArgumentError("need at least two distinct indices to spread")
        mid = float(np.median(rs))
        half = max(hi - mid, mid - lo)
        k = np.log(0.95 / 0.05) / half
        return cls(growth_rate=float(k), peak_time=mid)


def warp_eval(warp: TimeWarp, r):
    """Warped value(s) in (0, 1); saturates rather than overflow for extreme r."""
    r = np.asarray(r, dtype=float)
    z = -warp.growth_rate * (r - warp.peak_time)
    z = np.clip(z, -_EXP_MAX, _EXP_MAX)
    f = (1.0 + warp.beta * np.exp(z)) ** (-1.0 / warp.shape)
    return f if f.ndim else float(f)


def warp_grad(warp: TimeWarp, r):
    """Partial derivatives of the warp with respect to (k, M, beta, m).

    Returns an array of shape (4,) for scalar r, (4, len(r)) otherwise.
    Saturated evaluations get a zero gradient.
    """
    r = np.asarray(r, dtype=float)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    k, m_loc, beta, m = warp.growth_rate, warp.peak_time, warp.beta, warp.shape
    z = -k * (r - m_loc)
    saturated = np.abs(z) >= _EXP_MAX
    z = np.clip(z, -_EXP_MAX, _EXP_MAX)
    e = beta * np.exp(z)
    b = 1.0 + e
    f = b ** (-1.0 / m)
    common = f * e / (m * b)
    grad = np.vstack(
        [
            (r - m_loc) * common,      # d/dk
            -k * common,               # d/dM
            -common / beta,            # d/dbeta
            f * np.log(b) / m**2,      # d/dm
        ]
    )
    grad[:, saturated] = 0.0
    return grad[:, 0] if scalar else grad
