"""Fit diagnostics shared by every fitter."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class FitReport:
    """Outcome of one fit.

    ``energy`` always equals ``regularity_term + data_term``; ``data_term``
    already carries its 1/sigma^2 weight.  ``r_squared`` may be NaN when the
    coefficient of determination is undefined for the data at hand.
    """

    energy: float
    data_term: float
    regularity_term: float
    r_squared: float
    iterations: int
    converged: bool
    energy_trace: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
