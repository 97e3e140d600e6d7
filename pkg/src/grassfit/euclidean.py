"""Shooting regression in R^n: straight lines, time-warped lines, cubic splines.

Each model is parametrized purely by initial conditions (plus per-control-point
jerk values for splines) and fitted by descending the adjoint gradient of the
least-squares energy.  The state and adjoint systems here are piecewise
polynomial in t, so the forward and backward passes are integrated exactly by
per-segment Taylor steps; the gradients are therefore the exact gradients of
the energy, which makes this tier a convenient oracle against closed-form
least squares.

States: x1 position, x2 velocity, x3 acceleration, x4 jerk (splines only).
Adjoints run backward from zero at t = 1, with lam1 jumping by twice the
residual at every measurement and lam4 restarting at zero in each interval
between control points.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize as scipy_minimize

from ._descent import minimize as descend
from .exceptions import DegenerateDataError, InvalidArgumentError
from .reports import FitReport
from .warps import TimeWarp, warp_eval, warp_grad


@dataclass(frozen=True)
class EuclideanDataset:
    """Measurements (t_i, y_i) with t in [0, 1] nondecreasing."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        y = np.asarray(self.values, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if t.ndim != 1 or y.ndim != 2 or len(t) != len(y):
            raise InvalidArgumentError("times must be (N,), values (N, n)")
        if np.any(np.diff(t) < 0):
            raise InvalidArgumentError("times must be nondecreasing")
        if np.any(t < 0) or np.any(t > 1):
            raise InvalidArgumentError("times must lie in [0, 1]")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", y)

    @property
    def count(self) -> int:
        return len(self.times)

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class EuclideanLineModel:
    intercept: np.ndarray  # x1(0)
    slope: np.ndarray      # x2(0)

    def evaluate(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return self.intercept[None, :] + t[:, None] * self.slope[None, :]


@dataclass(frozen=True)
class EuclideanSplineModel:
    position0: np.ndarray
    velocity0: np.ndarray
    acceleration0: np.ndarray
    jerk0: np.ndarray
    control_points: tuple          # strictly increasing, inside (0, 1)
    jerk_values: tuple             # x4 value on the interval after each control point

    def evaluate(self, t):
        """Closed-form x1(t); C^2 by construction, cubic between breakpoints."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = (
            self.position0[None, :]
            + t[:, None] * self.velocity0[None, :]
            + (t[:, None] ** 2 / 2.0) * self.acceleration0[None, :]
            + (t[:, None] ** 3 / 6.0) * self.jerk0[None, :]
        )
        prev = self.jerk0
        for tc, value in zip(self.control_points, self.jerk_values):
            gap = np.clip(t - tc, 0.0, None)
            out = out + (gap[:, None] ** 3 / 6.0) * (np.asarray(value) - prev)[None, :]
            prev = np.asarray(value)
        return out


# ---------------------------------------------------------------------------
# straight lines


def line_energy_and_gradients(data: EuclideanDataset, intercept, slope):
    """Energy plus exact adjoint gradients for the two-state line system.

    lam1 is piecewise constant between measurements (its jump at t_i is twice
    the residual there) and lam2 integrates -lam1 backward exactly, which
    collapses to the weighted residual sums below.
    """
    t, y = data.times, data.values
    residual = intercept[None, :] + t[:, None] * slope[None, :] - y
    energy = float(np.sum(residual * residual))
    jumps = 2.0 * residual
    lam1_0 = -np.sum(jumps, axis=0)
    lam2_0 = -np.sum(t[:, None] * jumps, axis=0)
    return energy, [-lam1_0, -lam2_0]


def fit_linear_euclid(
    data: EuclideanDataset,
    *,
    max_iters: int = 5000,
    tol_grad: float = 1e-9,
    initial: EuclideanLineModel | None = None,
) -> tuple[EuclideanLineModel, FitReport]:
    """Line of best fit by adjoint-gradient descent with Armijo line search."""
    if data.count < 2 or np.ptp(data.times) == 0.0:
        raise DegenerateDataError("need at least two measurements at distinct times")

    if initial is None:
        params0 = [data.values[0].copy(), np.zeros(data.dim)]
    else:
        params0 = [initial.intercept.copy(), initial.slope.copy()]

    def energy_fn(params):
        e, _ = line_energy_and_gradients(data, *params)
        return e

    def eg_fn(params):
        return line_energy_and_gradients(data, *params)

    def apply_step(params, step, grads):
        return [p - step * g for p, g in zip(params, grads)]

    res = descend(
        energy_fn,
        eg_fn,
        apply_step,
        params0,
        max_iters=max_iters,
        tol_grad=tol_grad,
        tol_rel_energy=1e-15,
        rel_patience=5,
    )
    model = EuclideanLineModel(res.params[0], res.params[1])
    report = FitReport(
        energy=res.energy,
        data_term=res.energy,
        regularity_term=0.0,
        r_squared=_euclid_r_squared(data, model.evaluate(data.times)),
        iterations=res.iterations,
        converged=res.converged,
        energy_trace=res.energy_trace,
    )
    return model, report


def _euclid_r_squared(data: EuclideanDataset, predictions) -> float:
    centered = data.values - np.mean(data.values, axis=0, keepdims=True)
    total = float(np.sum(centered * centered))
    if total == 0.0:
        return float("nan")
    residual = float(np.sum((predictions - data.values) ** 2))
    return 1.0 - residual / total


# ---------------------------------------------------------------------------
# time-warped lines


def timewarp_energy(data: EuclideanDataset, warp: TimeWarp, model: EuclideanLineModel):
    warped = np.asarray(warp_eval(warp, data.times))
    residual = model.intercept[None, :] + warped[:, None] * model.slope[None, :] - data.values
    return float(np.sum(residual * residual))


def timewarp_theta_gradient(data: EuclideanDataset, warp: TimeWarp, model: EuclideanLineModel):
    """Chain-rule gradient of the energy in (k, M, beta, m) at a fixed line."""
    warped = np.asarray(warp_eval(warp, data.times))
    residual = model.intercept[None, :] + warped[:, None] * model.slope[None, :] - data.values
    sensitivity = 2.0 * residual @ model.slope          # (N,)
    grads = warp_grad(warp, data.times)                 # (4, N)
    return grads @ sensitivity


def fit_timewarped_euclid(
    data: EuclideanDataset,
    warp_init: TimeWarp,
    *,
    max_outer: int = 400,
    tol_rel_energy: float = 1e-10,
    theta_step_init: float = 1.0,
    theta_step_clip: float = 0.5,
) -> tuple[EuclideanLineModel, TimeWarp, FitReport]:
    """Alternate between refitting the line in warped time and one bounded
    backtracked gradient step on the warp parameters (k, M); beta and m stay
    at their initial values.  The outer energy trace is nonincreasing."""
    if data.count < 2 or np.ptp(data.times) == 0.0:
        raise DegenerateDataError("need at least two measurements at distinct times")

    warp = warp_init
    model: EuclideanLineModel | None = None
    trace = []
    stagnated = False
    outer = 0
    for outer in range(1, max_outer + 1):
        warped = np.asarray(warp_eval(warp, data.times))
        inner = EuclideanDataset(times=warped, values=data.values)
        model, inner_report = fit_linear_euclid(inner, initial=model)
        energy = timewarp_energy(data, warp, model)
        if trace and energy > trace[-1]:
            energy = trace[-1]  # guard against round-off regressions
        trace.append(energy)

        grad = timewarp_theta_gradient(data, warp, model)[:2]
        gnorm_sq = float(np.sum(grad * grad))
        if gnorm_sq > 0.0:
            step = min(theta_step_init, theta_step_clip / np.max(np.abs(grad)))
            improved = False
            for _ in range(40):
                cand = _theta_update(warp, -step * grad)
                if cand is not None:
                    cand_energy = timewarp_energy(data, cand, model)
                    if cand_energy <= energy - 1e-4 * step * gnorm_sq:
                        warp = cand
                        improved = True
                        break
                step *= 0.5
            if not improved and np.sqrt(gnorm_sq) > 1e-8 and energy > 1e-12:
                stagnated = True
        if len(trace) >= 2:
            drop = (trace[-2] - trace[-1]) / max(abs(trace[-2]), 1e-300)
            if drop < tol_rel_energy:
                break

    final_energy = trace[-1]
    report = FitReport(
        energy=final_energy,
        data_term=final_energy,
        regularity_term=0.0,
        r_squared=_euclid_r_squared(
            data, model.intercept[None, :] + np.asarray(warp_eval(warp, data.times))[:, None] * model.slope[None, :]
        ),
        iterations=outer,
        converged=not stagnated,
        energy_trace=trace,
        diagnostics={"warp_stagnated": stagnated},
    )
    return model, warp, report


def _theta_update(warp: TimeWarp, delta):
    k = warp.growth_rate + float(delta[0])
    m_loc = warp.peak_time + float(delta[1])
    if k <= 1e-8:
        return None
    return replace(warp, growth_rate=k, peak_time=m_loc)


# ---------------------------------------------------------------------------
# cubic splines with data-independent control points


def _spline_unpack(x, dim, n_controls):
    blocks = x.reshape(4 + n_controls, dim)
    return blocks[0], blocks[1], blocks[2], blocks[3], blocks[4:]


def spline_energy_and_gradients(data: EuclideanDataset, control_points, x):
    """Energy and exact adjoint gradients of the four-state shooting system.

    Forward: per-segment Taylor steps of (x1, x2, x3) with x4 constant inside
    each interval and reset to its parameter value at control points.
    Backward: exact Taylor steps of the adjoint cascade; lam1 jumps by twice
    the residual at measurements; lam4 restarts at zero at every control point
    and its accumulated value there is the (negated) jerk gradient.
    """
    t, y = data.times, data.values
    dim = data.dim
    controls = np.asarray(control_points, dtype=float)
    x1, x2, x3, x4, jerks = _spline_unpack(np.asarray(x, dtype=float), dim, len(controls))

    events = _spline_events(t, controls)

    # forward sweep
    x1c, x2c, x3c, x4c = x1.copy(), x2.copy(), x3.copy(), x4.copy()
    residuals = np.zeros_like(y)
    t_cur = 0.0
    for kind, t_ev, idx in events:
        h = t_ev - t_cur
        if h > 0.0:
            x1c = x1c + h * x2c + (h * h / 2.0) * x3c + (h**3 / 6.0) * x4c
            x2c = x2c + h * x3c + (h * h / 2.0) * x4c
            x3c = x3c + h * x4c
            t_cur = t_ev
        if kind == "data":
            residuals[idx] = x1c - y[idx]
        else:
            x4c = jerks[idx].copy()
    energy = float(np.sum(residuals * residuals))

    # backward sweep
    lam1 = np.zeros(dim)
    lam2 = np.zeros(dim)
    lam3 = np.zeros(dim)
    lam4 = np.zeros(dim)
    jerk_grads = np.zeros_like(jerks)
    t_cur = 1.0
    for kind, t_ev, idx in reversed(events):
        h = t_cur - t_ev
        if h > 0.0:
            lam4 = lam4 + h * lam3 + (h * h / 2.0) * lam2 + (h**3 / 6.0) * lam1
            lam3 = lam3 + h * lam2 + (h * h / 2.0) * lam1
            lam2 = lam2 + h * lam1
            t_cur = t_ev
        if kind == "data":
            lam1 = lam1 - 2.0 * residuals[idx]
        else:
            jerk_grads[idx] = -lam4
            lam4 = np.zeros(dim)
    h = t_cur
    if h > 0.0:
        lam4 = lam4 + h * lam3 + (h * h / 2.0) * lam2 + (h**3 / 6.0) * lam1
        lam3 = lam3 + h * lam2 + (h * h / 2.0) * lam1
        lam2 = lam2 + h * lam1

    grads = np.concatenate([-lam1, -lam2, -lam3, -lam4, jerk_grads.ravel()])
    return energy, grads


def _spline_events(times, controls):
    events = [("data", float(t_i), i) for i, t_i in enumerate(times)]
    events += [("control", float(t_c), c) for c, t_c in enumerate(controls)]
    events.sort(key=lambda ev: ev[1])
    return events


def fit_spline_euclid(
    data: EuclideanDataset,
    control_points=(),
    *,
    max_iters: int = 5000,
) -> tuple[EuclideanSplineModel, FitReport]:
    """Cubic-spline fit by quasi-Newton descent over the adjoint gradients."""
    controls = tuple(float(c) for c in control_points)
    if any(not (0.0 < c < 1.0) for c in controls):
        raise InvalidArgumentError("control points must lie strictly inside (0, 1)")
    if list(controls) != sorted(set(controls)):
        raise InvalidArgumentError("control points must be strictly increasing")
    if len(np.unique(data.times)) < 4:
        raise DegenerateDataError("cubic fitting needs at least four distinct times")

    dim = data.dim
    x0 = np.zeros((4 + len(controls)) * dim)
    x0[:dim] = data.values[0]
    trace = []

    def fun(x):
        e, g = spline_energy_and_gradients(data, controls, x)
        return e, g

    res = scipy_minimize(
        fun,
        x0,
        jac=True,
        method="L-BFGS-B",
        callback=lambda xk: trace.append(spline_energy_and_gradients(data, controls, xk)[0]),
        options={"maxiter": max_iters, "ftol": 1e-18, "gtol": 1e-14, "maxcor": 40},
    )
    x1, x2, x3, x4, jerks = _spline_unpack(res.x, dim, len(controls))
    model = EuclideanSplineModel(
        position0=x1,
        velocity0=x2,
        acceleration0=x3,
        jerk0=x4,
        control_points=controls,
        jerk_values=tuple(j.copy() for j in jerks),
    )
    energy = float(res.fun)
    design = _spline_design(data.times, controls)
    rank = int(np.linalg.matrix_rank(design))
    counts = _interval_counts(data.times, controls)
    report = FitReport(
        energy=energy,
        data_term=energy,
        regularity_term=0.0,
        r_squared=_euclid_r_squared(data, model.evaluate(data.times)),
        iterations=int(res.nit),
        converged=bool(res.success) or float(np.max(np.abs(res.jac))) < 1e-8,
        energy_trace=trace,
        diagnostics={
            "design_rank": rank,
            "design_cols": design.shape[1],
            "interval_sample_counts": counts,
        },
    )
    return model, report


def _spline_design(times, controls):
    cols = [np.ones_like(times), times, times**2 / 2.0, times**3 / 6.0]
    cols += [np.clip(times - tc, 0.0, None) ** 3 / 6.0 for tc in controls]
    return np.column_stack(cols)


def _interval_counts(times, controls):
    edges = [0.0, *controls, 1.0]
    return [
        int(np.sum((times >= lo) & (times <= hi)))
        for lo, hi in zip(edges[:-1], edges[1:])
    ]
