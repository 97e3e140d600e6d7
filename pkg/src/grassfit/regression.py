"""Parametric regression of subspace-valued data against a scalar index.

Three model families are fitted by adjoint shooting on G(p, n):

* geodesics - two initial conditions (point, velocity);
* time-warped geodesics - a geodesic in logistically re-indexed time;
* cubic splines - four initial conditions plus per-control-point jerk values,
  with the jerk allowed to jump at data-independent control points.

All fitting happens on an affinely normalized index (the data span maps to
[0, 1]); models carry the affine map so callers keep working in original
units.  Forward trajectories and backward adjoint sweeps run on the shared
RK4 integrator, with measurement jumps and control-point resets applied
exactly at their locations.  Line-search updates keep iterates feasible by
retracting the base point and re-projecting velocities, so the orthonormality
and horizontality constraints hold at every accepted iterate.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._descent import minimize as descend
from .exceptions import (
    CutLocusError,
    DegenerateDataError,
    DegenerateWarpError,
    InvalidArgumentError,
)
from .grassmann import (
    GrassmannPoint,
    TangentVector,
    _distance_matrix,
    _exp_matrix,
    _exp_matrix_with_velocity,
    _log_matrix,
    _project_matrix,
    _retract_matrix,
    geodesic_dynamics,
)
from .integrators import IntegrationConfig, StateSystem, integrate
from .reports import FitReport
from .warps import TimeWarp, warp_eval, warp_grad


@dataclass(frozen=True)
class IndexMap:
    """Affine map between original index units and the internal [0, 1] scale."""

    offset: float
    scale: float

    def __post_init__(self):
        if not np.isfinite(self.offset) or not np.isfinite(self.scale) or self.scale <= 0:
            raise InvalidArgumentError("index map needs finite offset and positive scale")

    def to_unit(self, r):
        return (np.asarray(r, dtype=float) - self.offset) / self.scale

    def from_unit(self, u):
        return self.offset + self.scale * np.asarray(u, dtype=float)

    @classmethod
    def identity(cls) -> "IndexMap":
        return cls(0.0, 1.0)

    @classmethod
    def spanning(cls, rs) -> "IndexMap":
        rs = np.asarray(rs, dtype=float)
        lo, hi = float(np.min(rs)), float(np.max(rs))
        return cls(lo, hi - lo) if hi > lo else cls(lo, 1.0)


@dataclass(frozen=True)
class Dataset:
    """Ordered samples (r_i, Y_i); ties (repeated r_i) are permitted."""

    rs: np.ndarray
    points: tuple
    index_map: IndexMap

    def __post_init__(self):
        rs = np.asarray(self.rs, dtype=float)
        if rs.ndim != 1 or len(rs) != len(self.points):
            raise InvalidArgumentError("one index value per point required")
        if len(rs) < 2:
            raise InvalidArgumentError("a dataset needs at least two samples")
        if np.any(np.diff(rs) < 0):
            raise InvalidArgumentError("index values must be nondecreasing")
        shapes = {pt.matrix.shape for pt in self.points}
        if len(shapes) != 1:
            raise InvalidArgumentError(f"points live on different manifolds: {shapes}")
        object.__setattr__(self, "rs", rs)
        object.__setattr__(self, "points", tuple(self.points))

    @classmethod
    def from_points(cls, rs, points) -> "Dataset":
        return cls(rs=np.asarray(rs, dtype=float), points=tuple(points),
                   index_map=IndexMap.spanning(rs))

    @property
    def count(self) -> int:
        return len(self.rs)

    @property
    def n(self) -> int:
        return self.points[0].n

    @property
    def p(self) -> int:
        return self.points[0].p

    @property
    def unit_rs(self) -> np.ndarray:
        return self.index_map.to_unit(self.rs)

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset.from_points(self.rs[idx], [self.points[i] for i in idx])


@dataclass(frozen=True)
class FitConfig:
    """Weights, integrator density, and optimizer policy for the fitters."""

    alpha: float = 0.0
    sigma2: float = 1.0
    steps_per_unit: int = 100
    max_iters: int = 2000
    tol_grad: float = 1e-8
    tol_rel_energy: float = 1e-11
    rel_patience: int = 3
    ls_init_step: float = 1.0
    ls_contraction: float = 0.5
    ls_sufficient_decrease: float = 1e-4
    ls_max_backtracks: int = 60
    warp_max_outer: int = 200
    warp_tol_rel: float = 1e-9
    warp_inner_rel_tol: float = 1e-7
    warp_theta_step_init: float = 1.0
    warp_theta_step_clip: float = 0.5
    compute_r_squared: bool = True

    def __post_init__(self):
        if self.alpha < 0:
            raise InvalidArgumentError("alpha must be nonnegative")
        if self.sigma2 <= 0:
            raise InvalidArgumentError("sigma2 must be positive")


@dataclass(frozen=True)
class GeodesicModel:
    """Geodesic through `start` with initial velocity `velocity` at unit index 0."""

    start: GrassmannPoint
    velocity: TangentVector
    index_map: IndexMap

    def evaluate(self, r, method: str = "closed", steps_per_unit: int = 100) -> GrassmannPoint:
        return self.sample([r], method=method, steps_per_unit=steps_per_unit)[0]

    def sample(self, rs, method: str = "closed", steps_per_unit: int = 100):
        us = np.atleast_1d(self.index_map.to_unit(rs))
        if method == "closed":
            return [
                GrassmannPoint(_exp_matrix(self.start.matrix, u * self.velocity.matrix))
                for u in us
            ]
        if method == "ode":
            return _sample_by_ode(
                [self.start.matrix, self.velocity.matrix],
                geodesic_dynamics,
                [],
                us,
                steps_per_unit,
            )
        raise InvalidArgumentError(f"unknown evaluation method {method!r}")


@dataclass(frozen=True)
class TimeWarpedModel:
    """Geodesic over warped time; the warp acts on the normalized index."""

    geodesic: GeodesicModel
    warp: TimeWarp
    index_map: IndexMap

    def evaluate(self, r, **kwargs) -> GrassmannPoint:
        return self.sample([r], **kwargs)[0]

    def sample(self, rs, **kwargs):
        warped = np.atleast_1d(warp_eval(self.warp, self.index_map.to_unit(rs)))
        return self.geodesic.sample(warped, **kwargs)


@dataclass(frozen=True)
class SplineModel:
    """Cubic spline on G(p, n): four initial conditions plus jerk values that
    replace the fourth state at each control point (normalized locations)."""

    start: GrassmannPoint
    velocity: TangentVector
    acceleration: TangentVector
    jerk: np.ndarray
    control_points: tuple
    jerk_values: tuple
    index_map: IndexMap

    def evaluate(self, r, steps_per_unit: int = 100) -> GrassmannPoint:
        return self.sample([r], steps_per_unit=steps_per_unit)[0]

    def sample(self, rs, steps_per_unit: int = 100):
        us = np.atleast_1d(self.index_map.to_unit(rs))
        if np.any(us < 0):
            raise InvalidArgumentError("spline models do not extrapolate below the data span")
        jumps = [
            (float(rc), _make_jerk_reset(np.asarray(val, dtype=float)))
            for rc, val in zip(self.control_points, self.jerk_values)
        ]
        state = [
            self.start.matrix,
            self.velocity.matrix,
            self.acceleration.matrix,
            np.asarray(self.jerk, dtype=float),
        ]
        return _sample_by_ode(state, _spline_dynamics, jumps, us, steps_per_unit)


@dataclass(frozen=True)
class PiecewiseGeodesicModel:
    """Independent geodesic fits per index interval; no continuity across cuts."""

    cuts: tuple
    segments: tuple
    index_map: IndexMap

    def _segment_for(self, r: float) -> GeodesicModel:
        idx = int(np.searchsorted(np.asarray(self.cuts), r, side="left"))
        return self.segments[idx]

    def evaluate(self, r, **kwargs) -> GrassmannPoint:
        return self._segment_for(float(r)).evaluate(r, **kwargs)

    def sample(self, rs, **kwargs):
        return [self.evaluate(float(r), **kwargs) for r in np.atleast_1d(rs)]


def _make_jerk_reset(value: np.ndarray):
    def reset(r, state):
        out = list(state)
        out[3] = value.copy()
        return out

    return reset


def _spline_dynamics(r, state):
    x1, x2, x3, x4 = state[:4]
    g22 = x2.T @ x2
    x1t_x4 = x1.T @ x4
    x2t_x3 = x2.T @ x3
    d1 = x2
    d2 = x3 - x1 @ g22
    d3 = -x4 + x1 @ (x1t_x4 - x2t_x3)
    d4 = x3 @ g22 + x2 @ (x1t_x4.T - x2t_x3.T)
    if len(state) == 4:
        return [d1, d2, d3, d4]
    return [d1, d2, d3, d4, x3.ravel() @ x3.ravel()]


def _sample_by_ode(state, rhs, jumps, us, steps_per_unit):
    """Evaluate a shooting system at the unit indices ``us`` (single forward
    integration over the full span, so coincident requests share one grid)."""
    us = np.asarray(us, dtype=float)
    out = [None] * len(us)
    config_f = IntegrationConfig(steps_per_unit=steps_per_unit, direction="forward")
    pos = us[us >= 0]
    if pos.size:
        jselect = [(rc, fn) for rc, fn in jumps if 0.0 <= rc <= float(np.max(pos))]
        system = StateSystem(("x",) * len(state), [np.array(a) for a in state], rhs, jselect)
        traj = integrate(system, 0.0, float(np.max(pos)), config_f, sample_points=pos)
        for i, u in enumerate(us):
            if u >= 0:
                out[i] = _as_point(traj.at(float(u))[0])
    neg = us[us < 0]
    if neg.size:
        config_b = IntegrationConfig(steps_per_unit=steps_per_unit, direction="backward")
        system = StateSystem(("x",) * len(state), [np.array(a) for a in state], rhs, [])
        traj = integrate(system, 0.0, float(np.min(neg)), config_b, sample_points=neg)
        for i, u in enumerate(us):
            if u < 0:
                out[i] = _as_point(traj.at(float(u))[0])
    return out


def _as_point(matrix) -> GrassmannPoint:
    m = np.asarray(matrix, dtype=float)
    if np.linalg.norm(m.T @ m - np.eye(m.shape[1])) > 1e-10:
        m = _retract_matrix(m)
    return GrassmannPoint(m)


def _grouped_measurements(unit_rs, points):
    """Unique measurement locations with the point indices sitting there."""
    groups: dict[float, list[int]] = {}
    for i, u in enumerate(unit_rs):
        groups.setdefault(float(u), []).append(i)
    return dict(sorted(groups.items()))


def _require_distinct(data: Dataset):
    if np.ptp(data.rs) == 0.0:
        raise DegenerateDataError("all measurement indices coincide; nothing to regress on")


# ---------------------------------------------------------------------------
# standard geodesic regression


def _std_problem(data: Dataset, config: FitConfig):
    """Energy and adjoint-gradient evaluators for geodesic shooting, as
    functions of the raw initial-condition matrices [X1(0), X2(0)]."""
    unit_rs = data.unit_rs
    span_end = float(np.max(unit_rs))
    groups = _grouped_measurements(unit_rs, data.points)
    point_mats = [pt.matrix for pt in data.points]
    fwd_cfg = IntegrationConfig(config.steps_per_unit, "forward")
    bwd_cfg = IntegrationConfig(config.steps_per_unit, "backward")
    inv_sigma2 = 1.0 / config.sigma2
    sample_us = np.fromiter(groups.keys(), dtype=float)

    def forward(params):
        system = StateSystem(("x1", "x2"), [params[0], params[1]], geodesic_dynamics)
        return integrate(system, 0.0, span_end, fwd_cfg, sample_points=sample_us)

    def energy_from_traj(params, traj):
        data_term = 0.0
        for u, idxs in groups.items():
            x1 = traj.at(u)[0]
            for i in idxs:
                data_term += _distance_matrix(x1, point_mats[i]) ** 2
        data_term *= inv_sigma2
        reg = config.alpha * float(np.sum(params[1] * params[1]))
        return reg + data_term

    def energy_fn(params):
        return energy_from_traj(params, forward(params))

    def eg_fn(params):
        traj = forward(params)
        energy = energy_from_traj(params, traj)
        x1_end, x2_end = traj.final
        jumps = [
            (u, _make_measurement_jump(idxs, point_mats, inv_sigma2, lam_index=2))
            for u, idxs in groups.items()
        ]
        system = StateSystem(
            ("x1", "x2", "l1", "l2"),
            [x1_end, x2_end, np.zeros_like(x1_end), np.zeros_like(x2_end)],
            _std_backward_dynamics,
            jumps,
        )
        back = integrate(system, span_end, 0.0, bwd_cfg)
        x1, x2, l1, l2 = back.final
        grad_x1 = -_project_matrix(x1, l1) + x2 @ (l2.T @ x1)
        grad_x2 = 2.0 * config.alpha * x2 - _project_matrix(x1, l2)
        return energy, [grad_x1, grad_x2]

    return energy_fn, eg_fn


def std_energy_and_gradients(data: Dataset, config: FitConfig, initial_point, initial_velocity):
    """Energy and its adjoint gradients at raw initial conditions (matrices)."""
    _, eg_fn = _std_problem(data, config)
    return eg_fn([np.asarray(initial_point, dtype=float),
                  np.asarray(initial_velocity, dtype=float)])


def fit_std_ggr(
    data: Dataset,
    config: FitConfig | None = None,
    initial: GeodesicModel | None = None,
) -> tuple[GeodesicModel, FitReport]:
    """Fit a geodesic by shooting: descend the adjoint gradients of the
    regularized squared-distance energy with a feasibility-preserving
    Armijo line search."""
    config = config or FitConfig()
    _require_distinct(data)
    energy_fn, eg_fn = _std_problem(data, config)

    if initial is None:
        params0 = [data.points[0].matrix.copy(), np.zeros((data.n, data.p))]
    else:
        params0 = [initial.start.matrix.copy(), initial.velocity.matrix.copy()]

    res = descend(
        energy_fn,
        eg_fn,
        _feasible_step_two,
        params0,
        max_iters=config.max_iters,
        tol_grad=config.tol_grad,
        tol_rel_energy=config.tol_rel_energy,
        rel_patience=config.rel_patience,
        ls_init_step=config.ls_init_step,
        ls_contraction=config.ls_contraction,
        ls_sufficient_decrease=config.ls_sufficient_decrease,
        ls_max_backtracks=config.ls_max_backtracks,
    )

    start = GrassmannPoint(res.params[0])
    model = GeodesicModel(
        start=start,
        velocity=TangentVector(_project_matrix(res.params[0], res.params[1]), start),
        index_map=data.index_map,
    )
    report = _build_report(data, model, res, config,
                           regularity=config.alpha * float(np.sum(res.params[1] ** 2)))
    return model, report


def _std_backward_dynamics(r, state):
    x1, x2, l1, l2 = state
    g22 = x2.T @ x2
    e = l2.T @ x1
    return [
        x2,
        -x1 @ g22,
        l2 @ g22,
        -l1 + x2 @ (e + e.T),
    ]


def _make_measurement_jump(idxs, point_mats, inv_sigma2, lam_index):
    """Adjoint jump at one measurement location; coincident measurements add up."""

    def jump(r, state):
        x1 = state[0]
        bump = np.zeros_like(x1)
        for i in idxs:
            try:
                bump += _log_matrix(x1, point_mats[i])
            except CutLocusError as err:
                raise CutLocusError(
                    f"measurement {i} is at the cut locus of the current trajectory",
                    index=i,
                ) from err
        out = list(state)
        out[lam_index] = out[lam_index] + 2.0 * inv_sigma2 * bump
        return out

    return jump


def _feasible_step_two(params, step, grads):
    x1 = _retract_matrix(params[0] - step * grads[0])
    x2 = _project_matrix(x1, params[1] - step * grads[1])
    return [x1, x2]


def _build_report(data, model, res, config, regularity):
    data_term = res.energy - regularity
    r2 = float("nan")
    if config.compute_r_squared:
        from .evaluation import r_squared

        try:
            r2 = r_squared(data, model)
        except Exception:
            r2 = float("nan")
    return FitReport(
        energy=res.energy,
        data_term=data_term,
        regularity_term=regularity,
        r_squared=r2,
        iterations=res.iterations,
        converged=res.converged,
        energy_trace=res.energy_trace,
        diagnostics={"grad_norm": res.grad_norm},
    )


def evaluate_geodesic(
    model: GeodesicModel, r, method: str = "closed", steps_per_unit: int = 100
) -> GrassmannPoint:
    """Point on the fitted geodesic at original-unit index ``r``."""
    return model.evaluate(r, method=method, steps_per_unit=steps_per_unit)


# ---------------------------------------------------------------------------
# time-warped geodesic regression


def fit_tw_ggr(
    data: Dataset,
    config: FitConfig | None = None,
    warp_init: TimeWarp | None = None,
) -> tuple[TimeWarpedModel, FitReport]:
    """Alternating optimization: geodesic regression in warped time, then one
    bounded backtracked gradient step on the warp's (k, M); beta and the shape
    parameter stay fixed.  The recorded outer energy trace is nonincreasing."""
    config = config or FitConfig()
    _require_distinct(data)
    unit_rs = data.unit_rs
    point_mats = [pt.matrix for pt in data.points]
    warp = warp_init or TimeWarp.evenly_spread(unit_rs)

    inner_config = replace(
        config,
        tol_rel_energy=max(config.tol_rel_energy, config.warp_inner_rel_tol),
        rel_patience=2,
        compute_r_squared=False,
    )

    def warped_times(w):
        values = np.asarray(warp_eval(w, unit_rs))
        if float(np.ptp(values)) < 1e-6:
            raise DegenerateWarpError(
                "warp collapsed: all warped indices lie within 1e-6 of each other"
            )
        return values

    def closed_energy(w, warped, x1m, x2m):
        e = 0.0
        for u, ym in zip(warped, point_mats):
            pt, _ = _exp_matrix_with_velocity(x1m, x2m, float(u))
            e += _distance_matrix(pt, ym) ** 2
        e /= config.sigma2
        _, vel0 = _exp_matrix_with_velocity(x1m, x2m, float(warped[0]))
        return e + config.alpha * float(np.sum(vel0 * vel0))

    geo: GeodesicModel | None = None
    trace: list[float] = []
    iterations = 0
    inner_converged = True
    for iterations in range(1, config.warp_max_outer + 1):
        warped = warped_times(warp)
        inner_data = Dataset(rs=warped, points=data.points, index_map=IndexMap.identity())
        cand_geo, inner_report = fit_std_ggr(inner_data, inner_config, initial=geo)
        cand_energy = closed_energy(warp, warped, cand_geo.start.matrix,
                                    cand_geo.velocity.matrix)
        if geo is None or not trace or cand_energy <= trace[-1]:
            geo = cand_geo
            inner_converged = inner_report.converged
        else:
            cand_energy = trace[-1]
        trace.append(cand_energy)

        grad = tw_theta_gradient(data, warp, geo, alpha=config.alpha, sigma2=config.sigma2)[:2]
        gnorm_sq = float(np.sum(grad * grad))
        if gnorm_sq > 0.0:
            step = config.warp_theta_step_init
            biggest = float(np.max(np.abs(grad)))
            if biggest * step > config.warp_theta_step_clip:
                step = config.warp_theta_step_clip / biggest
            x1m, x2m = geo.start.matrix, geo.velocity.matrix
            for _ in range(40):
                cand = _bounded_theta(warp, -step * grad)
                if cand is not None:
                    try:
                        cand_warped = warped_times(cand)
                    except DegenerateWarpError:
                        cand_warped = None
                    if cand_warped is not None:
                        e_cand = closed_energy(cand, cand_warped, x1m, x2m)
                        if e_cand <= trace[-1] - 1e-4 * step * gnorm_sq:
                            warp = cand
                            trace.append(e_cand)
                            break
                step *= 0.5
        if len(trace) >= 2:
            drop = (trace[-2] - trace[-1]) / max(abs(trace[-2]), 1e-300)
            if 0 <= drop < config.warp_tol_rel:
                break

    model = TimeWarpedModel(geodesic=geo, warp=warp, index_map=data.index_map)
    final_warped = np.asarray(warp_eval(warp, unit_rs))
    _, vel0 = _exp_matrix_with_velocity(
        geo.start.matrix, geo.velocity.matrix, float(final_warped[0])
    )
    regularity = config.alpha * float(np.sum(vel0 * vel0))
    r2 = float("nan")
    if config.compute_r_squared:
        from .evaluation import r_squared

        try:
            r2 = r_squared(data, model)
        except Exception:
            r2 = float("nan")
    report = FitReport(
        energy=trace[-1],
        data_term=trace[-1] - regularity,
        regularity_term=regularity,
        r_squared=r2,
        iterations=iterations,
        converged=inner_converged,
        energy_trace=trace,
        diagnostics={"warp": (warp.growth_rate, warp.peak_time, warp.beta, warp.shape)},
    )
    return model, report


def tw_theta_gradient(
    data: Dataset,
    warp: TimeWarp,
    geodesic: GeodesicModel,
    alpha: float = 0.0,
    sigma2: float = 1.0,
) -> np.ndarray:
    """Gradient of the warped-time energy in (k, M, beta, m) at a fixed geodesic.

    Every term pairs the curve velocity at a warped measurement index with the
    log toward the measurement, scaled by the warp's parameter sensitivities.
    """
    unit_rs = data.unit_rs
    x1m, x2m = geodesic.start.matrix, geodesic.velocity.matrix
    warped = np.atleast_1d(np.asarray(warp_eval(warp, unit_rs)))
    sens = np.atleast_2d(warp_grad(warp, unit_rs))
    total = np.zeros(4)
    for i, (u, ym) in enumerate(zip(warped, (pt.matrix for pt in data.points))):
        pt, vel = _exp_matrix_with_velocity(x1m, x2m, float(u))
        try:
            lg = _log_matrix(pt, ym)
        except CutLocusError as err:
            raise CutLocusError(
                f"measurement {i} is at the cut locus of the warped curve", index=i
            ) from err
        total += (-2.0 / sigma2) * float(np.sum(lg * vel)) * sens[:, i]
    pt0, vel0 = _exp_matrix_with_velocity(x1m, x2m, float(warped[0]))
    accel0 = -pt0 @ (vel0.T @ vel0)
    total += 2.0 * alpha * float(np.sum(accel0 * vel0)) * sens[:, 0]
    return total


def _bounded_theta(warp: TimeWarp, delta):
    k = warp.growth_rate + float(delta[0])
    if k <= 1e-8:
        return None
    return replace(warp, growth_rate=k, peak_time=warp.peak_time + float(delta[1]))


# ---------------------------------------------------------------------------
# cubic-spline geodesic regression


def _normalize_controls(data: Dataset, control_points, span_end: float):
    unit_controls = tuple(
        float(data.index_map.to_unit(rc)) for rc in sorted(control_points)
    )
    for uc in unit_controls:
        if not (0.0 < uc < span_end):
            raise InvalidArgumentError(
                f"control point {data.index_map.from_unit(uc)} is outside the data span"
            )
    if len(set(unit_controls)) != len(unit_controls):
        raise InvalidArgumentError("control points must be distinct")
    return unit_controls


def _cs_problem(data: Dataset, config: FitConfig, unit_controls):
    """Energy, adjoint gradients, and a regularity probe for spline shooting,
    as functions of the raw parameter blocks
    [X1(0), X2(0), X3(0), X4(0), jerk values...]."""
    unit_rs = data.unit_rs
    span_end = float(np.max(unit_rs))
    groups = _grouped_measurements(unit_rs, data.points)
    point_mats = [pt.matrix for pt in data.points]
    fwd_cfg = IntegrationConfig(config.steps_per_unit, "forward")
    bwd_cfg = IntegrationConfig(config.steps_per_unit, "backward")
    inv_sigma2 = 1.0 / config.sigma2
    sample_us = np.fromiter(groups.keys(), dtype=float)

    def forward(params):
        jumps = [
            (uc, _make_jerk_reset(params[4 + c]))
            for c, uc in enumerate(unit_controls)
        ]
        state = [params[0], params[1], params[2], params[3], np.zeros(())]
        system = StateSystem(("x1", "x2", "x3", "x4", "reg"), state,
                             _spline_dynamics, jumps)
        return integrate(system, 0.0, span_end, fwd_cfg, sample_points=sample_us)

    def energy_from_traj(traj):
        data_term = 0.0
        for u, idxs in groups.items():
            x1 = traj.at(u)[0]
            for i in idxs:
                data_term += _distance_matrix(x1, point_mats[i]) ** 2
        data_term *= inv_sigma2
        reg = config.alpha * float(traj.final[4])
        return reg + data_term, reg

    def energy_fn(params):
        return energy_from_traj(forward(params))[0]

    def regularity_fn(params):
        return energy_from_traj(forward(params))[1]

    def eg_fn(params):
        traj = forward(params)
        energy, _ = energy_from_traj(traj)
        x4_left = {u: traj.before(u)[3] for u in unit_controls}
        jerk_grads: dict[float, np.ndarray] = {}

        jumps = []
        for u, idxs in groups.items():
            jumps.append((u, _make_measurement_jump(idxs, point_mats, inv_sigma2,
                                                    lam_index=4)))
        for uc in unit_controls:
            jumps.append((uc, _make_control_backjump(uc, x4_left[uc], jerk_grads)))
        jumps.sort(key=lambda ev: ev[0])

        x1e, x2e, x3e, x4e = traj.final[:4]
        lam0 = [np.zeros_like(x1e) for _ in range(4)]
        system = StateSystem(
            ("x1", "x2", "x3", "x4", "l1", "l2", "l3", "l4"),
            [x1e, x2e, x3e, x4e, *lam0],
            lambda r, s: _cs_backward_dynamics(r, s, config.alpha),
            jumps,
        )
        back = integrate(system, span_end, 0.0, bwd_cfg)
        x1, x2, x3, x4, l1, l2, l3, l4 = back.final
        grads = [
            -_project_matrix(x1, l1) + x2 @ (l2.T @ x1) + x3 @ (l3.T @ x1),
            -_project_matrix(x1, l2),
            -_project_matrix(x1, l3),
            -l4,
        ]
        grads += [jerk_grads[uc] for uc in unit_controls]
        return energy, grads

    return energy_fn, eg_fn, regularity_fn


def cs_energy_and_gradients(data: Dataset, config: FitConfig, control_points, params):
    """Energy and adjoint gradients for all spline parameter blocks (raw
    matrices); ``control_points`` in original index units."""
    span_end = float(np.max(data.unit_rs))
    unit_controls = _normalize_controls(data, control_points, span_end)
    _, eg_fn, _ = _cs_problem(data, config, unit_controls)
    return eg_fn([np.asarray(p, dtype=float) for p in params])


def _cs_block_scales(span_end: float, unit_controls) -> np.ndarray:
    """L2 norms of the per-block response basis {1, u, u^2/2, u^3/6,
    (u-uc)_+^3/6} over the fitting span; used as a diagonal preconditioner so
    all parameter blocks act on the trajectory at comparable magnitude."""
    L = span_end
    scales = [
        1.0,
        np.sqrt(L**3 / 3.0),
        np.sqrt(L**5 / 20.0),
        np.sqrt(L**7 / 252.0),
    ]
    scales += [np.sqrt((L - uc) ** 7 / 252.0) for uc in unit_controls]
    return np.maximum(np.asarray(scales), 1e-3)


def fit_cs_ggr(
    data: Dataset,
    config: FitConfig | None = None,
    control_points=(),
    initial=None,
) -> tuple[SplineModel, FitReport]:
    """Fit a cubic spline by shooting the four-state system per interval.

    The first three states stay continuous at control points while the jerk
    is reset to a per-interval parameter; the backward sweep restarts its
    fourth adjoint at zero in every interval, and the accumulated value at
    each control point is that jerk parameter's gradient.  Descent runs on
    block-rescaled parameters (the raw blocks act on the trajectory through
    basis functions whose sizes differ by orders of magnitude)."""
    config = config or FitConfig()
    _require_distinct(data)
    if data.count < 4:
        raise InvalidArgumentError("cubic-spline fitting needs at least four samples")
    span_end = float(np.max(data.unit_rs))
    unit_controls = _normalize_controls(data, control_points, span_end)
    n_controls = len(unit_controls)
    energy_fn, eg_fn, regularity_fn = _cs_problem(data, config, unit_controls)

    zero = np.zeros((data.n, data.p))
    if initial is None:
        params0 = [data.points[0].matrix.copy()] + [zero.copy() for _ in range(3 + n_controls)]
    elif isinstance(initial, GeodesicModel):
        params0 = [
            initial.start.matrix.copy(),
            initial.velocity.matrix.copy(),
        ] + [zero.copy() for _ in range(2 + n_controls)]
    else:
        params0 = (
            [
                initial.start.matrix.copy(),
                initial.velocity.matrix.copy(),
                initial.acceleration.matrix.copy(),
                np.array(initial.jerk, dtype=float),
            ]
            + [np.array(v, dtype=float) for v in initial.jerk_values]
        )

    scales = _cs_block_scales(span_end, unit_controls)

    def to_physical(scaled):
        return [q / c for q, c in zip(scaled, scales)]

    def energy_scaled(scaled):
        return energy_fn(to_physical(scaled))

    def eg_scaled(scaled):
        energy, grads = eg_fn(to_physical(scaled))
        return energy, [g / c for g, c in zip(grads, scales)]

    def apply_step(scaled, step, grads):
        x1 = _retract_matrix(scaled[0] - step * grads[0])
        out = [x1,
               _project_matrix(x1, scaled[1] - step * grads[1]),
               _project_matrix(x1, scaled[2] - step * grads[2])]
        out += [q - step * g for q, g in zip(scaled[3:], grads[3:])]
        return out

    res = descend(
        energy_scaled,
        eg_scaled,
        apply_step,
        [p * c for p, c in zip(params0, scales)],
        max_iters=config.max_iters,
        tol_grad=config.tol_grad,
        tol_rel_energy=config.tol_rel_energy,
        rel_patience=config.rel_patience,
        ls_init_step=config.ls_init_step,
        ls_contraction=config.ls_contraction,
        ls_sufficient_decrease=config.ls_sufficient_decrease,
        ls_max_backtracks=config.ls_max_backtracks,
    )

    final = to_physical(res.params)
    start = GrassmannPoint(final[0])
    model = SplineModel(
        start=start,
        velocity=TangentVector(_project_matrix(final[0], final[1]), start),
        acceleration=TangentVector(_project_matrix(final[0], final[2]), start),
        jerk=final[3],
        control_points=unit_controls,
        jerk_values=tuple(final[4 + c] for c in range(n_controls)),
        index_map=data.index_map,
    )
    report = _build_report(data, model, res, config, regularity=regularity_fn(final))
    return model, report


def _make_control_backjump(uc, x4_left, jerk_grads):
    def jump(r, state):
        out = list(state)
        jerk_grads[uc] = -np.array(out[7])
        out[7] = np.zeros_like(out[7])
        out[3] = x4_left.copy()
        return out

    return jump


def _cs_backward_dynamics(r, state, alpha):
    x1, x2, x3, x4, l1, l2, l3, l4 = state
    g22 = x2.T @ x2
    x1t_x4 = x1.T @ x4
    x2t_x3 = x2.T @ x3
    cross = x1t_x4.T - x2t_x3.T
    d1 = x2
    d2 = x3 - x1 @ g22
    d3 = -x4 + x1 @ (x1t_x4 - x2t_x3)
    d4 = x3 @ g22 + x2 @ cross
    a = l3.T @ x1 + x2.T @ l4   # its transpose is x1^T l3 + l4^T x2
    e1 = l2.T @ x1
    e2 = l4.T @ x3
    dl1 = l2 @ g22 - l3 @ cross - x4 @ a
    dl2 = -l1 + x2 @ (e1 + e1.T - e2 - e2.T) + x3 @ a + l4 @ (x2t_x3 - x1t_x4)
    dl3 = -l2 - l4 @ g22 + x2 @ a.T + 2.0 * alpha * x3
    dl4 = l3 - x1 @ a.T
    return [d1, d2, d3, d4, dl1, dl2, dl3, dl4]


# ---------------------------------------------------------------------------
# piecewise geodesic regression


def fit_piecewise_std_ggr(
    data: Dataset,
    config: FitConfig | None = None,
    breakpoints=(),
) -> tuple[PiecewiseGeodesicModel, FitReport]:
    """Independent geodesic fit on every interval the breakpoints induce.

    Breakpoints outside the data span do not cut anything; a sample sitting
    exactly on a breakpoint belongs to the interval on its left."""
    config = config or FitConfig()
    lo, hi = float(np.min(data.rs)), float(np.max(data.rs))
    cuts = tuple(sorted(b for b in breakpoints if lo < b < hi))
    assignment = np.searchsorted(np.asarray(cuts), data.rs, side="left")

    segments = []
    reports = []
    for seg in range(len(cuts) + 1):
        idx = np.nonzero(assignment == seg)[0]
        if len(idx) < 2:
            raise InvalidArgumentError(
                f"interval {seg} induced by the breakpoints holds {len(idx)} samples; need >= 2"
            )
        sub = data.subset(idx)
        model, report = fit_std_ggr(sub, config)
        segments.append(model)
        reports.append(report)

    model = PiecewiseGeodesicModel(cuts=cuts, segments=tuple(segments),
                                   index_map=data.index_map)
    r2 = float("nan")
    if config.compute_r_squared:
        from .evaluation import r_squared

        try:
            r2 = r_squared(data, model)
        except Exception:
            r2 = float("nan")
    report = FitReport(
        energy=sum(r.energy for r in reports),
        data_term=sum(r.data_term for r in reports),
        regularity_term=sum(r.regularity_term for r in reports),
        r_squared=r2,
        iterations=sum(r.iterations for r in reports),
        converged=all(r.converged for r in reports),
        energy_trace=[],
        diagnostics={"segment_energies": [r.energy for r in reports]},
    )
    return model, report
