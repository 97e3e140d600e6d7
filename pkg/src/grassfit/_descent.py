"""Monotone line-searched gradient descent shared by the shooting fitters.

The driver is agnostic to where parameters live: callers hand in raw arrays,
an energy evaluator, a gradient evaluator, and an ``apply_step`` that knows
how to move feasibly (retraction of the base point, horizontal projection of
velocities).  Each trial step must pass an Armijo sufficient-decrease test,
so the accepted-energy trace is strictly nonincreasing.  The first trial step
of an iteration is seeded with a Barzilai-Borwein estimate from the previous
accepted move, which keeps the iteration count manageable on badly scaled
problems without giving up monotonicity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Params = list  # list of np.ndarray


@dataclass
class DescentResult:
    params: Params
    energy: float
    iterations: int
    converged: bool
    energy_trace: list
    grad_norm: float


def _dot(xs, ys) -> float:
    return float(sum(np.sum(x * y) for x, y in zip(xs, ys)))


def minimize(
    energy_fn,
    energy_and_grads_fn,
    apply_step,
    params0: Params,
    *,
    max_iters: int = 2000,
    tol_grad: float = 1e-8,
    tol_rel_energy: float = 1e-11,
    rel_patience: int = 3,
    ls_init_step: float = 1.0,
    ls_contraction: float = 0.5,
    ls_sufficient_decrease: float = 1e-4,
    ls_max_backtracks: int = 60,
    step_max: float = 1e3,
    step_min: float = 1e-14,
) -> DescentResult:
    params = [np.array(p, dtype=float) for p in params0]
    energy, grads = energy_and_grads_fn(params)
    trace = [energy]
    if not np.isfinite(energy):
        return DescentResult(params, energy, 0, False, trace, float("nan"))

    prev_params = None
    prev_grads = None
    last_step = ls_init_step
    small_streak = 0
    converged = False
    iterations = 0
    grad_norm = float(np.sqrt(_dot(grads, grads)))

    for iterations in range(1, max_iters + 1):
        gnorm_sq = _dot(grads, grads)
        grad_norm = float(np.sqrt(gnorm_sq))
        if not np.isfinite(grad_norm):
            converged = False
            break
        if grad_norm <= tol_grad:
            converged = True
            break

        trial = 2.0 * last_step
        if prev_params is not None:
            dp = [p - q for p, q in zip(params, prev_params)]
            dg = [g - h for g, h in zip(grads, prev_grads)]
            sy = _dot(dp, dg)
            yy = _dot(dg, dg)
            if sy > 0.0 and yy > 0.0:
                trial = sy / yy
        trial = min(max(trial, step_min), step_max)

        accepted = False
        step = trial
        candidate = None
        cand_energy = energy
        for _ in range(ls_max_backtracks):
            candidate = apply_step(params, step, grads)
            cand_energy = energy_fn(candidate)
            if np.isfinite(cand_energy) and (
                cand_energy <= energy - ls_sufficient_decrease * step * gnorm_sq
            ):
                accepted = True
                break
            step *= ls_contraction
            if step < step_min:
                break
        if not accepted:
            break

        prev_params = params
        prev_grads = grads
        params = candidate
        last_step = step
        rel_drop = (energy - cand_energy) / max(abs(energy), 1e-300)
        energy = cand_energy
        trace.append(energy)
        _, grads = energy_and_grads_fn(params)

        if rel_drop < tol_rel_energy:
            small_streak += 1
            if small_streak >= rel_patience:
                converged = True
                break
        else:
            small_streak = 0
    else:
        iterations = max_iters

    grad_norm = float(np.sqrt(_dot(grads, grads)))
    if grad_norm <= tol_grad:
        converged = True
    return DescentResult(params, energy, iterations, converged, trace, grad_norm)
