"""Fixed-step RK4 integration of matrix-valued state systems with scheduled jumps.

A :class:`StateSystem` bundles an initial state (an ordered list of named
arrays), a deterministic right-hand side, and a schedule of discontinuities.
Jumps are applied exactly at their location: the base step grid is split at
every event and at every requested sample point, so no discontinuity ever
lands inside a step.  Backward integration traverses the same machinery with
a negative step and applies coinciding jumps in reverse schedule order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .exceptions import IntegrationError, InvalidArgumentError

State = list  # list of np.ndarray, one per named component
RhsFn = Callable[[float, Sequence[np.ndarray]], State]
JumpFn = Callable[[float, Sequence[np.ndarray]], State]


@dataclass(frozen=True)
class IntegrationConfig:
    """Step density and traversal direction for :func:`integrate`."""

    steps_per_unit: int = 100
    direction: str = "forward"  # "forward" | "backward"

    def __post_init__(self):
        if self.steps_per_unit < 1:
            raise InvalidArgumentError("steps_per_unit must be a positive integer")
        if self.direction not in ("forward", "backward"):
            raise InvalidArgumentError(f"unknown direction {self.direction!r}")


@dataclass
class StateSystem:
    """Initial state, dynamics and jump schedule of one integration problem.

    ``jumps`` is a list of ``(location, fn)`` pairs sorted by location; each
    ``fn(r, state)`` returns the post-jump state.
    """

    names: tuple
    state: State
    rhs: RhsFn
    jumps: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.names) != len(self.state):
            raise InvalidArgumentError("one name per state component required")
        locs = [r for r, _ in self.jumps]
        if locs != sorted(locs):
            raise InvalidArgumentError("jump schedule must be sorted by location")


class Trajectory:
    """States recorded at events and requested sample points, in traversal order.

    At a jump location both sides are kept: :meth:`before` returns the state on
    arrival, :meth:`at` the state after all jumps there were applied.
    """

    def __init__(self):
        self.rs: list[float] = []
        self.states: list[State] = []
        self._first: dict[float, int] = {}
        self._last: dict[float, int] = {}

    def _append(self, r: float, state: State):
        self.rs.append(r)
        self.states.append([np.copy(a) for a in state])
        idx = len(self.rs) - 1
        self._first.setdefault(r, idx)
        self._last[r] = idx

    def at(self, r: float) -> State:
        if r not in self._last:
            raise InvalidArgumentError(f"no recorded state at r={r!r}")
        return self.states[self._last[r]]

    def before(self, r: float) -> State:
        if r not in self._first:
            raise InvalidArgumentError(f"no recorded state at r={r!r}")
        return self.states[self._first[r]]

    @property
    def initial(self) -> State:
        return self.states[0]

    @property
    def final(self) -> State:
        return self.states[-1]


def _rk4_step(rhs: RhsFn, r: float, state: State, h: float) -> State:
    k1 = rhs(r, state)
    k2 = rhs(r + 0.5 * h, [y + 0.5 * h * k for y, k in zip(state, k1)])
    k3 = rhs(r + 0.5 * h, [y + 0.5 * h * k for y, k in zip(state, k2)])
    k4 = rhs(r + h, [y + h * k for y, k in zip(state, k3)])
    sixth = h / 6.0
    return [
        y + sixth * (a + 2.0 * (b + c) + d)
        for y, a, b, c, d in zip(state, k1, k2, k3, k4)
    ]


def _finite(state: State) -> bool:
    return all(np.all(np.isfinite(a)) for a in state)


def _breakpoints(r_start, r_end, steps_per_unit, specials, descending):
    span = abs(r_end - r_start)
    n_base = max(1, int(round(span * steps_per_unit)))
    grid = np.linspace(r_start, r_end, n_base + 1)
    if specials:
        sp = np.asarray(sorted(specials))
        tol = 1e-12 * max(1.0, abs(r_start), abs(r_end))
        keep = np.min(np.abs(grid[:, None] - sp[None, :]), axis=1) > tol
        pts = np.concatenate([grid[keep], sp])
    else:
        pts = grid
    pts = np.sort(pts)
    if descending:
        pts = pts[::-1]
    return list(pts)


def integrate(
    system: StateSystem,
    r_start: float,
    r_end: float,
    config: IntegrationConfig,
    sample_points: Sequence[float] = (),
) -> Trajectory:
    """Integrate ``system`` from ``r_start`` to ``r_end`` with RK4.

    The trajectory records the state at ``r_start``, ``r_end``, every jump
    location (both sides) and every entry of ``sample_points``.
    """
    lo, hi = min(r_start, r_end), max(r_start, r_end)
    tol = 1e-12 * max(1.0, abs(lo), abs(hi))
    for r_e, _ in system.jumps:
        if not (lo - tol <= r_e <= hi + tol):
            raise InvalidArgumentError(f"jump at r={r_e} lies outside [{lo}, {hi}]")
    for s in sample_points:
        if not (lo - tol <= s <= hi + tol):
            raise InvalidArgumentError(f"sample point r={s} lies outside [{lo}, {hi}]")

    descending = r_end < r_start
    if r_end != r_start:
        expected = "backward" if descending else "forward"
        if config.direction != expected:
            raise InvalidArgumentError(
                f"span runs {expected} but config.direction={config.direction!r}"
            )

    events: dict[float, list[JumpFn]] = {}
    for r_e, fn in system.jumps:
        events.setdefault(r_e, []).append(fn)

    traj = Trajectory()
    state = [np.array(a, dtype=float) for a in system.state]
    traj._append(r_start, state)

    def fire(r, state):
        fns = events[r]
        for fn in reversed(fns) if descending else fns:
            state = fn(r, state)
        if not _finite(state):
            raise IntegrationError(f"non-finite state after jump at r={r}")
        return state

    if r_start in events:
        state = fire(r_start, state)
        traj._append(r_start, state)

    if r_end == r_start:
        return traj

    specials = set(events) | set(sample_points) | {r_end}
    specials.discard(r_start)
    pts = _breakpoints(r_start, r_end, config.steps_per_unit, specials, descending)
    record = set(events) | set(sample_points) | {r_end}

    r_prev = r_start
    for r_next in pts:
        if r_next == r_prev:
            continue
        h = r_next - r_prev
        if h == 0.0:
            raise IntegrationError("step size underflow while splitting at events")
        state = _rk4_step(system.rhs, r_prev, state, h)
        r_prev = r_next
        if r_next in record:
            if not _finite(state):
                raise IntegrationError(f"state diverged near r={r_next}")
            traj._append(r_next, state)
            if r_next in events:
                state = fire(r_next, state)
                traj._append(r_next, state)
    if not _finite(state):
        raise IntegrationError("state diverged at the end of the span")
    return traj
