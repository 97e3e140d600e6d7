"""Riemannian primitives of the Grassmann manifold G(p, n).

A point of G(p, n) is a p-dimensional linear subspace of R^n, held here as an
orthonormal n-by-p representer matrix.  Representers are not unique (right
multiplication by any p-by-p orthogonal matrix spans the same subspace), so
point equality is always judged through :func:`geodesic_distance`, never by
matrix comparison.  Tangent vectors at span(Y) are n-by-p matrices D with
Y^T D = 0 and carry the metric tr(D1^T D2), under which the squared geodesic
distance between two subspaces is the squared 2-norm of their principal
angles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import CutLocusError, DegenerateDataError, InvalidArgumentError
from .integrators import IntegrationConfig, StateSystem, Trajectory, integrate

TOL_ORTH = 1e-10  # orthonormality / horizontality drift tolerance
TOL_CUT = 1e-6    # margin below pi/2 at which the log map is refused


def _as_matrix(value, name):
    m = np.asarray(value, dtype=float)
    if m.ndim != 2:
        raise InvalidArgumentError(f"{name} must be a 2-d matrix, got shape {m.shape}")
    return m


@dataclass(frozen=True)
class GrassmannPoint:
    """Orthonormal n-by-p representer of a p-dimensional subspace of R^n."""

    matrix: np.ndarray

    def __post_init__(self):
        m = _as_matrix(self.matrix, "representer")
        n, p = m.shape
        if not 0 < p < n:
            raise InvalidArgumentError(f"need 0 < p < n, got shape {m.shape}")
        gram_err = np.linalg.norm(m.T @ m - np.eye(p))
        if gram_err > TOL_ORTH:
            raise InvalidArgumentError(
                f"representer columns are not orthonormal (|Y^T Y - I| = {gram_err:.2e}); "
                "use retract() to orthonormalize"
            )
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def p(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class TangentVector:
    """Horizontal tangent matrix at a base point: base.Y^T @ matrix == 0."""

    matrix: np.ndarray
    base: GrassmannPoint

    def __post_init__(self):
        m = _as_matrix(self.matrix, "tangent matrix")
        if m.shape != self.base.matrix.shape:
            raise InvalidArgumentError(
                f"tangent shape {m.shape} does not match base shape {self.base.matrix.shape}"
            )
        drift = np.linalg.norm(self.base.matrix.T @ m)
        if drift > TOL_ORTH * max(1.0, np.linalg.norm(m)):
            raise InvalidArgumentError(
                f"tangent is not horizontal at its base (|Y^T D| = {drift:.2e})"
            )
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix))


def _check_same_shape(a: GrassmannPoint, b: GrassmannPoint):
    if a.matrix.shape != b.matrix.shape:
        raise InvalidArgumentError(
            f"points live on different manifolds: {a.matrix.shape} vs {b.matrix.shape}"
        )


def canonical_inner(d1: TangentVector, d2: TangentVector) -> float:
    """Metric tr(D1^T D2) of two tangent vectors sharing the same base representer."""
    if d1.base is not d2.base and not (
        d1.base.matrix.shape == d2.base.matrix.shape
        and np.allclose(d1.base.matrix, d2.base.matrix, atol=TOL_ORTH, rtol=0.0)
    ):
        raise InvalidArgumentError("tangent vectors do not share a base point")
    return float(np.sum(d1.matrix * d2.matrix))


def principal_angles(y: GrassmannPoint, z: GrassmannPoint) -> np.ndarray:
    """Principal angles between two subspaces, each in [0, pi/2], ascending.

    Small angles come from the singular values of (I - Y Y^T) Z, which carry
    full precision where arccos of a near-unit cosine does not; large angles
    use the cosine route.
    """
    _check_same_shape(y, z)
    return _principal_angles_matrix(y.matrix, z.matrix)


def _principal_angles_matrix(ym: np.ndarray, zm: np.ndarray) -> np.ndarray:
    m = ym.T @ zm
    cosines = np.clip(np.linalg.svd(m, compute_uv=False), 0.0, 1.0)  # descending
    residual = zm - ym @ m
    sines = np.clip(np.linalg.svd(residual, compute_uv=False), 0.0, 1.0)
    sines = np.sort(sines)  # ascending, pairs with descending cosines
    return np.where(cosines**2 > 0.5, np.arcsin(sines), np.arccos(cosines))


def geodesic_distance(y: GrassmannPoint, z: GrassmannPoint) -> float:
    """Arc length of the connecting geodesic: 2-norm of the principal angles."""
    return float(np.linalg.norm(principal_angles(y, z)))


def _distance_matrix(ym: np.ndarray, zm: np.ndarray) -> float:
    return float(np.linalg.norm(_principal_angles_matrix(ym, zm)))


def project_horizontal(y: GrassmannPoint, c) -> TangentVector:
    """Project an arbitrary n-by-p matrix onto the horizontal space at Y."""
    cm = _as_matrix(c, "matrix")
    if cm.shape != y.matrix.shape:
        raise InvalidArgumentError(
            f"matrix shape {cm.shape} does not match point shape {y.matrix.shape}"
        )
    return TangentVector(_project_matrix(y.matrix, cm), y)


def _project_matrix(ym: np.ndarray, cm: np.ndarray) -> np.ndarray:
    return cm - ym @ (ym.T @ cm)


def retract(y_raw) -> GrassmannPoint:
    """Thin-QR orthonormalization of a full-column-rank matrix; span preserved.

    The R factor's diagonal sign is normalized to be positive so the result is
    deterministic and reduces to the identity on already-orthonormal input.
    """
    m = _as_matrix(y_raw, "matrix")
    return GrassmannPoint(_retract_matrix(m))


def _retract_matrix(m: np.ndarray) -> np.ndarray:
    q, r = np.linalg.qr(m)
    diag = np.diagonal(r)
    scale = np.max(np.abs(diag)) if diag.size else 0.0
    if scale == 0.0 or np.min(np.abs(diag)) <= 1e-13 * scale:
        raise DegenerateDataError("matrix is rank deficient; no subspace to retract onto")
    signs = np.where(diag < 0.0, -1.0, 1.0)
    return q * signs


def exp_map_closed(y: GrassmannPoint, delta: TangentVector) -> GrassmannPoint:
    """Endpoint at unit time of the geodesic leaving Y with velocity ``delta``."""
    if delta.base is not y and not np.array_equal(delta.base.matrix, y.matrix):
        raise InvalidArgumentError("tangent vector is not based at the given point")
    return GrassmannPoint(_exp_matrix(y.matrix, delta.matrix))


def _exp_matrix(ym: np.ndarray, dm: np.ndarray) -> np.ndarray:
    if not np.any(dm):
        return ym.copy()
    u, s, vt = np.linalg.svd(dm, full_matrices=False)
    v = vt.T
    out = ym @ (v * np.cos(s)) @ vt + (u * np.sin(s)) @ vt
    return _retract_matrix(out)


def _exp_matrix_with_velocity(ym, dm, t):
    """Point and velocity of the geodesic r -> exp(Y, r*D) at r = t."""
    u, s, vt = np.linalg.svd(dm, full_matrices=False)
    v = vt.T
    st = s * t
    point = ym @ (v * np.cos(st)) @ vt + (u * np.sin(st)) @ vt
    vel = ym @ (v * (-s * np.sin(st))) @ vt + (u * (s * np.cos(st))) @ vt
    return point, vel


def geodesic_dynamics(r, state):
    """First-order geodesic system: X1' = X2, X2' = -X1 (X2^T X2)."""
    x1, x2 = state
    return [x2, -x1 @ (x2.T @ x2)]


def exp_map_ode(
    y: GrassmannPoint,
    delta: TangentVector,
    r: float = 1.0,
    steps_per_unit: int = 100,
) -> tuple[GrassmannPoint, TangentVector]:
    """Geodesic endpoint and velocity at parameter ``r`` by integrating the ODE.

    Cross-checks :func:`exp_map_closed`; the endpoint is re-orthonormalized
    whenever accumulated drift exceeds the representer tolerance.
    """
    if delta.base is not y and not np.array_equal(delta.base.matrix, y.matrix):
        raise InvalidArgumentError("tangent vector is not based at the given point")
    if not np.isfinite(r):
        raise InvalidArgumentError("r must be finite")
    if r == 0.0:
        return y, delta
    system = StateSystem(
        names=("point", "velocity"),
        state=[y.matrix, delta.matrix],
        rhs=geodesic_dynamics,
    )
    direction = "forward" if r > 0 else "backward"
    config = IntegrationConfig(steps_per_unit=steps_per_unit, direction=direction)
    traj = integrate(system, 0.0, r, config)
    x1, x2 = traj.final
    if np.linalg.norm(x1.T @ x1 - np.eye(x1.shape[1])) > TOL_ORTH:
        x1 = _retract_matrix(x1)
    x2 = _project_matrix(x1, x2)
    point = GrassmannPoint(x1)
    return point, TangentVector(x2, point)


def log_map(y: GrassmannPoint, z: GrassmannPoint) -> TangentVector:
    """Initial velocity of the unit-time geodesic from Y to span(Z).

    Raises :class:`CutLocusError` when a principal angle comes within
    ``TOL_CUT`` of pi/2, where the map is not defined (or numerically wild).
    """
    _check_same_shape(y, z)
    return TangentVector(_log_matrix(y.matrix, z.matrix), y)


def _log_matrix(ym: np.ndarray, zm: np.ndarray) -> np.ndarray:
    angles = _principal_angles_matrix(ym, zm)
    if np.max(angles, initial=0.0) >= np.pi / 2.0 - TOL_CUT:
        raise CutLocusError(
            "target subspace is at (or numerically near) the cut locus of the base"
        )
    m = ym.T @ zm
    horizontal = np.linalg.solve(m.T, (zm - ym @ m).T).T
    u, s, vt = np.linalg.svd(horizontal, full_matrices=False)
    return (u * np.arctan(s)) @ vt


def random_point(n: int, p: int, rng: np.random.Generator) -> GrassmannPoint:
    """Uniform-ish random subspace: QR of an i.i.d. Gaussian matrix."""
    return retract(rng.standard_normal((n, p)))


def random_tangent(
    base: GrassmannPoint, rng: np.random.Generator, norm: float | None = None
) -> TangentVector:
    """Random horizontal direction at ``base``; Frobenius-normalized if asked."""
    raw = _project_matrix(base.matrix, rng.standard_normal(base.matrix.shape))
    if norm is not None:
        scale = np.linalg.norm(raw)
        if scale == 0.0:
            raise DegenerateDataError("degenerate random draw produced a zero tangent")
        raw = raw * (norm / scale)
    return TangentVector(raw, base)
