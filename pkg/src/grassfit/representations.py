"""Front ends that turn raw data into Grassmann points.

Landmark shapes map to the span of the left-singular vectors of the centered
landmark matrix, which is invariant to any affine transform of the landmark
coordinates.  Multivariate time series (vectorized video frames) map through
linear-dynamical-system identification to the span of the orthonormalized
observability matrix, which is invariant to state-space similarity
transforms.  An optional per-frame weighting de-emphasizes frames away from
the window center during identification.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateDataError, InvalidArgumentError
from .grassmann import GrassmannPoint, retract


@dataclass(frozen=True)
class LandmarkSet:
    """m landmarks in d spatial dimensions, one landmark per row."""

    coordinates: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coordinates, dtype=float)
        if c.ndim != 2:
            raise InvalidArgumentError("landmarks must form an m-by-d matrix")
        m, d = c.shape
        if m <= d:
            raise InvalidArgumentError("need more landmarks than spatial dimensions")
        object.__setattr__(self, "coordinates", c)


@dataclass(frozen=True)
class LDSModel:
    """Identified linear dynamical system y_k ~ C x_k, x_{k+1} ~ A x_k."""

    transition: np.ndarray   # p x p
    observation: np.ndarray  # n x p, orthonormal columns

    def __post_init__(self):
        a = np.asarray(self.transition, dtype=float)
        c = np.asarray(self.observation, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InvalidArgumentError("transition matrix must be square")
        if c.ndim != 2 or c.shape[1] != a.shape[0]:
            raise InvalidArgumentError("observation matrix must be n x p")
        if np.linalg.matrix_rank(c) < a.shape[0]:
            raise DegenerateDataError("observation matrix must have full column rank")
        object.__setattr__(self, "transition", a)
        object.__setattr__(self, "observation", c)

    @property
    def state_count(self) -> int:
        return self.transition.shape[0]


@dataclass(frozen=True)
class FrameSequence:
    """Vectorized frames as columns; optional positive per-frame weights."""

    frames: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=float)
        if f.ndim != 2:
            raise InvalidArgumentError("frames must form an n-by-tau matrix")
        object.__setattr__(self, "frames", f)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (f.shape[1],):
                raise InvalidArgumentError("one weight per frame required")
            if np.any(w <= 0):
                raise InvalidArgumentError("weights must be positive")
            object.__setattr__(self, "weights", w)


def shape_to_grassmann(landmarks: LandmarkSet) -> tuple[GrassmannPoint, np.ndarray]:
    """Affine-invariant shape representation.

    Centers each coordinate over the landmarks and returns the span of the
    left-singular vectors together with the singular values, which record the
    scale lost by the projection (a shape is recovered as U diag(sigma) up to
    a right orthogonal factor)."""
    coords = landmarks.coordinates
    centered = coords - np.mean(coords, axis=0, keepdims=True)
    u, s, _ = np.linalg.svd(centered, full_matrices=False)
    if s[-1] <= 1e-12 * s[0]:
        raise DegenerateDataError("landmarks are degenerate after centering")
    return GrassmannPoint(u), s


def gaussian_window_weights(count: int, std: float = 100.0) -> np.ndarray:
    """Weights from a Gaussian centered at the window midpoint."""
    if count < 1 or std <= 0:
        raise InvalidArgumentError("need a positive frame count and width")
    k = np.arange(count, dtype=float)
    mid = (count - 1) / 2.0
    return np.exp(-0.5 * ((k - mid) / std) ** 2)


def identify_lds(sequence: FrameSequence, state_count: int) -> LDSModel:
    """Subspace system identification with optional frame weighting.

    The observation matrix is the span of the top left-singular vectors of
    the mean-centered (and sqrt-weight scaled) frame matrix; states are the
    projections of the centered frames; the transition matrix solves the
    one-step least-squares problem with the source frame's weight on each row.
    Uniform weights reproduce the unweighted estimate."""
    frames = sequence.frames
    n, tau = frames.shape
    p = int(state_count)
    if p < 1:
        raise InvalidArgumentError("state count must be positive")
    if tau < p + 1:
        raise InvalidArgumentError(f"need at least {p + 1} frames for {p} states")
    w = sequence.weights if sequence.weights is not None else np.ones(tau)

    mean = frames @ w / np.sum(w)
    centered = frames - mean[:, None]
    u, s, _ = np.linalg.svd(centered * np.sqrt(w)[None, :], full_matrices=False)
    if len(s) < p or s[p - 1] <= 1e-10 * s[0]:
        raise DegenerateDataError(
            f"fewer than {p} significant singular values in the frame matrix"
        )
    c = u[:, :p]
    states = c.T @ centered                       # p x tau
    row_w = np.sqrt(w[:-1])
    lhs = (states[:, :-1] * row_w[None, :]).T     # (tau-1) x p
    rhs = (states[:, 1:] * row_w[None, :]).T
    a, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    return LDSModel(transition=a.T, observation=c)


def lds_to_grassmann(model: LDSModel) -> GrassmannPoint:
    """Span of the orthonormalized observability matrix [C; CA; ...; CA^(p-1)]."""
    c, a = model.observation, model.transition
    p = model.state_count
    blocks = []
    block = c
    for _ in range(p):
        blocks.append(block)
        block = block @ a
    stacked = np.vstack(blocks)
    try:
        return retract(stacked)
    except DegenerateDataError as err:
        raise DegenerateDataError("observability matrix is rank deficient") from err
