"""Synthetic sine/cosine subspace data and the denoising-experiment protocol.

Each sample is a two-row sine/cosine signal of controlled frequency, embedded
into a higher-dimensional observation space through one shared random
orthonormal basis, corrupted with white Gaussian noise, identified as a
two-state linear dynamical system, and finally mapped to the span of its
observability matrix.  The sample's scalar index drives the frequency either
directly, through a generalized logistic law, or through a sine law.
Perturbation shoots every point a fixed geodesic distance along a random
tangent direction, which is the noise model of the denoising protocol.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidArgumentError
from .grassmann import GrassmannPoint, _exp_matrix, random_tangent
from .regression import Dataset
from .representations import FrameSequence, identify_lds, lds_to_grassmann
from .warps import TimeWarp, warp_eval


@dataclass(frozen=True)
class SynthConfig:
    num_points: int = 25
    freq_law: str = "std"           # "std" | "logistic" | "sine"
    embed_dim: int = 24
    samples_per_signal: int = 630
    domain: tuple = (0.0, 10.0 * np.pi)
    index_range: tuple = (0.0, 10.0)
    noise_sigma: float = 0.1
    lds_states: int = 2
    seed: int = 0
    freq_range: tuple = (0.5, 10.0)  # frequencies the logistic/sine laws stay inside
    logistic_growth: float = 0.8
    logistic_peak: float = 5.0
    sine_rate: float = 0.45

    def __post_init__(self):
        if self.num_points < 1 or self.embed_dim < 2 or self.samples_per_signal < 4:
            raise InvalidArgumentError("counts must be positive and large enough")
        if self.noise_sigma < 0:
            raise InvalidArgumentError("noise level must be nonnegative")
        if self.freq_law not in ("std", "logistic", "sine"):
            raise InvalidArgumentError(f"unknown frequency law {self.freq_law!r}")


@dataclass(frozen=True)
class PerturbConfig:
    shoot_time: float = 0.03
    seed: int = 0

    def __post_init__(self):
        if self.shoot_time < 0:
            raise InvalidArgumentError("shoot time must be nonnegative")


def frequency_law(cfg: SynthConfig, rs: np.ndarray) -> np.ndarray:
    """Map index values to signal frequencies under the configured law."""
    rs = np.asarray(rs, dtype=float)
    lo, hi = cfg.freq_range
    if cfg.freq_law == "std":
        return rs.copy()
    if cfg.freq_law == "logistic":
        warp = TimeWarp(growth_rate=cfg.logistic_growth, peak_time=cfg.logistic_peak)
        return lo + (hi - lo) * np.asarray(warp_eval(warp, rs))
    mid, amp = (lo + hi) / 2.0, (hi - lo) / 2.0 * 0.95
    return mid + amp * np.sin(cfg.sine_rate * rs)


def generate_dataset(
    cfg: SynthConfig, rs=None
) -> tuple[Dataset, np.ndarray]:
    """Dataset of subspace points plus the generating frequencies.

    Index values are drawn uniformly over ``index_range`` (sorted) unless
    given explicitly; the embedding basis is shared across the whole dataset
    so every sample lives in a common observation subspace."""
    rng = np.random.default_rng(cfg.seed)
    if rs is None:
        rs = np.sort(rng.uniform(cfg.index_range[0], cfg.index_range[1], cfg.num_points))
    else:
        rs = np.asarray(rs, dtype=float)
        if np.any(np.diff(rs) < 0):
            raise InvalidArgumentError("explicit index values must be nondecreasing")
    freqs = frequency_law(cfg, rs)

    w = rng.standard_normal((cfg.embed_dim, 2))
    basis, _, _ = np.linalg.svd(w, full_matrices=False)   # shared embedding
    ts = np.linspace(cfg.domain[0], cfg.domain[1], cfg.samples_per_signal)

    points = []
    for freq in freqs:
        signal = np.vstack([np.sin(freq * ts), np.cos(freq * ts)])
        observed = basis @ signal
        if cfg.noise_sigma > 0:
            observed = observed + cfg.noise_sigma * rng.standard_normal(observed.shape)
        model = identify_lds(FrameSequence(observed), cfg.lds_states)
        points.append(lds_to_grassmann(model))
    return Dataset.from_points(rs, points), freqs


def perturb_along_manifold(data: Dataset, cfg: PerturbConfig) -> Dataset:
    """Shoot every point a geodesic distance ``shoot_time`` along a random
    unit tangent direction."""
    rng = np.random.default_rng(cfg.seed)
    if cfg.shoot_time == 0.0:
        return data
    moved = []
    for pt in data.points:
        direction = random_tangent(pt, rng, norm=1.0)
        moved.append(
            GrassmannPoint(_exp_matrix(pt.matrix, cfg.shoot_time * direction.matrix))
        )
    return Dataset(rs=data.rs.copy(), points=tuple(moved), index_map=data.index_map)
