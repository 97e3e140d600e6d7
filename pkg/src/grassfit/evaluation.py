"""Model-quality metrics and protocols: Karcher mean, R^2, mean square
distance, index prediction by curve search, and a cross-validation harness.

Curves are anything with a ``sample(rs)`` method returning Grassmann points;
the harness takes the fitter and the predictor as plain callables, so any of
the regression families (or a user-supplied model) plugs in unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    ConvergenceError,
    InvalidArgumentError,
    ZeroVarianceError,
)
from .grassmann import (
    GrassmannPoint,
    _distance_matrix,
    _exp_matrix,
    _log_matrix,
    geodesic_distance,
)


@dataclass(frozen=True)
class KarcherConfig:
    max_iters: int = 500
    tol: float = 1e-9     # on the norm of the mean log
    step: float = 1.0

    def __post_init__(self):
        if self.tol <= 0:
            raise InvalidArgumentError("tolerance must be positive")


def karcher_mean(points, config: KarcherConfig | None = None) -> GrassmannPoint:
    """Fixed-point iteration for the point minimizing summed squared distances.

    Converged when the mean of the logs toward the data is below tolerance,
    i.e. the returned point is first-order stationary."""
    config = config or KarcherConfig()
    points = list(points)
    if not points:
        raise InvalidArgumentError("cannot average an empty set of points")
    if len(points) == 1:
        return points[0]
    mu = points[0].matrix
    for _ in range(config.max_iters):
        mean_log = np.zeros_like(mu)
        for pt in points:
            mean_log += _log_matrix(mu, pt.matrix)
        mean_log /= len(points)
        if np.linalg.norm(mean_log) < config.tol:
            return GrassmannPoint(mu)
        mu = _exp_matrix(mu, config.step * mean_log)
    raise ConvergenceError(
        f"Karcher mean did not reach tol={config.tol} in {config.max_iters} iterations",
        last_iterate=GrassmannPoint(mu),
    )


def r_squared(data, curve, karcher_config: KarcherConfig | None = None) -> float:
    """1 - (residual squared distance along the curve) / (variance about the
    Karcher mean); 1 for an interpolating curve, 0 for the constant mean."""
    points = list(data.points)
    mu = karcher_mean(points, karcher_config)
    total = sum(_distance_matrix(mu.matrix, pt.matrix) ** 2 for pt in points)
    if total == 0.0:
        raise ZeroVarianceError("all data points coincide; R^2 is undefined")
    fitted = curve.sample(data.rs)
    residual = sum(
        _distance_matrix(est.matrix, pt.matrix) ** 2 for est, pt in zip(fitted, points)
    )
    return 1.0 - residual / total


def mean_square_distance(curve_a, curve_b_or_data, rs=None) -> float:
    """Mean squared geodesic distance between two curves on a common grid, or
    between a curve and a dataset at the data's own indices."""
    if hasattr(curve_b_or_data, "points"):
        data = curve_b_or_data
        grid = data.rs if rs is None else np.asarray(rs, dtype=float)
        if rs is not None and len(grid) != len(data.points):
            raise InvalidArgumentError("sample grid does not match the dataset")
        side_a = curve_a.sample(grid)
        side_b = list(data.points)
    else:
        if rs is None:
            raise InvalidArgumentError("comparing two curves requires a sample grid")
        grid = np.asarray(rs, dtype=float)
        side_a = curve_a.sample(grid)
        side_b = curve_b_or_data.sample(grid)
    sq = [
        _distance_matrix(a.matrix, b.matrix) ** 2 for a, b in zip(side_a, side_b)
    ]
    return float(np.mean(sq))


@dataclass(frozen=True)
class PredictionConfig:
    step: float = 0.05               # in normalized index units
    search_range: tuple | None = None  # original units; defaults to the model span

    def __post_init__(self):
        if self.step <= 0:
            raise InvalidArgumentError("search step must be positive")


def _search_grid(curve, config: PredictionConfig) -> np.ndarray:
    if config.search_range is not None:
        lo, hi = config.search_range
    else:
        m = curve.index_map
        lo, hi = m.from_unit(0.0), m.from_unit(1.0)
    if hi <= lo:
        raise InvalidArgumentError("empty search range")
    unit_span = float(curve.index_map.to_unit(hi) - curve.index_map.to_unit(lo))
    n = int(round(unit_span / config.step))
    if n < 1:
        raise InvalidArgumentError("search step larger than the search range")
    return np.linspace(lo, hi, n + 1)


def curve_search(curve, query: GrassmannPoint, config: PredictionConfig | None = None):
    """Grid search along the curve: returns (best index, distances, ambiguous).

    ``ambiguous`` flags several grid minima within 1e-9 of each other, which a
    non-monotonic curve can produce; ties resolve to the smallest index."""
    config = config or PredictionConfig()
    grid = _search_grid(curve, config)
    pts = curve.sample(grid)
    dists = np.array([geodesic_distance(pt, query) for pt in pts])
    best = int(np.argmin(dists))
    ambiguous = int(np.sum(dists <= dists[best] + 1e-9)) > 1
    return float(grid[best]), dists, ambiguous


def predict_independent(
    curve, query: GrassmannPoint, config: PredictionConfig | None = None
) -> float:
    """Index of the curve point nearest to the query, from a step-size grid."""
    best, _, _ = curve_search(curve, query, config)
    return best


def predict_nn_baseline(training, query: GrassmannPoint) -> float:
    """Index of the nearest training point; ties resolve to the smallest index."""
    dists = [geodesic_distance(pt, query) for pt in training.points]
    return float(training.rs[int(np.argmin(dists))])


@dataclass(frozen=True)
class CVPlan:
    """Assignment of every sample to exactly one fold."""

    fold_of: np.ndarray
    mode: str = "k-fold"

    def __post_init__(self):
        folds = np.asarray(self.fold_of, dtype=int)
        if folds.ndim != 1 or len(folds) == 0:
            raise InvalidArgumentError("fold assignment must be a 1-d index array")
        ids = np.unique(folds)
        if ids[0] != 0 or ids[-1] != len(ids) - 1:
            raise InvalidArgumentError("fold ids must be 0..k-1 with every fold used")
        object.__setattr__(self, "fold_of", folds)

    @property
    def fold_count(self) -> int:
        return int(np.max(self.fold_of)) + 1

    @classmethod
    def k_fold(cls, count: int, k: int, seed=None) -> "CVPlan":
        if not (1 <= k <= count):
            raise InvalidArgumentError("fold count must be between 1 and the sample count")
        folds = np.arange(count) % k
        if seed is not None:
            folds = np.random.default_rng(seed).permutation(folds)
        return cls(fold_of=folds, mode="k-fold")

    @classmethod
    def leave_one_out(cls, count: int) -> "CVPlan":
        return cls(fold_of=np.arange(count), mode="leave-one-subject-out")

    @classmethod
    def from_groups(cls, labels) -> "CVPlan":
        labels = list(labels)
        ids = {lab: i for i, lab in enumerate(dict.fromkeys(labels))}
        return cls(
            fold_of=np.array([ids[lab] for lab in labels], dtype=int),
            mode="leave-one-subject-out",
        )


@dataclass
class FoldResult:
    fold: int
    train_mae: float
    test_mae: float
    test_msd: float
    energy: float


@dataclass
class CVResult:
    folds: list = field(default_factory=list)
    train_mae: tuple = (np.nan, np.nan)    # (mean, std) across folds
    test_mae: tuple = (np.nan, np.nan)
    mean_energy: float = np.nan
    predictions: list = field(default_factory=list)  # (sample index, prediction)


def run_cv(data, plan: CVPlan, fitter, predictor) -> CVResult:
    """Per-fold fit/predict protocol.

    ``fitter(dataset) -> (model, report)``;
    ``predictor(model, train_dataset, query_point) -> float``.
    A single-fold plan degenerates to train = test = all samples."""
    if len(plan.fold_of) != data.count:
        raise InvalidArgumentError("plan does not cover the dataset")
    result = CVResult()
    degenerate = plan.fold_count == 1
    for fold in range(plan.fold_count):
        test_idx = np.nonzero(plan.fold_of == fold)[0]
        train_idx = (
            np.arange(data.count)
            if degenerate
            else np.nonzero(plan.fold_of != fold)[0]
        )
        if len(train_idx) < 2:
            raise InvalidArgumentError(
                f"fold {fold} leaves {len(train_idx)} training samples; need >= 2"
            )
        train = data.subset(train_idx)
        model, report = fitter(train)
        train_pred = [predictor(model, train, data.points[i]) for i in train_idx]
        test_pred = [predictor(model, train, data.points[i]) for i in test_idx]
        result.predictions.extend(
            (int(i), float(p)) for i, p in zip(test_idx, test_pred)
        )
        train_mae = float(np.mean(np.abs(np.array(train_pred) - data.rs[train_idx])))
        test_mae = float(np.mean(np.abs(np.array(test_pred) - data.rs[test_idx])))
        test_msd = float(
            np.mean(
                [
                    _distance_matrix(
                        model.sample([data.rs[i]])[0].matrix, data.points[i].matrix
                    )
                    ** 2
                    for i in test_idx
                ]
            )
        )
        result.folds.append(
            FoldResult(fold, train_mae, test_mae, test_msd, report.energy)
        )
    tr = np.array([f.train_mae for f in result.folds])
    te = np.array([f.test_mae for f in result.folds])
    result.train_mae = (float(np.mean(tr)), float(np.std(tr)))
    result.test_mae = (float(np.mean(te)), float(np.std(te)))
    result.mean_energy = float(np.mean([f.energy for f in result.folds]))
    return result


def make_curve_predictor(config: PredictionConfig | None = None):
    """Predictor that searches along the fitted curve."""

    def predict(model, train, query):
        return predict_independent(model, query, config)

    return predict


def make_nn_predictor():
    """Predictor that ignores the model and scans the training set."""

    def predict(model, train, query):
        return predict_nn_baseline(train, query)

    return predict
