"""Intrinsic parametric regression on the Grassmann manifold.

Fit geodesics, time-warped geodesics and cubic splines to subspace-valued
data indexed by a scalar, via adjoint shooting; map landmark shapes and
linear-dynamical-system models onto the manifold; and evaluate fits with
intrinsic metrics, prediction protocols and cross-validation.
"""

from .evaluation import (
    CVPlan,
    KarcherConfig,
    PredictionConfig,
    curve_search,
    karcher_mean,
    make_curve_predictor,
    make_nn_predictor,
    mean_square_distance,
    predict_independent,
    predict_nn_baseline,
    r_squared,
    run_cv,
)
from .euclidean import (
    EuclideanDataset,
    EuclideanLineModel,
    EuclideanSplineModel,
    fit_linear_euclid,
    fit_spline_euclid,
    fit_timewarped_euclid,
)
from .exceptions import (
    ConvergenceError,
    CutLocusError,
    DegenerateDataError,
    DegenerateWarpError,
    GrassfitError,
    IntegrationError,
    InvalidArgumentError,
    ZeroVarianceError,
)
from .grassmann import (
    GrassmannPoint,
    TangentVector,
    canonical_inner,
    exp_map_closed,
    exp_map_ode,
    geodesic_distance,
    log_map,
    principal_angles,
    project_horizontal,
    random_point,
    random_tangent,
    retract,
)
from .integrators import IntegrationConfig, StateSystem, Trajectory, integrate
from .regression import (
    Dataset,
    FitConfig,
    GeodesicModel,
    IndexMap,
    PiecewiseGeodesicModel,
    SplineModel,
    TimeWarpedModel,
    evaluate_geodesic,
    fit_cs_ggr,
    fit_piecewise_std_ggr,
    fit_std_ggr,
    fit_tw_ggr,
    tw_theta_gradient,
)
from .reports import FitReport
from .representations import (
    FrameSequence,
    LandmarkSet,
    LDSModel,
    gaussian_window_weights,
    identify_lds,
    lds_to_grassmann,
    shape_to_grassmann,
)
from .synthetic import (
    PerturbConfig,
    SynthConfig,
    frequency_law,
    generate_dataset,
    perturb_along_manifold,
)
from .warps import TimeWarp, warp_eval, warp_grad

__version__ = "0.1.0"
