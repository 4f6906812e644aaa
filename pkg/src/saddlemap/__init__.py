"""Saddle-point search on point-cloud manifolds via learned local charts."""

from .dimred import (
    DiffusionMapResult,
    PointCloud,
    bandwidth_median_rule,
    diffusion_maps,
    select_chart_components,
)
from .driver import (
    DriverConfig,
    IterationRecord,
    ProblemDefinition,
    SearchTrajectory,
    build_local_chart,
    check_convergence,
    integrate_isd_on_chart,
    run_search,
)
from .errors import (
    ChartFitError,
    DegenerateChartError,
    NonFiniteEvaluationError,
    SaddlemapError,
    TetherResidualError,
)
from .geometry import (
    ChristoffelSymbols,
    CovariantHessian,
    GADState,
    GeometryField,
    MetricTensor,
    christoffel,
    covariant_hessian_from_force,
    gad_extended_field,
    geodesic_rhs,
    householder_reflect,
    integrate_gad,
    isd_field,
    metric_from_jacobian,
    rayleigh_quotient,
    sharp_flat,
    smallest_eigpair,
)
from .regression import (
    ChartPair,
    RegressorModel,
    fit,
    fit_with_nugget_selection,
    predict_with_derivatives,
    score,
)
from .sampling import (
    SamplerConfig,
    TetherConfig,
    estimate_mean_force,
    invert_chart_via_tether,
    sample_brownian,
    sample_flow_perturbation,
)

__version__ = "0.1.0"
