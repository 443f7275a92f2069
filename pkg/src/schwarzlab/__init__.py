"""Numerical differential geometry of surfaces in the Schwarzschild exterior.

Spectral surface geometry on star-shaped graphs, the linearized isometric
embedding system, a quasi-local mass with Schwarzschild reference and its
first variation along isometric continuations.
"""

from .ambient import (
    AmbientGeometry,
    AmbientPoint,
    Rotation,
    apply_rotation,
    christoffel,
    metric,
    ricci,
    ricci_norm,
    static_potential,
    static_potential_dr,
    static_residual,
)
from .continuation import (
    ContinuationFamily,
    StepRecord,
    congruence_distance,
    displace,
    drift_correction,
    fd_mass_derivative,
    first_order_mass_check,
    isometric_continuation,
    killing_speed,
    metric_drift,
    metric_sup,
    normal_flow_step,
)
from .errors import (
    AmbientDomainError,
    ConvexityViolation,
    DriftUncorrectable,
    HorizonViolation,
    MeanCurvatureDegenerate,
    SchwarzlabError,
    SolverFailure,
    StarShapeLost,
)
from .linearization import (
    IsometryOperator,
    VariationDatum,
    isometry_operator,
    killing_data,
    metric_variation,
    solve_linearized_isometry,
    trace_reduction,
    traceless_residual,
    translation_data,
)
from .mass import (
    MassReport,
    PenroseVerdict,
    first_variation_rhs,
    gauss_subtraction_check,
    mass_scale,
    mean_curvature_variation,
    penrose_check,
    quasilocal_mass,
)
from .sphere import ScalarField, SphereGrid, SymTensorField, random_coefficients, re_ylm, real_sph_harm
from .surface import (
    SurfaceGeometry,
    TangentField,
    build_surface,
    codazzi_residual,
    export_surface,
    gauss_curvature,
    import_surface,
    laplace_beltrami,
    potential_gradient_residual,
    potential_laplace_residual,
)

__version__ = "0.1.0"
