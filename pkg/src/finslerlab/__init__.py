"""finslerlab: invariant Finsler metrics on the Poincare disc, numerically.

Computes F-minimal segments, rays, minimal and periodic geodesics,
horofunctions and width functionals for the deck group of a genus-2
surface, with closed-form oracles from the hyperbolic metric and an
exact-form Randers family.
"""

__version__ = "0.1.0"

from .hyperbolic import (
    R_MAX,
    TOL_ANGLE,
    BoundaryPoint,
    DiscPoint,
    HyperbolicGeodesic,
    MobiusMap,
    ORIGIN,
    apply_mobius,
    apply_mobius_boundary,
    dist_g,
    geodesic_through,
    geodesic_through_points,
    project_to_geodesic,
)
from .group import (
    BallCache,
    GeneratorSet,
    axis_of,
    build_octagon_group,
    enumerate_ball,
    evaluate_word,
    fixed_points,
    is_fixed_direction,
    reduce_to_domain,
)
from .metrics import (
    EquivalenceConstant,
    FinslerMetric,
    InvariantField,
    conformal_metric,
    estimate_c_F,
    eval_field,
    eval_metric,
    hyperbolic_metric,
    legendre_grad,
    randers_metric,
)
from .engine import (
    PeriodicMinimizer,
    PolylinePath,
    RayApproximation,
    detect_crossings,
    dist_F,
    forward_ray,
    minimal_geodesic,
    minimize_segment,
    path_length_F,
    shortest_closed_geodesic,
)
from .analysis import (
    ApproachSpec,
    GridSpec,
    HorofunctionField,
    WidthReport,
    asymptotic_direction,
    bounding_geodesics,
    busemann_of_ray,
    compare_horofunctions,
    horofunction,
    morse_deviation,
    pushforward_horofunction,
    strip_classify,
    width_wplus,
)
