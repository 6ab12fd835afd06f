"""First-passage percolation with removed edges: simulation and checking.

Edge weights are pF + (1-p) delta_infinity coupled across all p through one
hashed uniform pair per edge. The package computes truncated box-restricted
passage times, chemical distances and regularized endpoints, effective
bypass radii with their good-box certificates, greedy lattice-animal
bounds, and the Monte Carlo estimators tying those pieces to the time
constant and its Lipschitz dependence on p.
"""

__version__ = "0.1.0"

from .lattice import (
    AnnulusRegion,
    BoxRegion,
    CanonicalEdge,
    Region,
    Site,
    box_edges,
    canonicalize,
    edge_index_map,
    is_crossing_path,
    is_self_avoiding,
    l1,
    linf,
    linf_diameter,
    path_edges,
    region_vertices,
)
from .environment import (
    P_CRITICAL,
    CoupledEnvironment,
    EnvironmentParams,
    WeightLaw,
    derive_seed,
    lambda_for,
)
from .percolation import (
    ClusterLabeling,
    CrossingReport,
    RegularizationUnavailableError,
    chemical_distance,
    chemical_path,
    closest_point,
    crossing_report,
    hole_size,
    infinite_cluster_proxy,
    label_clusters,
)
from .passage import (
    DistanceField,
    GeodesicPath,
    NoPathError,
    WeightView,
    default_regularization_window,
    distance_field,
    extract_geodesic,
    is_geodesic,
    passage_time,
    passage_time_and_path,
    path_weight,
    regularized_time,
)
from .radius import (
    BypassResult,
    ExactCheck,
    GoodBoxReport,
    RadiusParams,
    RadiusResult,
    SurvivalTable,
    WindowTooSmallError,
    build_bypass,
    effective_radius,
    exact_condition_check,
    good_box_check,
    radius_tail,
)
from .animals import (
    AnimalResult,
    BoundRow,
    IndicatorField,
    PathSumRow,
    bernoulli_field,
    bound_check,
    gamma_anneal,
    gamma_max,
    indicator_from_radius,
    path_sum_bound_check,
)
from .estimators import (
    BUILTIN_RUSSO,
    BypassCase,
    CRNViolationError,
    DeltaReport,
    ExperimentConfig,
    GapRow,
    KestenDiagnostic,
    LipschitzScan,
    MuEstimate,
    MuSamples,
    RussoInstance,
    RussoReport,
    SllnReport,
    SlopeRow,
    TailSuite,
    TailTable,
    builtin_grid_2x3,
    builtin_single_edge,
    builtin_square,
    bypass_cases,
    delta_estimator,
    lipschitz_from_samples,
    lipschitz_scan,
    mu_estimate,
    mu_samples,
    russo_exact_check,
    slln_diagnostic,
    tail_suite,
    truncation_gap,
)

__all__ = [name for name in dir() if not name.startswith("_")]
