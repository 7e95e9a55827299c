# flake8: noqa

__version__ = "0.1.0"

from .lab import PercolationLab, create_app, run
from .cache import LocalStore, CloudStore, ResultCache
from .config import ExperimentConfig, Tolerances, TOLERANCES, resolve
from .lattice import (
    Region,
    CouplingField,
    PercConfig,
    sample_uniform_field,
    open_at,
    sample_two_stage,
    restrict,
)
from .clusters import (
    label_clusters,
    diameter,
    has_crossing_cluster,
    single_axis_crossing,
    event_T,
    atypical_event,
    estimate_theta,
    scan_decay,
)
from .cylinder import build_cylinder, trivial_cut, verify_cutset
from .flow import min_open_cut, min_cardinality_min_cut
from .flow_constant import (
    estimate_beta,
    beta_schedule,
    coupled_beta_pair,
    chernoff_exceedance,
    cutsize_quantiles,
    direction_sweep,
    build_norm_table,
    NormTable,
)
from .wulff import (
    NormSpec,
    Polytope,
    wulff_polytope,
    dual_norm_eval,
    support_function,
    surface_energy,
    scale_to_volume,
    hausdorff_distance,
    crystal_pipeline,
)
from .cheeger import exact_profile, heuristic_profile, validate_candidate, profile_experiment
from .regularity import (
    beta_lipschitz_report,
    wulff_lipschitz_report,
    cheeger_limit_report,
    theta_slope_report,
)
from .plotdata import emit_plotdata
from .exceptions import (
    PerclabError,
    ParameterError,
    GeometryError,
    DomainError,
    NotFoundClusterError,
    NotFoundResultError,
    ExperimentError,
    SchemaError,
    CapabilityError,
)
