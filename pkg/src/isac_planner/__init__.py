"""Deployment planning toolkit for joint sensing/communication networks.

Evaluates localization-accuracy (CRLB) coverage fields and cooperative
downlink rates over service areas, verifies the similarity-invariance and
scaling structure of the placement problem, and optimizes 3-D base-station
positions by a trust-region MM method under an area-rate floor.
"""

from .baseline import (
    GridSpec,
    coordinate_global_search,
    height_sweep,
    scaling_experiment,
)
from .catalog import Catalog, CatalogEntry, RegionDescriptor
from .comm import CommParams, area_rate, expected_snr, rate_point, rate_point_mc
from .geometry import (
    Deployment,
    Region,
    RegionKind,
    SampleSet,
    SimilarityTransform,
    apply_transform,
    replicate_deployment,
    sample_region,
    vec3,
)
from .optimizer import (
    MmConfig,
    MmResult,
    PlacementProblem,
    TrustRegionState,
    acceptance_ratio,
    build_rate_model,
    initialize_deployment,
    mm_optimize,
    solve_subproblem,
    update_radius,
)
from .scenario import ScenarioConfig, ScenarioError, load_scenario
from .sensing import (
    CrlbField,
    NonLocalizableError,
    SensingParams,
    area_crlb,
    coverage_probability,
    crlb_field,
    crlb_point,
    fisher_matrix,
    ranging_variance,
    unit_vector,
)
from .surrogate import (
    DegenerateGeometryError,
    SurrogateCoefficients,
    build_surrogate,
    majorizer_value,
    surrogate_value,
)

__version__ = "0.1.0"
