"""Tracking several ropes at once from point clouds with geodesic-aware GLTP registration."""
from .dlo_model import (
    EUCLIDEAN,
    GEODESIC,
    GeodesicTable,
    KernelMatrix,
    MultiDLOState,
    NodeChain,
    build_state,
    geodesic_table,
    kernel_matrix,
    node_to_point_distances,
)
from .registration import (
    Correspondence,
    GLTPParams,
    LLEWeights,
    RegistrationError,
    RegistrationResult,
    gltp_em,
    lle_weights,
    posterior,
    solve_W,
    total_cost,
    update_sigma2,
)
from .synth import GroundTruth, ScenarioSpec, evaluate, generate, run_scenario
from .tracker import PointCloudFrame, TrackerConfig, TrackerState, initialize, preprocess, track_frame

__version__ = "0.1.0"
