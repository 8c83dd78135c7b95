"""Line-feature visual localization with fault exclusion and protection levels.

The package estimates a camera pose in a prior 3D line map from 2D line
observations, rejects faulty correspondences with a chi-squared residual
test, and bounds the remaining per-axis error with protection levels that
account for multiple undetected faults. A deterministic scene simulator
and a batch pipeline/CLI make every statistical property reproducible
without sensors.
"""

from .errors import (
    BehindCameraError,
    DegenerateSegmentError,
    InsufficientObservationsError,
    IntegrityUnavailableError,
    InvariantViolation,
    LocalizationError,
    NoOverlapError,
    NoVisibleLinesError,
    ParseError,
    SingularNormalEquationsError,
)
from .estimator import (
    LinearizedSystem,
    SolveReport,
    SolverOptions,
    assemble_system,
    endpoint_jacobian,
    endpoint_residual,
    gauss_newton_solve,
    squared_distance_jacobian,
)
from .geometry import (
    CameraIntrinsics,
    Line2D,
    LineSegment3D,
    Pose,
    Twist,
    apply_left_perturbation,
    exp_map,
    foot_point,
    line_from_endpoints,
    log_map,
    project,
    signed_distance,
    world_to_camera,
)
from .integrity import (
    AXES,
    FaultHypothesis,
    FdeReport,
    IntegrityConfig,
    PlReport,
    bias_term,
    bound_rate,
    chi2_quantile,
    d_matrix,
    fde,
    icn,
    monitor_frame,
    noise_term,
    noncentrality_gap,
    protection_level,
    s_matrix,
    state_covariance,
    wsse,
)
from .io import (
    FrameObservation,
    load_frames,
    load_map,
    load_trajectory,
    save_frames,
    save_map,
    save_trajectory,
)
from .matching import (
    Correspondence,
    MatchThresholds,
    angle_between,
    match_lines,
    overlap_ratio,
    sampled_distance,
)
from .pipeline import (
    EvaluationSummary,
    FrameRecord,
    RunConfig,
    emit_reports,
    evaluate,
    pose_error,
    read_frames_csv,
    run_pipeline,
)
from .simulator import (
    DEFAULT_CAMERA,
    NoiseModel,
    SceneConfig,
    SimFrame,
    TrajectoryParams,
    export_dataset,
    generate_map,
    generate_trajectory,
    ground_truth_correspondences,
    render_frame,
    simulate_dataset,
)

__version__ = "0.1.0"
