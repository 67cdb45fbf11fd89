"""Affordance-guided coarse-to-fine base placement planning on 2-D occupancy
grids, with a scripted/HTTP semantic oracle, classical baselines, and a
deterministic evaluation harness."""

from .baselines import (
    PathPlanQuery,
    PivotConfig,
    PlanResult,
    RrtConfig,
    astar_plan,
    pivot_place,
    place_affordance_point,
    place_object_center,
    rrt_star_plan,
)
from .errors import OracleFailure, PlanningFailure, TrialAbort
from .gridmap import (
    FREE,
    OCCUPIED,
    UNKNOWN,
    FreeSet,
    OccupancyGrid,
    Pose2D,
    compute_free_set,
    distance_transform,
    extract_local_egocentric,
)
from .harness import (
    BASE_METHODS,
    EvalReport,
    SuccessModel,
    ablate_alpha,
    ablate_projection,
    evaluate_success,
    load_suite,
    make_method,
    packaged_suite_path,
    render_heatmap,
    run_suite,
    run_trial,
)
from .keypoints import FeatureGrid, cluster_features, propose_keypoints
from .optimizer import PlannerConfig, PlanTrace, optimize, window_mass
from .oracle import (
    HttpOracle,
    HttpOracleConfig,
    OracleQuery,
    OracleReply,
    ScriptedOracle,
    ScriptedOracleConfig,
    majority_vote,
)
from .projection import (
    AffordanceContext,
    ObstacleMapPlus,
    backproject_mask,
    build_fan,
    compute_centroid,
    generate_directions,
    select_direction,
)
from .scene import (
    CameraModel,
    SceneSpec,
    TaskSpec,
    TrialSetup,
    load_scene_file,
    load_task_file,
    randomize_trial,
    synthetic_capture,
)

__version__ = "0.1.0"
