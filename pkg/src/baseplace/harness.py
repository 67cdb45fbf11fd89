"""Trial runner and evaluation harness: geometric success model, seeded
suite execution over all methods, alpha/projection ablations, report
emission, and candidate-density heatmaps.

Evaluation is always performed in the world frame against analytic ground
truth (true stamped footprint centroid, true keypoint and approach
direction), so every method is judged by the same yardstick regardless of
which frame or perception path it planned in.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from . import baselines
from .baselines import PathPlanQuery, PivotConfig, RrtConfig, pivot_place
from .errors import TrialAbort
from .gridmap import (
    DEFAULT_CLEARANCE,
    FreeSet,
    OccupancyGrid,
    Pose2D,
    compute_free_set,
    extract_local_egocentric,
    wrap_angle,
)
from .keypoints import cluster_features, propose_keypoints, select_affordance_point
from .optimizer import PlannerConfig, PlanTrace, optimize
from .oracle import (
    Attachment,
    HttpOracle,
    HttpOracleConfig,
    KIND_RANK,
    OracleQuery,
    ScriptedOracle,
    ScriptedOracleConfig,
)
from .projection import (
    PROJECTION_FULL,
    PROJECTION_POLICIES,
    AffordanceContext,
    DirectionDescriptor,
    ObstacleMapPlus,
    ProjectionPolicy,
    backproject_mask,
    build_fan,
    compute_centroid,
    fan_contains,
    generate_directions,
    select_direction,
)
from .rng import derive_rng, derive_seed
from .scene import (
    GroundTruth,
    SceneSpec,
    TaskSpec,
    TrialSetup,
    load_scene_file,
    load_task_file,
    randomize_trial,
    synthetic_capture,
    synthetic_features,
    trial_ground_truth,
)

LOCAL_MAP_SIZE = 180  # cells; 9 m egocentric window
KMEANS_K = 20

BASE_METHODS = (
    "full",
    "object_center_astar",
    "object_center_rrt_star",
    "affordance_astar",
    "affordance_rrt_star",
    "pivot_rgb",
    "pivot_multimodal",
)

FAILURE_REASONS = ("collision", "distance", "direction", "skipped")


@dataclass(frozen=True)
class SuccessModel:
    """Geometric proxy for task success: collision-free placement, working
    distance within tolerance of the preferred radius, and (for
    direction-constrained objects) inside the true approach fan."""

    reach_tolerance: float = 0.25
    clearance: float = DEFAULT_CLEARANCE


def evaluate_success(
    placement: Pose2D,
    gt: GroundTruth,
    task: TaskSpec,
    free: FreeSet,
    model: SuccessModel | None = None,
) -> tuple[bool, str]:
    model = model or SuccessModel(reach_tolerance=task.reach_tolerance)
    if not free.contains_point(placement.x, placement.y):
        return False, "collision"
    d = math.hypot(placement.x - gt.keypoint_xy[0], placement.y - gt.keypoint_xy[1])
    if abs(d - task.preferred_radius) > model.reach_tolerance:
        return False, "distance"
    if gt.direction_constrained and not fan_contains(
        gt.centroid, gt.direction, (placement.x, placement.y), task.approach_half_angle
    ):
        return False, "direction"
    return True, "ok"


# ---------------------------------------------------------------------------
# method specifications

@dataclass(frozen=True)
class MethodSpec:
    name: str
    kind: str  # full | object_center | affordance | pivot
    planner: str = ""  # astar | rrt_star (classical baselines)
    pivot_variant: str = ""  # rgb | multimodal
    planner_config: PlannerConfig = field(default_factory=PlannerConfig)
    policy: ProjectionPolicy = PROJECTION_FULL


def make_method(name: str, planner_config: PlannerConfig | None = None) -> MethodSpec:
    """Parse a method id. Ablation suffixes: `full@alpha=0.5` (fixed alpha),
    `full@alpha=schedule`, `full@proj=proj_no_direction_a` (projection
    policy)."""
    base, _, suffix = name.partition("@")
    config = planner_config or PlannerConfig()
    policy = PROJECTION_FULL
    if suffix:
        key, _, value = suffix.partition("=")
        if base != "full":
            raise ValueError(f"ablation suffix only applies to 'full': {name}")
        if key == "alpha":
            if value != "schedule":
                config = replace(config, alpha_mode="fixed", alpha_fixed=float(value))
        elif key == "proj":
            if value not in PROJECTION_POLICIES:
                raise ValueError(f"unknown projection policy '{value}'")
            policy = PROJECTION_POLICIES[value]
        else:
            raise ValueError(f"unknown ablation suffix '{suffix}'")
    if base == "full":
        return MethodSpec(name=name, kind="full", planner_config=config, policy=policy)
    if base in ("object_center_astar", "object_center_rrt_star"):
        return MethodSpec(
            name=name, kind="object_center",
            planner="astar" if base.endswith("_astar") else "rrt_star",
        )
    if base in ("affordance_astar", "affordance_rrt_star"):
        return MethodSpec(
            name=name, kind="affordance",
            planner="astar" if base.endswith("_astar") else "rrt_star",
        )
    if base in ("pivot_rgb", "pivot_multimodal"):
        return MethodSpec(
            name=name, kind="pivot",
            pivot_variant="rgb" if base.endswith("_rgb") else "multimodal",
            policy=PROJECTION_FULL if base.endswith("multimodal") else PROJECTION_POLICIES["proj_none"],
        )
    raise ValueError(f"unknown method '{name}'")


class WorldFrameOracle:
    """Adapter that re-expresses grid-local option positions in the world
    frame before the wrapped oracle sees them (the scripted oracle's ground
    truth lives in the world frame)."""

    def __init__(self, oracle, frame: Pose2D):
        self.oracle = oracle
        self.frame = frame

    def answer(self, query: OracleQuery) -> "OracleReply":
        options = []
        for opt in query.options:
            if opt.position is not None:
                wx, wy = self.frame.to_world(np.asarray(opt.position))
                options.append(replace(opt, position=(float(wx), float(wy))))
            else:
                options.append(opt)
        return self.oracle.answer(replace(query, options=tuple(options)))


def make_oracle(
    gt: GroundTruth,
    task: TaskSpec,
    trial_seed: int,
    oracle_config: ScriptedOracleConfig | HttpOracleConfig,
):
    if isinstance(oracle_config, ScriptedOracleConfig):
        return ScriptedOracle(
            gt,
            oracle_config,
            trial_seed=trial_seed,
            fan_half_angle=task.approach_half_angle,
            preferred_radius=task.preferred_radius,
        )
    return HttpOracle(oracle_config)


# ---------------------------------------------------------------------------
# per-trial pipelines

@dataclass
class TrialResult:
    trace: PlanTrace
    placement_world: Pose2D | None


def _context_dict(context: AffordanceContext) -> dict:
    return {
        "footprint": [[int(a), int(b)] for a, b in context.footprint],
        "centroid": [float(v) for v in context.centroid],
        "directions": [
            {
                "index": d.index,
                "bearing": d.bearing,
                "world_bearing": d.world_bearing,
                "endpoint": [float(d.endpoint[0]), float(d.endpoint[1])],
                "length": d.length,
            }
            for d in context.directions
        ],
        "selected_index": context.selected_index,
        "keypoint": None
        if context.keypoint is None
        else [float(v) for v in context.keypoint],
    }


def context_from_dict(doc: dict) -> AffordanceContext:
    directions = tuple(
        DirectionDescriptor(
            index=d["index"],
            bearing=d["bearing"],
            world_bearing=d["world_bearing"],
            endpoint=np.array(d["endpoint"]),
            length=d["length"],
        )
        for d in doc.get("directions", [])
    )
    return AffordanceContext(
        footprint=np.array(doc["footprint"], dtype=int).reshape(-1, 2),
        centroid=np.array(doc["centroid"]),
        directions=directions,
        selected_index=doc.get("selected_index"),
        keypoint=None if doc.get("keypoint") is None else np.array(doc["keypoint"]),
    )


class AttachmentBuilder:
    """Renders the rasters attached to HTTP oracle queries, honoring the
    projection policy. The scripted oracle ignores attachments, so suites
    running it skip rendering entirely."""

    def __init__(self, grid, context, policy, robot_xy=(0.0, 0.0), heading=0.0):
        self.grid = grid
        self.context = context
        self.policy = policy
        self.robot_xy = robot_xy
        self.heading = heading

    def _render(self, markers=()):
        return ObstacleMapPlus(
            grid=self.grid,
            context=self.context,
            robot_xy=self.robot_xy,
            robot_heading=self.heading,
            candidates=tuple(markers),
            policy=self.policy,
        ).render(scale=2)

    def for_direction(self):
        return (Attachment(name="affordance_view", image=self._render()),)

    def for_ranking(self, markers):
        out = [Attachment(name="obstacle_map_plus", image=self._render(markers))]
        if self.policy.attach_projection:
            out.append(Attachment(name="affordance_view", image=self._render()))
        return tuple(out)


def pose_to_world(frame: Pose2D, local: Pose2D) -> Pose2D:
    x, y = frame.to_world(np.array([local.x, local.y]))
    return Pose2D(float(x), float(y), wrap_angle(local.theta + frame.theta))


def run_full_trial(
    scene: SceneSpec,
    task: TaskSpec,
    setup: TrialSetup,
    oracle,
    spec: MethodSpec,
    attach: bool = False,
) -> TrialResult:
    """Affordance-guided coarse-to-fine pipeline on the robot-local map."""
    robot = setup.robot_start
    world = scene.composed_grid(setup)
    local = extract_local_egocentric(world, robot, LOCAL_MAP_SIZE)
    local_free = compute_free_set(local)
    policy = spec.policy

    depth, mask = synthetic_capture(scene, task.object_id, setup)
    cam_local = scene.camera.in_frame(robot)
    footprint = backproject_mask(depth, mask, cam_local, local)
    centroid = compute_centroid(footprint, local)
    directions = generate_directions(
        centroid, local_free, frame_offset=robot.theta
    )

    context = AffordanceContext(footprint=footprint, centroid=centroid, directions=directions)
    builder = AttachmentBuilder(local, context, policy) if attach else None

    if policy.use_direction:
        selected = select_direction(
            directions,
            task.sub_instruction,
            oracle,
            attachments=builder.for_direction() if builder else (),
        )
        context.selected_index = selected
        context.fan = build_fan(centroid, directions[selected - 1].bearing, local)

    features = synthetic_features(scene, task.object_id, depth, mask, setup)
    clusters = cluster_features(features, k=KMEANS_K, seed=derive_seed(setup.seed, "kmeans"))
    proposals = propose_keypoints(clusters, depth, scene.camera, world)
    g_world, g_idx = select_affordance_point(proposals, task, oracle)
    context.keypoint = robot.to_local(g_world)

    rng = derive_rng(setup.seed, "optimize")
    rank_oracle = WorldFrameOracle(oracle, robot)
    provider = builder.for_ranking if builder else None
    placement_local, trace = optimize(
        context, local_free, task, rank_oracle, spec.planner_config, rng,
        attachment_provider=provider, context_tags=policy.context_tags(),
    )
    placement_world = pose_to_world(robot, placement_local)

    trace.local_grid = {
        "size": LOCAL_MAP_SIZE,
        "resolution": local.resolution,
        "origin": list(local.origin),
    }
    trace.context = _context_dict(context)
    trace.keypoint = [float(v) for v in g_world]
    trace.extra = {
        "keypoint_proposals": len(proposals),
        "keypoint_choice": g_idx,
        "projection_policy": policy.name,
    }
    trace.final_world = {
        "x": placement_world.x, "y": placement_world.y, "theta": placement_world.theta
    }
    return TrialResult(trace=trace, placement_world=placement_world)


def run_baseline_trial(
    scene: SceneSpec,
    task: TaskSpec,
    setup: TrialSetup,
    oracle,
    spec: MethodSpec,
    rrt_config: RrtConfig,
    pivot_config: PivotConfig,
    attach: bool = False,
) -> TrialResult:
    trace = PlanTrace()
    if spec.kind == "object_center":
        rng = derive_rng(setup.seed, "rrt", spec.name)
        result, target = baselines.place_object_center(
            scene, task, setup, spec.planner, rng, rrt_config
        )
        trace.path = [list(map(float, p)) for p in result.path]
        trace.extra = {"planner": spec.planner, "cost": result.cost,
                       "target": [float(v) for v in target]}
        placement = result.placement
    elif spec.kind == "affordance":
        rng = derive_rng(setup.seed, "rrt", spec.name)
        result, g, info = baselines.place_affordance_point(
            scene, task, setup, oracle, spec.planner, rng, rrt_config
        )
        trace.path = [list(map(float, p)) for p in result.path]
        trace.keypoint = [float(v) for v in g]
        trace.extra = {"planner": spec.planner, "cost": result.cost, **info}
        placement = result.placement
    elif spec.kind == "pivot":
        free = compute_free_set(scene.composed_grid(setup))
        target = baselines.object_center_target(scene, task.object_id, setup)
        rng = derive_rng(setup.seed, "pivot", spec.name)
        placement, records, _ = pivot_place(
            setup.robot_start, free, task, oracle, rng, face_target=target,
            config=pivot_config, context_tags=spec.policy.context_tags(),
        )
        trace.extra = {
            "variant": spec.pivot_variant,
            "pivot_iterations": [
                {
                    "t": r.t,
                    "mean": r.mean,
                    "covariance": r.covariance,
                    "positions": r.positions,
                    "oracle_reply": r.oracle_reply,
                }
                for r in records
            ],
        }
    else:
        raise ValueError(f"not a baseline method: {spec.name}")
    trace.final_world = {"x": placement.x, "y": placement.y, "theta": placement.theta}
    return TrialResult(trace=trace, placement_world=placement)


def run_trial(
    scene: SceneSpec,
    task: TaskSpec,
    seed: int,
    spec: MethodSpec,
    oracle_config,
    rrt_config: RrtConfig = RrtConfig(),
    pivot_config: PivotConfig = PivotConfig(),
    success_model: SuccessModel | None = None,
) -> PlanTrace:
    """Randomize, plan with the requested method, evaluate, and return the
    completed trace. Aborts are recorded as failures with reason 'skipped'."""
    setup = randomize_trial(scene, task, seed)
    gt = trial_ground_truth(scene, task.object_id, setup)
    oracle = make_oracle(gt, task, seed, oracle_config)
    attach = not isinstance(oracle_config, ScriptedOracleConfig)

    try:
        if spec.kind == "full":
            result = run_full_trial(scene, task, setup, oracle, spec, attach)
        else:
            result = run_baseline_trial(
                scene, task, setup, oracle, spec, rrt_config, pivot_config, attach
            )
        trace = result.trace
        world_free = compute_free_set(scene.composed_grid(setup))
        success, reason = evaluate_success(
            result.placement_world, gt, task, world_free, success_model
        )
        trace.evaluation = {"success": success, "reason": reason, "skip": False}
    except TrialAbort as abort:
        trace = PlanTrace()
        trace.evaluation = {
            "success": False,
            "reason": "skipped",
            "skip": True,
            "abort": abort.reason,
            "detail": str(abort),
        }
    if isinstance(oracle, HttpOracle) and oracle.log:
        trace.extra["oracle_log"] = list(oracle.log)

    trace.method = spec.name
    trace.scene_name = scene.name
    trace.task_name = task.object_id
    trace.seed = seed
    trace.setup = setup.to_dict()
    trace.frame = {
        "x": setup.robot_start.x,
        "y": setup.robot_start.y,
        "theta": setup.robot_start.theta,
    }
    if spec.kind == "full":
        trace.config = spec.planner_config.to_dict()
    trace.oracle_config = oracle_config.to_dict()
    return trace


# ---------------------------------------------------------------------------
# suite execution and reports

@dataclass(frozen=True)
class SuiteTask:
    name: str
    scene_path: str
    task_path: str


def load_suite(path: str) -> list[SuiteTask]:
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    if doc.get("schema") != 1:
        raise ValueError("suite: missing or unsupported 'schema' (expected 1)")
    base = os.path.dirname(os.path.abspath(path))
    return [
        SuiteTask(
            name=entry["name"],
            scene_path=os.path.join(base, entry["scene"]),
            task_path=os.path.join(base, entry["task"]),
        )
        for entry in doc["tasks"]
    ]


def packaged_suite_path() -> str:
    from importlib import resources

    return str(resources.files("baseplace").joinpath("data", "suite.json"))


def trial_seed(base_seed: int, task_index: int, trial_index: int) -> int:
    return derive_seed(base_seed, "trial", task_index, trial_index)


@dataclass
class EvalReport:
    """Aggregated suite outcome. `rows[method][task]` holds success counts,
    skip counts, a failure-reason histogram, and the per-trial outcomes the
    ablation statistics are computed from."""

    schema: int = 1
    base_seed: int = 0
    trials_per_task: int = 0
    methods: list = field(default_factory=list)
    tasks: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    config_hash: str = ""
    rows: dict = field(default_factory=dict)

    def add_trial(self, method: str, task: str, trace: PlanTrace) -> None:
        row = self.rows.setdefault(method, {}).setdefault(
            task,
            {
                "successes": 0,
                "trials": 0,
                "skips": 0,
                "reasons": {r: 0 for r in FAILURE_REASONS},
                "trial_results": [],
            },
        )
        ev = trace.evaluation
        row["trials"] += 1
        if ev["success"]:
            row["successes"] += 1
        else:
            row["reasons"][ev["reason"]] += 1
        if ev.get("skip"):
            row["skips"] += 1
        row["trial_results"].append(
            {
                "seed": trace.seed,
                "success": ev["success"],
                "reason": ev["reason"],
                "final_world": None
                if trace.final_world is None
                else [trace.final_world["x"], trace.final_world["y"]],
            }
        )

    def aggregate(self, method: str, tasks=None) -> tuple[int, int]:
        total = hits = 0
        for task, row in self.rows.get(method, {}).items():
            if tasks is not None and task not in tasks:
                continue
            total += row["trials"]
            hits += row["successes"]
        return hits, total

    def to_dict(self) -> dict:
        return {
            "schema": self.schema,
            "base_seed": self.base_seed,
            "trials_per_task": self.trials_per_task,
            "methods": self.methods,
            "tasks": self.tasks,
            "config": self.config,
            "config_hash": self.config_hash,
            "rows": self.rows,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def sha256(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()

    def to_text(self) -> str:
        """Aligned success-rate table, one row per method."""
        width = max((len(m) for m in self.methods), default=6) + 2
        cols = [t[:14] for t in self.tasks]
        header = "method".ljust(width) + "".join(c.rjust(16) for c in cols) + "total".rjust(10)
        lines = [header, "-" * len(header)]
        for method in self.methods:
            cells = []
            for task in self.tasks:
                row = self.rows.get(method, {}).get(task)
                cells.append("-" if row is None else f"{row['successes']}/{row['trials']}")
            hits, total = self.aggregate(method)
            pct = f"{100.0 * hits / total:.0f}%" if total else "-"
            lines.append(
                method.ljust(width) + "".join(c.rjust(16) for c in cells) + pct.rjust(10)
            )
        return "\n".join(lines)

    def save(self, out_dir: str) -> None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as f:
            f.write(self.to_json())
            f.write("\n")
        with open(os.path.join(out_dir, "report.txt"), "w", encoding="utf-8") as f:
            f.write(self.to_text())
            f.write("\n")

    @classmethod
    def load(cls, path: str) -> "EvalReport":
        with open(path, "r", encoding="utf-8") as f:
            return cls(**json.load(f))


def config_fingerprint(doc: dict) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode("utf-8")).hexdigest()


def run_suite(
    suite: list[SuiteTask],
    methods: list[str],
    trials_per_task: int,
    base_seed: int,
    oracle_config=None,
    planner_config: PlannerConfig | None = None,
    rrt_config: RrtConfig = RrtConfig(),
    pivot_config: PivotConfig = PivotConfig(),
    out_dir: str | None = None,
    success_model: SuccessModel | None = None,
) -> EvalReport:
    """Run every (task, method, trial) combination. Trials are seeded purely
    by (base_seed, task index, trial index), so all methods face identical
    worlds. Traces stream to out_dir/traces when given."""
    oracle_config = oracle_config or ScriptedOracleConfig()
    planner_config = planner_config or PlannerConfig()
    specs = [make_method(name, planner_config) for name in methods]

    report = EvalReport(
        base_seed=base_seed,
        trials_per_task=trials_per_task,
        methods=list(methods),
        tasks=[t.name for t in suite],
        config={
            "planner": planner_config.to_dict(),
            "oracle": oracle_config.to_dict(),
            "rrt": rrt_config.to_dict(),
            "pivot": pivot_config.to_dict(),
            "trials_per_task": trials_per_task,
            "base_seed": base_seed,
            "methods": list(methods),
            "tasks": [t.name for t in suite],
        },
    )
    report.config_hash = config_fingerprint(report.config)

    trace_dir = None
    if out_dir is not None:
        trace_dir = os.path.join(out_dir, "traces")
        os.makedirs(trace_dir, exist_ok=True)

    for task_index, entry in enumerate(suite):
        scene = load_scene_file(entry.scene_path)
        task = load_task_file(entry.task_path)
        for spec in specs:
            for trial in range(trials_per_task):
                seed = trial_seed(base_seed, task_index, trial)
                trace = run_trial(
                    scene, task, seed, spec, oracle_config,
                    rrt_config, pivot_config, success_model,
                )
                trace.task_name = entry.name
                trace.scene_path = entry.scene_path
                report.add_trial(spec.name, entry.name, trace)
                if trace_dir is not None:
                    fname = f"{entry.name}__{spec.name}__{trial:03d}.json"
                    trace.save(os.path.join(trace_dir, fname))
    if out_dir is not None:
        report.save(out_dir)
    return report


def report_rows_from_traces(trace_dir: str) -> dict:
    """Recompute the aggregation purely from stored traces (bit-exact
    regeneration check)."""
    shadow = EvalReport()
    for fname in sorted(os.listdir(trace_dir)):
        if not fname.endswith(".json"):
            continue
        trace = PlanTrace.load(os.path.join(trace_dir, fname))
        shadow.add_trial(trace.method, trace.task_name, trace)
    return shadow.rows


ALPHA_SETTINGS = ("0", "0.5", "1", "schedule")
PROJECTION_SETTINGS = tuple(PROJECTION_POLICIES)


def ablate_alpha(
    suite, trials_per_task, base_seed, oracle_config=None, out_dir=None,
    settings=ALPHA_SETTINGS, planner_config=None,
) -> EvalReport:
    methods = [f"full@alpha={s}" for s in settings]
    return run_suite(
        suite, methods, trials_per_task, base_seed,
        oracle_config=oracle_config, planner_config=planner_config, out_dir=out_dir,
    )


def ablate_projection(
    suite, trials_per_task, base_seed, oracle_config=None, out_dir=None,
    settings=PROJECTION_SETTINGS, planner_config=None,
) -> EvalReport:
    methods = [f"full@proj={s}" for s in settings]
    return run_suite(
        suite, methods, trials_per_task, base_seed,
        oracle_config=oracle_config, planner_config=planner_config, out_dir=out_dir,
    )


def placement_spread(report: EvalReport, method: str) -> float:
    """Mean (over tasks) total variance of final placements across trials;
    the ablation's dispersion statistic."""
    spreads = []
    for task, row in report.rows.get(method, {}).items():
        pts = np.array(
            [r["final_world"] for r in row["trial_results"] if r["final_world"]]
        )
        if len(pts) >= 2:
            spreads.append(float(pts.var(axis=0).sum()))
    return float(np.mean(spreads)) if spreads else 0.0


# ---------------------------------------------------------------------------
# heatmap rendering

KDE_SIGMA_CELLS = 2.0
HEAT_COLOR = np.array([220, 30, 30], dtype=float)


def render_heatmap(
    trace: PlanTrace, scene: SceneSpec, scale: int = 2
) -> list[tuple[str, np.ndarray]]:
    """Per-iteration candidate-density rasters (probability-weighted Gaussian
    KDE) composited over the local obstacle map with its overlays."""
    if not trace.iterations:
        raise ValueError("trace has no optimizer iterations to render")
    setup = TrialSetup.from_dict(trace.setup)
    robot = setup.robot_start
    world = scene.composed_grid(setup)
    size = trace.local_grid["size"]
    local = extract_local_egocentric(world, robot, size)
    context = context_from_dict(trace.context)
    if context.selected_index is not None:
        bearing = context.directions[context.selected_index - 1].bearing
        context.fan = build_fan(context.centroid, bearing, local)

    out = []
    for record in trace.iterations:
        markers = record.marker_positions()
        base = ObstacleMapPlus(
            grid=local, context=context, candidates=tuple(markers)
        ).render(scale=scale)

        density = np.zeros((local.width, local.height))
        pts = np.array(record.positions)
        weights = np.array(record.p)
        idx = local.cell_indices_of(pts)
        ok = (
            (idx[:, 0] >= 0) & (idx[:, 0] < local.width)
            & (idx[:, 1] >= 0) & (idx[:, 1] < local.height)
        )
        np.add.at(density, (idx[ok, 0], idx[ok, 1]), weights[ok])
        density = ndimage.gaussian_filter(density, sigma=KDE_SIGMA_CELLS)
        peak = density.max()
        if peak > 0:
            density = density / peak

        # to image axes, upscaled
        dens_img = np.repeat(
            np.repeat(density.T[::-1], scale, axis=0), scale, axis=1
        )
        alpha = (0.8 * dens_img)[..., None]
        blended = (1 - alpha) * base.astype(float) + alpha * HEAT_COLOR
        out.append((f"iteration_{record.t}", blended.astype(np.uint8)))
    return out
