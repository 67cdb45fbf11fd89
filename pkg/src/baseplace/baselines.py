"""Comparison methods: placement at a preferred distance from the object
center or a selected affordance point via grid A* or RRT*, plus the two
iterative visual-prompting variants that refit a proposal distribution to
oracle picks."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PlanningFailure
from .gridmap import FreeSet, Pose2D, compute_free_set
from .keypoints import cluster_features, propose_keypoints, select_affordance_point
from .oracle import FULL_CONTEXT_TAGS, KIND_RANK, OracleOption, OracleQuery
from .rng import derive_seed
from .scene import (
    SceneSpec,
    TaskSpec,
    TrialSetup,
    footprint_cells,
    synthetic_capture,
    synthetic_features,
)

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class PathPlanQuery:
    """Plan from `start` to any free cell at the preferred distance from
    `target` (within `tolerance`, default one grid resolution)."""

    start: Pose2D
    target: np.ndarray  # (2,)
    free: FreeSet
    preferred_radius: float = 0.7
    tolerance: float | None = None

    def band(self) -> float:
        return self.free.grid.resolution if self.tolerance is None else self.tolerance


@dataclass(frozen=True)
class PlanResult:
    placement: Pose2D
    path: list  # [(x, y), ...] waypoints including start and placement
    cost: float


def _octile(dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
    lo = np.minimum(dx, dy)
    hi = np.maximum(dx, dy)
    return hi + (SQRT2 - 1.0) * lo


def _heuristic_to_set(free: FreeSet, goal_cells: np.ndarray) -> np.ndarray:
    """Exact octile distance (meters) from every cell to the nearest goal
    cell; admissible and consistent for 8-connected moves."""
    w, h = free.grid.width, free.grid.height
    ix = np.arange(w)[:, None, None]
    iy = np.arange(h)[None, :, None]
    best = np.full((w, h), np.inf)
    for lo in range(0, len(goal_cells), 64):
        chunk = goal_cells[lo : lo + 64]
        dx = np.abs(ix - chunk[None, None, :, 0])
        dy = np.abs(iy - chunk[None, None, :, 1])
        best = np.minimum(best, _octile(dx, dy).min(axis=2))
    return best * free.grid.resolution


_NEIGHBORS = (
    (1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
    (1, 1, SQRT2), (1, -1, SQRT2), (-1, 1, SQRT2), (-1, -1, SQRT2),
)


def astar_grid(
    free: FreeSet, start: tuple, goal_cells: np.ndarray
) -> tuple[float, list]:
    """8-connected A* over the free mask with the octile-to-goal-set
    heuristic. Diagonal steps require both adjacent cardinals free (no corner
    cutting). Returns (cost in meters, cell path); raises PlanningFailure when
    the goal set is unreachable."""
    grid = free.grid
    mask = free.mask
    if not free.contains_cell(*start):
        raise PlanningFailure(f"start cell {start} is not in the free set")
    if len(goal_cells) == 0:
        raise PlanningFailure("empty goal set")
    goal_set = {tuple(c) for c in goal_cells}
    h = _heuristic_to_set(free, np.asarray(goal_cells))
    res = grid.resolution

    dist = {start: 0.0}
    came: dict = {start: None}
    heap = [(h[start], start)]
    closed = set()
    while heap:
        f, cell = heapq.heappop(heap)
        if cell in closed:
            continue
        closed.add(cell)
        if cell in goal_set:
            path = []
            cur = cell
            while cur is not None:
                path.append(cur)
                cur = came[cur]
            return dist[cell], path[::-1]
        cx, cy = cell
        for dx, dy, step in _NEIGHBORS:
            nx, ny = cx + dx, cy + dy
            if not (0 <= nx < grid.width and 0 <= ny < grid.height):
                continue
            if not mask[nx, ny]:
                continue
            if dx and dy and not (mask[cx + dx, cy] and mask[cx, cy + dy]):
                continue
            nd = dist[cell] + step * res
            key = (nx, ny)
            if nd < dist.get(key, math.inf) - 1e-12:
                dist[key] = nd
                came[key] = cell
                heapq.heappush(heap, (nd + h[nx, ny], key))
    raise PlanningFailure("goal region unreachable")


def _goal_cells(query: PathPlanQuery) -> np.ndarray:
    grid = query.free.grid
    gx, gy = grid.cell_centers()
    d = np.hypot(gx - query.target[0], gy - query.target[1])
    ok = (np.abs(d - query.preferred_radius) <= query.band()) & query.free.mask
    return np.argwhere(ok)


def _face(target, x: float, y: float) -> float:
    return math.atan2(target[1] - y, target[0] - x)


def astar_plan(query: PathPlanQuery) -> PlanResult:
    """Among all free cells in the preferred-distance band, reach the one of
    minimal path cost; the placement faces the target."""
    grid = query.free.grid
    goals = _goal_cells(query)
    if len(goals) == 0:
        raise PlanningFailure("no free cell at the preferred distance")
    try:
        start = grid.world_to_grid(query.start.x, query.start.y)
    except ValueError as exc:
        raise PlanningFailure(str(exc)) from exc
    cost, cells = astar_grid(query.free, start, goals)
    path = [grid.grid_to_world(*c) for c in cells]
    x, y = path[-1]
    return PlanResult(
        placement=Pose2D(x, y, _face(query.target, x, y)), path=path, cost=cost
    )


@dataclass(frozen=True)
class RrtConfig:
    max_iters: int = 5000
    steer: float = 0.2  # meters per extension
    # near-radius rule: min(gamma * sqrt(log n / n), steer ceiling disabled);
    # gamma = 2 * sqrt(3 * free_area / pi) is recomputed per map
    sample_attempts: int = 50  # free-space rejection draws per iteration

    def to_dict(self) -> dict:
        return {"max_iters": self.max_iters, "steer": self.steer}


def _segment_free(free: FreeSet, a: np.ndarray, b: np.ndarray) -> bool:
    length = float(np.hypot(*(b - a)))
    n = max(2, int(math.ceil(length / (free.grid.resolution / 2.0))) + 1)
    ts = np.linspace(0.0, 1.0, n)
    pts = a[None, :] + ts[:, None] * (b - a)[None, :]
    return bool(free.contains_points(pts).all())


class _SegmentChecker:
    """Collision test for straight segments, specialized for one free set.
    Both endpoints are assumed inside the (convex) map, so interior samples
    need no bounds check."""

    def __init__(self, free: FreeSet):
        self.mask = free.mask
        self.ox, self.oy = free.grid.origin
        self.inv_res = 1.0 / free.grid.resolution
        self.half_step = free.grid.resolution / 2.0

    def __call__(self, ax, ay, bx, by) -> bool:
        dx, dy = bx - ax, by - ay
        n = int(math.hypot(dx, dy) / self.half_step) + 2
        ts = np.arange(n) * (1.0 / (n - 1))
        ix = np.floor((ax + ts * dx - self.ox) * self.inv_res).astype(np.int64)
        iy = np.floor((ay + ts * dy - self.oy) * self.inv_res).astype(np.int64)
        return bool(self.mask[ix, iy].all())


def rrt_star_plan(
    query: PathPlanQuery, rng: np.random.Generator, config: RrtConfig = RrtConfig()
) -> PlanResult:
    """Standard RRT* (uniform free-space sampling, fixed steer step, shrinking
    near radius, rewiring with cost propagation). Runs the full iteration
    budget and returns the cheapest node inside the goal annulus."""
    free = query.free
    grid = free.grid
    start = np.array([query.start.x, query.start.y])
    if not free.contains_point(*start):
        raise PlanningFailure("start is not in the free set")

    def in_goal(p) -> bool:
        return abs(np.hypot(*(p - query.target)) - query.preferred_radius) <= query.band()

    if in_goal(start):
        return PlanResult(
            placement=Pose2D(start[0], start[1], _face(query.target, *start)),
            path=[tuple(start)],
            cost=0.0,
        )

    area_free = free.mask.sum() * grid.resolution**2
    gamma = 2.0 * math.sqrt(3.0 * area_free / math.pi)
    lo = np.asarray(grid.origin)
    hi = lo + np.array([grid.width, grid.height]) * grid.resolution
    segment_free = _SegmentChecker(free)

    cap = config.max_iters + 1
    pos = np.empty((cap, 2))
    cost = np.empty(cap)
    parent = np.full(cap, -1, dtype=int)
    children: list[list[int]] = [[] for _ in range(cap)]
    pos[0] = start
    cost[0] = 0.0
    n = 1
    goal_nodes: list[int] = []

    for _ in range(config.max_iters):
        sample = None
        for _ in range(config.sample_attempts):
            cand = rng.uniform(lo, hi)
            if free.contains_point(*cand):
                sample = cand
                break
        if sample is None:
            continue

        d2 = ((pos[:n] - sample) ** 2).sum(axis=1)
        nearest = int(d2.argmin())
        delta = sample - pos[nearest]
        dist = math.sqrt(float(d2[nearest]))
        if dist < 1e-9:
            continue
        new = pos[nearest] + delta * min(1.0, config.steer / dist)
        if not free.contains_point(*new):
            continue
        nx, ny = float(new[0]), float(new[1])
        if not segment_free(float(pos[nearest, 0]), float(pos[nearest, 1]), nx, ny):
            continue

        radius = gamma * math.sqrt(math.log(n + 1) / (n + 1))
        nd2 = ((pos[:n] - new) ** 2).sum(axis=1)
        near = np.nonzero(nd2 <= radius**2)[0]
        if nearest not in near:
            near = np.append(near, nearest)
        near_dist = np.sqrt(nd2[near])

        # choose parent: cheapest collision-free connection
        order = np.argsort(cost[near] + near_dist)
        parent_idx = -1
        new_cost = math.inf
        for j in order:
            cand_parent = int(near[j])
            cand_cost = float(cost[cand_parent] + near_dist[j])
            if cand_cost >= new_cost:
                break
            if cand_parent == nearest or segment_free(
                float(pos[cand_parent, 0]), float(pos[cand_parent, 1]), nx, ny
            ):
                parent_idx = cand_parent
                new_cost = cand_cost
                break
        if parent_idx < 0:
            continue

        node = n
        pos[node] = new
        cost[node] = new_cost
        parent[node] = parent_idx
        children[parent_idx].append(node)
        n += 1

        # rewire neighbors through the new node when cheaper
        improvable = np.nonzero(new_cost + near_dist + 1e-12 < cost[near])[0]
        for j in improvable:
            k = int(near[j])
            candidate = new_cost + float(near_dist[j])
            if candidate + 1e-12 < cost[k] and segment_free(
                nx, ny, float(pos[k, 0]), float(pos[k, 1])
            ):
                children[parent[k]].remove(k)
                parent[k] = node
                children[node].append(k)
                cost[k] = candidate
                stack = list(children[k])
                while stack:
                    m = stack.pop()
                    cost[m] = cost[parent[m]] + float(
                        np.hypot(*(pos[m] - pos[parent[m]]))
                    )
                    stack.extend(children[m])

        if in_goal(new):
            goal_nodes.append(node)

    if not goal_nodes:
        raise PlanningFailure(f"no goal-region node after {config.max_iters} iterations")
    best = min(goal_nodes, key=lambda i: cost[i])
    chain = []
    cur = best
    while cur >= 0:
        chain.append(cur)
        cur = int(parent[cur])
    path = [tuple(pos[i]) for i in reversed(chain)]
    x, y = pos[best]
    return PlanResult(
        placement=Pose2D(float(x), float(y), _face(query.target, x, y)),
        path=path,
        cost=float(cost[best]),
    )


# ---------------------------------------------------------------------------
# placement baselines

PLANNERS = ("astar", "rrt_star")


def object_center_target(scene: SceneSpec, object_id: str, setup: TrialSetup | None) -> np.ndarray:
    """True footprint centroid of the (perturbed) target object."""
    obj = scene.object_by_id(object_id)
    if setup is not None:
        obj = obj.perturbed(*setup.perturbations.get(object_id, (0.0, 0.0, 0.0)))
    cells = footprint_cells(scene.base_grid, obj.box)
    centers = np.asarray(scene.base_grid.origin) + (cells + 0.5) * scene.base_grid.resolution
    return centers.mean(axis=0)


def run_planner(
    planner: str,
    query: PathPlanQuery,
    rng: np.random.Generator | None = None,
    rrt_config: RrtConfig = RrtConfig(),
) -> PlanResult:
    if planner == "astar":
        return astar_plan(query)
    if planner == "rrt_star":
        if rng is None:
            raise ValueError("rrt_star needs a random stream")
        return rrt_star_plan(query, rng, rrt_config)
    raise ValueError(f"unknown planner '{planner}' (expected one of {PLANNERS})")


def place_object_center(
    scene: SceneSpec,
    task: TaskSpec,
    setup: TrialSetup,
    planner: str,
    rng: np.random.Generator | None = None,
    rrt_config: RrtConfig = RrtConfig(),
) -> tuple[PlanResult, np.ndarray]:
    """Classical baseline: fixed preferred distance to the object center,
    collision avoidance only."""
    free = compute_free_set(scene.composed_grid(setup))
    target = object_center_target(scene, task.object_id, setup)
    query = PathPlanQuery(
        start=setup.robot_start,
        target=target,
        free=free,
        preferred_radius=task.preferred_radius,
    )
    return run_planner(planner, query, rng, rrt_config), target


def affordance_keypoint(
    scene: SceneSpec,
    task: TaskSpec,
    setup: TrialSetup,
    oracle,
    seed: int,
    kmeans_k: int = 20,
) -> tuple[np.ndarray, dict]:
    """Shared keypoint pipeline (capture, features, cosine k-means, pruning,
    oracle selection); returns the world-frame g and bookkeeping details."""
    depth, mask = synthetic_capture(scene, task.object_id, setup)
    features = synthetic_features(scene, task.object_id, depth, mask, setup)
    clusters = cluster_features(features, k=kmeans_k, seed=derive_seed(seed, "kmeans"))
    world = scene.composed_grid(setup)
    proposals = propose_keypoints(clusters, depth, scene.camera, world)
    g, idx = select_affordance_point(proposals, task, oracle)
    info = {
        "num_proposals": len(proposals),
        "chosen_proposal": idx,
        "clusters": clusters.k,
        "cluster_iterations": clusters.iterations,
    }
    return g, info


def place_affordance_point(
    scene: SceneSpec,
    task: TaskSpec,
    setup: TrialSetup,
    oracle,
    planner: str,
    rng: np.random.Generator | None = None,
    rrt_config: RrtConfig = RrtConfig(),
) -> tuple[PlanResult, np.ndarray, dict]:
    """Semantic-point baseline: the oracle picks g, a classical planner stops
    at the preferred distance from it."""
    g, info = affordance_keypoint(scene, task, setup, oracle, setup.seed)
    free = compute_free_set(scene.composed_grid(setup))
    query = PathPlanQuery(
        start=setup.robot_start,
        target=g,
        free=free,
        preferred_radius=task.preferred_radius,
    )
    return run_planner(planner, query, rng, rrt_config), g, info


# ---------------------------------------------------------------------------
# iterative visual prompting

@dataclass(frozen=True)
class PivotConfig:
    samples_per_iter: int = 20
    iterations: int = 4
    init_sigma: float = 1.0  # meters
    shrink: float = 0.5  # covariance multiplier per iteration
    eig_floor: float = 0.05**2  # covariance eigenvalue floor
    picks: int = 3
    sample_budget_factor: int = 100

    def to_dict(self) -> dict:
        from dataclasses import asdict

        return asdict(self)


@dataclass
class PivotState:
    mean: np.ndarray
    covariance: np.ndarray  # (2, 2) SPD
    iteration: int = 0


@dataclass
class PivotIteration:
    t: int
    mean: list
    covariance: list
    positions: list
    oracle_reply: list


def _clamp_spd(cov: np.ndarray, floor: float) -> np.ndarray:
    vals, vecs = np.linalg.eigh(cov)
    vals = np.clip(vals, floor, None)
    return (vecs * vals) @ vecs.T


def pivot_place(
    start: Pose2D,
    free: FreeSet,
    task: TaskSpec,
    oracle,
    rng: np.random.Generator,
    face_target: np.ndarray,
    config: PivotConfig = PivotConfig(),
    attachment_provider=None,
    context_tags: tuple = FULL_CONTEXT_TAGS,
) -> tuple[Pose2D, list, PivotState]:
    """Iteratively refit a Gaussian placement distribution to the oracle's
    picks: sample, reject to the free set, rank, move the mean to the top
    picks, shrink the covariance. Returns the oracle's final top-1 candidate.
    The two published variants differ only in the attachments supplied via
    `attachment_provider`."""
    state = PivotState(
        mean=np.array([start.x, start.y]),
        covariance=np.eye(2) * config.init_sigma**2,
    )
    records: list[PivotIteration] = []
    final = None
    m = config.samples_per_iter
    for t in range(1, config.iterations + 1):
        chol = np.linalg.cholesky(_clamp_spd(state.covariance, config.eig_floor))
        accepted: list[np.ndarray] = []
        drawn = 0
        budget = config.sample_budget_factor * m
        while len(accepted) < m and drawn < budget:
            z = rng.standard_normal((m, 2))
            chunk = state.mean + z @ chol.T
            drawn += m
            ok = free.contains_points(chunk)
            accepted.extend(chunk[ok])
        if not accepted:
            raise PlanningFailure(
                f"pivot iteration {t}: zero feasible samples within budget"
            )
        positions = np.array(accepted[:m])

        markers = [(i, float(p[0]), float(p[1])) for i, p in enumerate(positions)]
        want = min(config.picks, len(positions))
        attachments = tuple(attachment_provider(markers)) if attachment_provider else ()
        reply = oracle.answer(
            OracleQuery(
                kind=KIND_RANK,
                instruction=task.sub_instruction,
                options=tuple(
                    OracleOption(index=i, position=(x, y)) for i, x, y in markers
                ),
                want=want,
                attachments=attachments,
                nonce=t,
                context_tags=context_tags,
            )
        )
        picks = positions[list(reply.indices)]
        records.append(
            PivotIteration(
                t=t,
                mean=state.mean.tolist(),
                covariance=state.covariance.tolist(),
                positions=positions.tolist(),
                oracle_reply=[int(i) for i in reply.indices],
            )
        )
        state.mean = picks.mean(axis=0)
        state.covariance = _clamp_spd(state.covariance * config.shrink, config.eig_floor)
        state.iteration = t
        final = picks[0]

    placement = Pose2D(
        float(final[0]), float(final[1]), _face(face_target, final[0], final[1])
    )
    return placement, records, state
