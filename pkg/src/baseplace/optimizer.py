"""Affordance-driven coarse-to-fine placement optimization.

Each of T iterations draws candidates from a truncated Gaussian around the
affordance keypoint, scores them by a geometric ring term blended with a
semantic window around the evolving center mu, resamples a small indexed set,
and asks the oracle to rank it. Early iterations move mu (semantic center);
the last one averages the oracle's top picks into the final placement. The
blend exponent alpha follows a sigmoid schedule from semantic-heavy to
geometry-heavy.

All geometry is in the frame of the free set's grid (the robot-local map in
the full pipeline); the caller converts the returned pose to the world frame.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import OracleFailure, TrialAbort
from .gridmap import FreeSet, Pose2D
from .oracle import FULL_CONTEXT_TAGS, KIND_RANK, OracleOption, OracleQuery
from .rng import RNG_NAME

_SAMPLE_CHUNK = 4096  # fixed chunk size keeps the draw sequence reproducible


@dataclass(frozen=True)
class PlannerConfig:
    """Hyperparameters of the base-selection optimizer."""

    n_initial: int = 1000  # candidates scored per iteration
    n_resample: int = 20  # indexed candidates shown to the oracle
    iterations: int = 4
    r_max: float = 1.2  # truncation radius around the keypoint
    r_star: float = 0.7  # preferred working distance
    sigma_sample: float = 1.0  # proposal std deviation (never decays)
    sigma_g: float = 0.1  # geometric window std deviation
    sigma_s_base: float = 0.2  # semantic window std deviation at t=0 ...
    sigma_s_decay: float = 0.8  # ... decaying exponentially per refinement
    alpha_max: float = 0.6
    gamma: float = 2.0  # sigmoid steepness
    delta: float = 0.05  # half-width of the probability-mass window
    top_k: int = 3  # picks used to refine the semantic center
    final_pool: int = 5  # picks averaged into the final placement
    alpha_mode: str = "schedule"  # "schedule" or "fixed"
    alpha_fixed: float = 0.0
    sample_budget_factor: int = 100  # draw budget = factor * n_initial
    sigma_s_floor: float = 1e-4

    def __post_init__(self):
        if self.n_initial < self.n_resample:
            raise ValueError("n_initial must be at least n_resample")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if not (0.0 <= self.alpha_max <= 1.0):
            raise ValueError("alpha_max must lie in [0, 1]")
        if self.alpha_mode not in ("schedule", "fixed"):
            raise ValueError("alpha_mode must be 'schedule' or 'fixed'")

    def alpha(self, t: int) -> float:
        if self.alpha_mode == "fixed":
            return self.alpha_fixed
        return alpha_schedule(t, self)

    def to_dict(self) -> dict:
        from dataclasses import asdict

        return asdict(self)


def alpha_schedule(t: float, config: PlannerConfig) -> float:
    """Sigmoid blend weight: alpha_max / (1 + exp(-gamma (t - T/2)))."""
    return config.alpha_max / (1.0 + math.exp(-config.gamma * (t - config.iterations / 2.0)))


def gaussian_cdf(x, mu: float, sigma: float):
    return 0.5 * (1.0 + special.erf((x - mu) / (sigma * math.sqrt(2.0))))


def window_mass(d, mu: float, sigma: float, delta: float):
    """Probability mass of N(mu, sigma^2) within [d - delta, d + delta].
    Computed via the double-precision erf, far beyond the required 1e-7
    accuracy. Scalar or array d."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    return gaussian_cdf(d + delta, mu, sigma) - gaussian_cdf(d - delta, mu, sigma)


@dataclass
class OptimizerState:
    """t counts completed refinement steps; mu is undefined until the first
    one. sigma_s always equals sigma_s_base * decay^t (floored)."""

    config: PlannerConfig
    t: int = 0
    mu: np.ndarray | None = None

    def __post_init__(self):
        self.sigma_s = max(self.config.sigma_s_base, self.config.sigma_s_floor)


def score_candidates(
    positions: np.ndarray,
    keypoint: np.ndarray,
    state: OptimizerState,
    alpha: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(w_geo, w_sem, w) for an (N, 2) candidate array. w_sem is identically 1
    while the semantic center is undefined."""
    config = state.config
    d_geo = np.hypot(*(positions - keypoint).T)
    w_geo = window_mass(d_geo, config.r_star, config.sigma_g, config.delta)
    if state.mu is None:
        w_sem = np.ones_like(w_geo)
    else:
        d_sem = np.hypot(*(positions - state.mu).T)
        w_sem = window_mass(d_sem, 0.0, state.sigma_s, config.delta)
    w = np.power(w_geo, alpha) * np.power(w_sem, 1.0 - alpha)
    return w_geo, w_sem, w


def score_candidate(x, keypoint, state: OptimizerState, alpha: float):
    """Scalar convenience wrapper around score_candidates."""
    w_geo, w_sem, w = score_candidates(
        np.asarray(x, dtype=float)[None, :], np.asarray(keypoint, dtype=float), state, alpha
    )
    return float(w_geo[0]), float(w_sem[0]), float(w[0])


def draw_candidates(
    keypoint: np.ndarray,
    free: FreeSet,
    config: PlannerConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Exactly n_initial positions from N(keypoint, sigma_sample^2 I),
    rejection-filtered to the truncation disc and the free set. Aborts the
    trial when the budget of sample_budget_factor * n_initial raw draws is
    exhausted first."""
    keypoint = np.asarray(keypoint, dtype=float)
    budget = config.sample_budget_factor * config.n_initial
    accepted = []
    total = 0
    drawn = 0
    while total < config.n_initial and drawn < budget:
        m = min(_SAMPLE_CHUNK, budget - drawn)
        chunk = rng.normal(loc=keypoint, scale=config.sigma_sample, size=(m, 2))
        drawn += m
        ok = np.hypot(*(chunk - keypoint).T) <= config.r_max
        ok &= free.contains_points(chunk)
        kept = chunk[ok]
        if len(kept):
            accepted.append(kept)
            total += len(kept)
    if total < config.n_initial:
        raise TrialAbort(
            "skipped",
            f"no feasible region: {total}/{config.n_initial} samples accepted "
            f"within the {budget}-draw budget",
        )
    return np.concatenate(accepted)[: config.n_initial]


def resample_weighted(
    weights: np.ndarray, config: PlannerConfig, rng: np.random.Generator
) -> tuple[np.ndarray, bool]:
    """n_resample i.i.d. draws from p_i = w_i / sum(w). Returns (candidate
    indices in marker order 0..n_resample-1, uniform-fallback flag). All-zero
    weights fall back to the uniform distribution."""
    total = weights.sum()
    fallback = not (total > 0.0)
    if fallback:
        p = np.full(len(weights), 1.0 / len(weights))
    else:
        p = weights / total
    idx = rng.choice(len(weights), size=config.n_resample, replace=True, p=p)
    return idx, fallback


def refine_step(ranked: np.ndarray, state: OptimizerState) -> None:
    """Move the semantic center to the mean of the oracle's top picks and
    decay the semantic window."""
    ranked = np.asarray(ranked, dtype=float)
    state.mu = ranked.mean(axis=0)
    state.t += 1
    config = state.config
    state.sigma_s = max(
        config.sigma_s_base * config.sigma_s_decay**state.t, config.sigma_s_floor
    )


def finalize(ranked: np.ndarray) -> np.ndarray:
    """Final selection from exactly 5 rank-ordered positions (best first):
    drop the two furthest from their mean (ties drop the worse-ranked) and
    average the remaining three."""
    ranked = np.asarray(ranked, dtype=float)
    if ranked.shape != (5, 2):
        raise ValueError("finalize expects exactly 5 positions")
    center = ranked.mean(axis=0)
    dist = np.hypot(*(ranked - center).T)
    drop_order = sorted(range(5), key=lambda i: (-dist[i], -i))
    dropped = set(drop_order[:2])
    kept = [i for i in range(5) if i not in dropped]
    return ranked[kept].mean(axis=0)


# ---------------------------------------------------------------------------
# trace

TRACE_SCHEMA = 1


@dataclass
class IterationRecord:
    t: int
    alpha: float
    sigma_s: float
    mu: list | None
    positions: list  # n_initial [x, y]
    w_geo: list
    w_sem: list
    w: list
    p: list
    resampled: list  # marker m -> candidate index into positions
    oracle_reply: list  # marker indices, best first
    uniform_fallback: bool = False

    def marker_positions(self) -> list:
        return [
            (m, self.positions[c][0], self.positions[c][1])
            for m, c in enumerate(self.resampled)
        ]

    def to_dict(self) -> dict:
        from dataclasses import asdict

        return asdict(self)


@dataclass
class PlanTrace:
    """Full per-trial record: reproducibility metadata, per-iteration arrays,
    and the outcome. Positions inside `iterations`, `context`, and
    `final_local` are in the planning (robot-local) frame anchored by `frame`;
    `final_world` is the placement in the world frame."""

    schema: int = TRACE_SCHEMA
    method: str = ""
    scene_name: str = ""
    scene_path: str = ""  # lets the render command recompose the world
    task_name: str = ""
    seed: int = 0
    rng_name: str = RNG_NAME
    config: dict = field(default_factory=dict)
    oracle_config: dict = field(default_factory=dict)
    setup: dict | None = None
    frame: dict | None = None
    local_grid: dict | None = None
    context: dict | None = None
    keypoint: list | None = None
    iterations: list = field(default_factory=list)
    path: list = field(default_factory=list)  # baseline planners: waypoints
    final_local: dict | None = None
    final_world: dict | None = None
    evaluation: dict | None = None
    events: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)  # method-specific payloads

    def to_dict(self) -> dict:
        out = {
            "schema": self.schema,
            "method": self.method,
            "scene_name": self.scene_name,
            "scene_path": self.scene_path,
            "task_name": self.task_name,
            "seed": self.seed,
            "rng_name": self.rng_name,
            "config": self.config,
            "oracle_config": self.oracle_config,
            "setup": self.setup,
            "frame": self.frame,
            "local_grid": self.local_grid,
            "context": self.context,
            "keypoint": self.keypoint,
            "iterations": [it.to_dict() for it in self.iterations],
            "path": self.path,
            "final_local": self.final_local,
            "final_world": self.final_world,
            "evaluation": self.evaluation,
            "events": self.events,
            "extra": self.extra,
        }
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def sha256(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json())
            f.write("\n")

    @classmethod
    def from_dict(cls, doc: dict) -> "PlanTrace":
        iterations = [IterationRecord(**it) for it in doc.get("iterations", [])]
        kwargs = {k: v for k, v in doc.items() if k != "iterations"}
        return cls(iterations=iterations, **kwargs)

    @classmethod
    def load(cls, path) -> "PlanTrace":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


# ---------------------------------------------------------------------------
# main loop

def optimize(
    context,
    free: FreeSet,
    task,
    oracle,
    config: PlannerConfig,
    rng: np.random.Generator,
    attachment_provider=None,
    context_tags: tuple = FULL_CONTEXT_TAGS,
) -> tuple[Pose2D, PlanTrace]:
    """Run the full T-iteration loop. `context` must carry the keypoint (g)
    and centroid; the returned pose is in the grid frame, oriented toward the
    footprint centroid. `attachment_provider(markers)` supplies query images
    for oracles that consume them."""
    if context.keypoint is None:
        raise ValueError("context.keypoint must be set before optimization")
    g = np.asarray(context.keypoint, dtype=float)
    state = OptimizerState(config=config)
    trace = PlanTrace(config=config.to_dict())
    placement_xy = None

    for t in range(1, config.iterations + 1):
        alpha = config.alpha(t)
        positions = draw_candidates(g, free, config, rng)
        w_geo, w_sem, w = score_candidates(positions, g, state, alpha)
        resampled, fallback = resample_weighted(w, config, rng)
        if fallback:
            trace.events.append(f"iteration {t}: all weights zero, uniform resampling")
        total = w.sum()
        p = (w / total) if total > 0 else np.full(len(w), 1.0 / len(w))

        markers = [
            (m, float(positions[c][0]), float(positions[c][1]))
            for m, c in enumerate(resampled)
        ]
        want = config.top_k if t < config.iterations else config.final_pool
        options = tuple(
            OracleOption(index=m, position=(x, y)) for m, x, y in markers
        )
        attachments = tuple(attachment_provider(markers)) if attachment_provider else ()
        reply = oracle.answer(
            OracleQuery(
                kind=KIND_RANK,
                instruction=task.sub_instruction,
                options=options,
                want=want,
                attachments=attachments,
                nonce=t,
                context_tags=context_tags,
            )
        )
        valid = {m for m, _, _ in markers}
        if len(reply.indices) != want or any(i not in valid for i in reply.indices):
            raise OracleFailure(
                f"ranking reply {reply.indices!r} invalid for {want} of {len(markers)}"
            )
        ranked_positions = np.array(
            [positions[resampled[m]] for m in reply.indices], dtype=float
        )

        trace.iterations.append(
            IterationRecord(
                t=t,
                alpha=float(alpha),
                sigma_s=float(state.sigma_s),
                mu=None if state.mu is None else [float(v) for v in state.mu],
                positions=positions.tolist(),
                w_geo=w_geo.tolist(),
                w_sem=w_sem.tolist(),
                w=w.tolist(),
                p=p.tolist(),
                resampled=[int(i) for i in resampled],
                oracle_reply=[int(i) for i in reply.indices],
                uniform_fallback=bool(fallback),
            )
        )

        if t < config.iterations:
            refine_step(ranked_positions[: config.top_k], state)
        else:
            placement_xy = finalize(ranked_positions[: config.final_pool])

    heading = math.atan2(
        context.centroid[1] - placement_xy[1], context.centroid[0] - placement_xy[0]
    )
    placement = Pose2D(float(placement_xy[0]), float(placement_xy[1]), heading)
    trace.final_local = {"x": placement.x, "y": placement.y, "theta": placement.theta}
    return placement, trace
