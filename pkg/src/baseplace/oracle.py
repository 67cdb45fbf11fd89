"""Semantic-oracle abstraction standing in for a vision-language model.

Three query kinds share one interface: approach-direction selection,
affordance-keypoint selection, and candidate ranking. Two implementations:

  * ScriptedOracle: deterministic stand-in driven by scene ground truth with
    a configurable corruption rate. It ignores image attachments by design;
    its reply is a pure function of (query, ground truth, config seed, trial
    seed) -- repeated queries must carry distinct nonces to decorrelate.
  * HttpOracle: generic JSON-over-HTTP client that ships the rendered rasters
    and a text prompt, and parses a final "ANSWER: ..." line.
"""

from __future__ import annotations

import base64
import io
import math
import os
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import OracleFailure, TrialAbort
from .gridmap import wrap_angle
from .rng import derive_rng
from .scene import GroundTruth

KIND_DIRECTION = "direction"
KIND_KEYPOINT = "keypoint"
KIND_RANK = "rank_candidates"

UNCERTAIN = -1  # "none of the above"; meaningful only for direction queries

DIRECTION_VOTES = 3

# overlay context a query claims to expose to the oracle; the default is the
# full projection (queries that hide overlays say so explicitly)
TAG_MAP = "map"
TAG_FOOTPRINT = "footprint"
TAG_ARROWS = "arrows"
TAG_FAN = "fan"
FULL_CONTEXT_TAGS = (TAG_MAP, TAG_FOOTPRINT, TAG_ARROWS, TAG_FAN)


@dataclass(frozen=True)
class Attachment:
    name: str
    image: np.ndarray  # (H, W, 3) uint8


@dataclass(frozen=True)
class OracleOption:
    index: int
    bearing: float | None = None  # direction queries: world bearing of the arrow
    position: tuple | None = None  # keypoint/rank queries: world (x, y)


@dataclass(frozen=True)
class OracleQuery:
    kind: str
    instruction: str
    options: tuple
    want: int
    attachments: tuple = ()
    nonce: int = 0  # decorrelates repeated queries within a trial
    context_tags: tuple = FULL_CONTEXT_TAGS  # overlays visible to the oracle

    def __post_init__(self):
        if self.kind not in (KIND_DIRECTION, KIND_KEYPOINT, KIND_RANK):
            raise ValueError(f"unknown query kind '{self.kind}'")
        if not self.options:
            raise ValueError("query options must be non-empty")
        if not (1 <= self.want <= len(self.options)):
            raise ValueError("want must be between 1 and the option count")

    def option_indices(self) -> list[int]:
        return [opt.index for opt in self.options]


@dataclass(frozen=True)
class OracleReply:
    indices: tuple
    raw: str = ""


@dataclass(frozen=True)
class ScriptedOracleConfig:
    noise_epsilon: float = 0.0  # per-query corruption probability
    seed: int = 0
    fan_bonus: float = 10.0  # utility reward for candidates inside the true fan
    distance_weight: float = 1.0  # penalty per meter of working-distance error
    distance_resolution: float = 0.75  # spatial coarseness of the judge (m)

    def __post_init__(self):
        if not (0.0 <= self.noise_epsilon < 1.0):
            raise ValueError("noise_epsilon must be in [0, 1)")
        if self.distance_resolution < 0.0:
            raise ValueError("distance_resolution must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "kind": "scripted",
            "noise_epsilon": self.noise_epsilon,
            "seed": self.seed,
            "fan_bonus": self.fan_bonus,
            "distance_weight": self.distance_weight,
            "distance_resolution": self.distance_resolution,
        }


class ScriptedOracle:
    """Ground-truth-driven stand-in for a coarse semantic judge.

    Direction: nearest arrow to the true approach bearing. Keypoint: proposal
    nearest the true keypoint. Ranking: sort by the hidden utility

        u(x) = fan_bonus * [x inside the true approach fan]
               - distance_weight * bucket(| ||x - keypoint|| - r* |)

    where bucket() floors the working-distance error to multiples of
    distance_resolution: the judge knows the right side of the object and a
    workable distance band, but has deliberately limited spatial precision
    (ties rank by option index). The fan term applies only when the query's
    context_tags claim the approach-region overlay is visible; queries
    stripped of the projection lose that signal.

    Corruption: with probability noise_epsilon a direction/keypoint answer is
    resampled uniformly (directions include -1); a ranking suffers one
    left-to-right pass of adjacent swaps, each with probability noise_epsilon.
    """

    def __init__(
        self,
        truth: GroundTruth,
        config: ScriptedOracleConfig,
        trial_seed: int,
        fan_half_angle: float = math.pi / 3,
        preferred_radius: float = 0.7,
    ):
        self.truth = truth
        self.config = config
        self.trial_seed = trial_seed
        self.fan_half_angle = fan_half_angle
        self.preferred_radius = preferred_radius

    def _rng(self, query: OracleQuery) -> np.random.Generator:
        return derive_rng(self.config.seed, self.trial_seed, query.kind, query.nonce)

    def _in_fan(self, position) -> bool:
        dx = position[0] - self.truth.centroid[0]
        dy = position[1] - self.truth.centroid[1]
        if dx == 0.0 and dy == 0.0:
            return True
        off = wrap_angle(math.atan2(dy, dx) - self.truth.direction)
        return abs(off) <= self.fan_half_angle

    def utility(self, position, fan_visible: bool = True) -> float:
        kp = self.truth.keypoint_xy
        dist = math.hypot(position[0] - kp[0], position[1] - kp[1])
        error = abs(dist - self.preferred_radius)
        q = self.config.distance_resolution
        if q > 0.0:
            error = math.floor(error / q) * q
        bonus = 0.0
        if fan_visible and self._in_fan(position):
            bonus = self.config.fan_bonus
        return bonus - self.config.distance_weight * error

    def answer(self, query: OracleQuery) -> OracleReply:
        rng = self._rng(query)
        if query.kind == KIND_DIRECTION:
            best = min(
                query.options,
                key=lambda o: (abs(wrap_angle(o.bearing - self.truth.direction)), o.index),
            ).index
            if rng.random() < self.config.noise_epsilon:
                pool = query.option_indices() + [UNCERTAIN]
                best = int(pool[rng.integers(len(pool))])
            return OracleReply(indices=(best,))

        if query.kind == KIND_KEYPOINT:
            kp = self.truth.keypoint_xy
            best = min(
                query.options,
                key=lambda o: (
                    math.hypot(o.position[0] - kp[0], o.position[1] - kp[1]),
                    o.index,
                ),
            ).index
            if rng.random() < self.config.noise_epsilon:
                pool = query.option_indices()
                best = int(pool[rng.integers(len(pool))])
            return OracleReply(indices=(best,))

        fan_visible = TAG_FAN in query.context_tags
        ranked = sorted(
            query.options,
            key=lambda o: (-self.utility(o.position, fan_visible), o.index),
        )
        order = [o.index for o in ranked]
        for i in range(len(order) - 1):
            if rng.random() < self.config.noise_epsilon:
                order[i], order[i + 1] = order[i + 1], order[i]
        return OracleReply(indices=tuple(order[: query.want]))


def majority_vote(votes) -> int:
    """Strict mode of three direction votes; anything else aborts the trial."""
    votes = list(votes)
    if len(votes) != DIRECTION_VOTES:
        raise ValueError(f"majority_vote needs exactly {DIRECTION_VOTES} votes")
    counts: dict[int, int] = {}
    for v in votes:
        counts[v] = counts.get(v, 0) + 1
    value, count = max(counts.items(), key=lambda kv: kv[1])
    if count < 2:
        raise TrialAbort("skipped", "no direction majority")
    if value == UNCERTAIN:
        raise TrialAbort("skipped", "direction vote resolved to 'uncertain'")
    return value


# ---------------------------------------------------------------------------
# HTTP client

_PROMPT_FILES = {
    KIND_DIRECTION: "direction_selection.txt",
    KIND_KEYPOINT: "keypoint_selection.txt",
    KIND_RANK: "base_selection.txt",
}

_ANSWER_RE = re.compile(r"^\s*ANSWER:\s*(.+?)\s*$", re.MULTILINE)


@dataclass(frozen=True)
class HttpOracleConfig:
    url: str
    model: str = "gpt-4o"
    timeout: float = 30.0
    max_retries: int = 1
    token_env: str = "BASEPLACE_ORACLE_TOKEN"
    pool_size: int = 4

    def to_dict(self) -> dict:
        return {
            "kind": "http",
            "url": self.url,
            "model": self.model,
            "timeout": self.timeout,
            "max_retries": self.max_retries,
        }


def load_prompt_template(kind: str) -> str:
    from importlib import resources

    name = _PROMPT_FILES[kind]
    return (
        resources.files("baseplace").joinpath("data", "prompts", name).read_text("utf-8")
    )


def build_prompt(query: OracleQuery) -> str:
    template = load_prompt_template(query.kind)
    indices = ", ".join(str(i) for i in query.option_indices())
    return template.format(
        instruction=query.instruction,
        num_options=len(query.options),
        option_indices=indices,
        want=query.want,
    )


def _encode_png(image: np.ndarray) -> str:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(image).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def parse_answer(text: str, query: OracleQuery) -> tuple:
    """Extract the final `ANSWER: i[, j, k]` line and validate it against the
    query's options. Raises ValueError on any malformed or out-of-range reply."""
    matches = _ANSWER_RE.findall(text)
    if not matches:
        raise ValueError("reply contains no ANSWER line")
    payload = matches[-1].strip()
    if payload.lower() in ("none", "uncertain", "-1"):
        if query.kind != KIND_DIRECTION:
            raise ValueError("'none' is only valid for direction queries")
        return (UNCERTAIN,)
    try:
        indices = tuple(int(tok) for tok in payload.replace(" ", "").split(","))
    except ValueError as exc:
        raise ValueError(f"unparseable ANSWER payload '{payload}'") from exc
    if len(indices) != query.want:
        raise ValueError(f"expected {query.want} indices, got {len(indices)}")
    valid = set(query.option_indices())
    for idx in indices:
        if idx not in valid:
            raise ValueError(f"index {idx} outside the offered options")
    if len(set(indices)) != len(indices):
        raise ValueError("duplicate indices in ANSWER")
    return indices


class HttpOracle:
    """POSTs {schema, model, prompt, images, want} as JSON and expects
    {"text": "..."} back. Bounded timeout and one retry; failures abort the
    trial rather than blocking it."""

    def __init__(self, config: HttpOracleConfig):
        import requests

        self.config = config
        self.session = requests.Session()
        adapter = requests.adapters.HTTPAdapter(
            pool_connections=config.pool_size, pool_maxsize=config.pool_size
        )
        self.session.mount("http://", adapter)
        self.session.mount("https://", adapter)
        self.log: list[dict] = []

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.config.token_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def answer(self, query: OracleQuery) -> OracleReply:
        import requests

        payload = {
            "schema": 1,
            "model": self.config.model,
            "prompt": build_prompt(query),
            "images": [
                {"name": att.name, "png_base64": _encode_png(att.image)}
                for att in query.attachments
            ],
            "want": query.want,
        }
        last_error = "no attempt made"
        for _ in range(self.config.max_retries + 1):
            try:
                resp = self.session.post(
                    self.config.url,
                    json=payload,
                    headers=self._headers(),
                    timeout=self.config.timeout,
                )
                resp.raise_for_status()
                text = resp.json()["text"]
                indices = parse_answer(text, query)
            except (requests.RequestException, ValueError, KeyError) as exc:
                last_error = str(exc)
                continue
            self.log.append({"kind": query.kind, "nonce": query.nonce, "raw": text})
            return OracleReply(indices=indices, raw=text)
        raise OracleFailure(f"{query.kind} query failed after retries: {last_error}")
