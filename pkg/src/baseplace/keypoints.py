"""Affordance-point selection: cluster per-pixel features inside the object
mask, snap cluster centroids to pixels, back-project to 3-D, prune by
proximity, and let the oracle pick the keypoint."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import OracleFailure
from .gridmap import OccupancyGrid
from .oracle import KIND_KEYPOINT, OracleOption, OracleQuery
from .rng import derive_rng
from .scene import CameraModel, backproject_pixels

PRUNE_DISTANCE = 0.08  # meters, 3-D; proposals strictly closer are pruned
MAX_LLOYD_ITERATIONS = 100


@dataclass(frozen=True)
class FeatureGrid:
    """Per-pixel feature vectors plus the object mask. All masked pixels must
    carry finite features of one common dimension."""

    features: np.ndarray  # (H, W, d) float32
    mask: np.ndarray  # (H, W) bool

    def __post_init__(self):
        if self.features.shape[:2] != self.mask.shape:
            raise ValueError("features and mask disagree on image size")
        if self.mask.any() and not np.isfinite(
            self.features[self.mask]
        ).all():
            raise ValueError("masked pixels carry non-finite features")

    @property
    def dim(self) -> int:
        return self.features.shape[2]


@dataclass(frozen=True)
class ClusterResult:
    pixels: np.ndarray  # (N, 2) masked pixel (row, col)
    labels: np.ndarray  # (N,)
    centroids: np.ndarray  # (k, d) unit norm
    features_unit: np.ndarray  # (N, d) unit-normalized masked features
    k: int
    requested_k: int
    iterations: int
    converged: bool
    cost_history: tuple = ()  # cosine cost after each assignment step


@dataclass(frozen=True)
class KeypointProposal:
    pixel: tuple  # (row, col)
    point3d: np.ndarray  # (3,) in the camera's extrinsic frame
    cluster_id: int


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.maximum(norms, 1e-12)


def cosine_cost(x_unit: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    return float((1.0 - (x_unit * centroids[labels]).sum(axis=1)).sum())


def _kmeans_pp_init(x_unit: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x_unit)
    centroids = np.empty((k, x_unit.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = x_unit[first]
    d = 1.0 - x_unit @ centroids[0]
    for j in range(1, k):
        weights = np.maximum(d, 0.0)
        total = weights.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=weights / total))
        centroids[j] = x_unit[idx]
        d = np.minimum(d, 1.0 - x_unit @ centroids[j])
    return centroids


def cluster_features(grid: FeatureGrid, k: int, seed: int) -> ClusterResult:
    """Cosine k-means (features unit-normalized, k-means++ seeding, Lloyd
    iterations capped at 100). If the mask holds fewer pixels than k, k is
    reduced to the pixel count and the reduction is reported in the result."""
    if k < 1:
        raise ValueError("k must be at least 1")
    pixels = np.argwhere(grid.mask)
    n = len(pixels)
    if n == 0:
        raise ValueError("empty mask: nothing to cluster")
    requested_k = k
    k = min(k, n)

    x = grid.features[pixels[:, 0], pixels[:, 1]].astype(np.float64)
    x_unit = _unit_rows(x)
    rng = derive_rng(seed, "kmeans")
    centroids = _kmeans_pp_init(x_unit, k, rng)

    labels = np.full(n, -1, dtype=int)
    iterations = 0
    converged = False
    costs = []
    for iterations in range(1, MAX_LLOYD_ITERATIONS + 1):
        sims = x_unit @ centroids.T
        new_labels = sims.argmax(axis=1)
        if (new_labels == labels).all():
            converged = True
            break
        labels = new_labels
        costs.append(cosine_cost(x_unit, centroids, labels))
        for j in range(k):
            members = x_unit[labels == j]
            if len(members) == 0:
                # reseed an empty cluster to the point farthest from its
                # former centroid
                farthest = int((x_unit @ centroids[j]).argmin())
                centroids[j] = x_unit[farthest]
                continue
            mean = members.sum(axis=0)
            norm = np.linalg.norm(mean)
            if norm > 1e-12:
                centroids[j] = mean / norm
    return ClusterResult(
        pixels=pixels,
        labels=labels,
        centroids=centroids,
        features_unit=x_unit,
        k=k,
        requested_k=requested_k,
        iterations=iterations,
        converged=converged,
        cost_history=tuple(costs),
    )


def propose_keypoints(
    clusters: ClusterResult,
    depth: np.ndarray,
    camera: CameraModel,
    grid: OccupancyGrid,
) -> list[KeypointProposal]:
    """One proposal per cluster: the masked pixel nearest (cosine) to the
    cluster centroid, back-projected to 3-D. Proposals are then filtered
    greedily in cluster-id order, dropping any candidate strictly closer than
    0.08 m (3-D) to an already-kept one; the first proposal always survives.

    Clusters whose pixels all lack finite depth, or whose 3-D point falls
    outside the map, yield no proposal."""
    picked: list[tuple[int, tuple]] = []
    for j in range(clusters.k):
        member_idx = np.nonzero(clusters.labels == j)[0]
        if len(member_idx) == 0:
            continue
        px = clusters.pixels[member_idx]
        finite = np.isfinite(depth[px[:, 0], px[:, 1]])
        if not finite.any():
            continue
        member_idx = member_idx[finite]
        sims = clusters.features_unit[member_idx] @ clusters.centroids[j]
        pick = int(member_idx[sims.argmax()])
        picked.append((j, tuple(int(v) for v in clusters.pixels[pick])))
    if not picked:
        return []

    points = backproject_pixels(camera, depth, np.array([p for _, p in picked]))
    lo = np.asarray(grid.origin)
    hi = lo + np.array([grid.width, grid.height]) * grid.resolution
    raw = [
        KeypointProposal(pixel=pixel, point3d=point, cluster_id=j)
        for (j, pixel), point in zip(picked, points)
        if (lo <= point[:2]).all() and (point[:2] < hi).all()
    ]
    return prune_proposals(raw)


def prune_proposals(proposals) -> list[KeypointProposal]:
    """Greedy proximity filter in the given (cluster-id) order: drop every
    proposal strictly closer than 0.08 m (3-D) to one already kept."""
    kept: list[KeypointProposal] = []
    for prop in proposals:
        if all(
            np.linalg.norm(prop.point3d - q.point3d) >= PRUNE_DISTANCE for q in kept
        ):
            kept.append(prop)
    return kept


def select_affordance_point(proposals, task, oracle) -> tuple[np.ndarray, int]:
    """Ask the oracle to pick one proposal; returns (g, proposal index) where
    g is the proposal's world (x, y). An invalid oracle index is retried once,
    then the trial aborts."""
    if not proposals:
        raise OracleFailure("no keypoint proposals to select from")
    options = tuple(
        OracleOption(index=i, position=(float(p.point3d[0]), float(p.point3d[1])))
        for i, p in enumerate(proposals)
    )
    for nonce in range(2):
        query = OracleQuery(
            kind=KIND_KEYPOINT,
            instruction=task.sub_instruction,
            options=options,
            want=1,
            nonce=nonce,
        )
        reply = oracle.answer(query)
        idx = reply.indices[0]
        if 0 <= idx < len(proposals):
            return proposals[idx].point3d[:2].copy(), int(idx)
    raise OracleFailure("keypoint selection returned an invalid index twice")


def save_features(grid: FeatureGrid, path: str) -> None:
    """Flat little-endian float32 dump plus a `<path>.json` sidecar
    {height, width, dim}."""
    data = np.ascontiguousarray(grid.features, dtype="<f4")
    with open(path, "wb") as f:
        f.write(data.tobytes())
    h, w, d = grid.features.shape
    with open(f"{path}.json", "w", encoding="utf-8") as f:
        json.dump({"height": h, "width": w, "dim": d}, f, sort_keys=True)
        f.write("\n")


def load_features(path: str) -> np.ndarray:
    with open(f"{path}.json", "r", encoding="utf-8") as f:
        meta = json.load(f)
    shape = (meta["height"], meta["width"], meta["dim"])
    with open(path, "rb") as f:
        data = np.frombuffer(f.read(), dtype="<f4")
    return data.reshape(shape).copy()
