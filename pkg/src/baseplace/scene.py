"""Synthetic worlds, tasks, seeded trial randomization, and depth capture.

A scene is a JSON document (schema 1): a base occupancy map (wall rectangles
or a PGM reference), a list of 2.5-D box objects with ground-truth affordance
annotations, one pinhole camera, and randomization ranges. Ground-truth fields
(gt_keypoint, gt_direction) are consumed only by the scripted oracle and the
success model, never by the planner.

The synthetic capture ray-casts the object boxes (walls are map-only and do
not occlude). Depth is the Euclidean distance along the unit pixel ray to the
first box surface hit, with +inf for misses.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import raster
from .gridmap import FREE, OCCUPIED, OccupancyGrid, Pose2D, compute_free_set, wrap_angle
from .rng import derive_rng

SCHEMA_VERSION = 1


class SceneError(ValueError):
    """Scene/task document failed schema or geometric validation."""


class RandomizationError(RuntimeError):
    """No valid trial configuration found within the attempt budget."""


def _require(doc: dict, name: str, kind, ctx: str):
    if name not in doc:
        raise SceneError(f"{ctx}: missing field '{name}'")
    value = doc[name]
    if kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise SceneError(f"{ctx}: field '{name}' must be a number")
        return float(value)
    if not isinstance(value, kind):
        raise SceneError(f"{ctx}: field '{name}' must be {kind.__name__}")
    return value


def _vector(doc: dict, name: str, n: int, ctx: str) -> np.ndarray:
    value = _require(doc, name, list, ctx)
    if len(value) != n or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        raise SceneError(f"{ctx}: field '{name}' must be a list of {n} numbers")
    return np.array(value, dtype=float)


@dataclass(frozen=True, eq=False)
class Box:
    """Yawed box: axis-aligned in z, rotated by yaw in the xy plane.
    extents are full side lengths."""

    center: np.ndarray  # (3,)
    extents: np.ndarray  # (3,)
    yaw: float

    def half(self) -> np.ndarray:
        return self.extents / 2.0

    def to_box_frame(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float) - self.center
        c, s = math.cos(-self.yaw), math.sin(-self.yaw)
        out = pts.copy()
        out[..., 0] = c * pts[..., 0] - s * pts[..., 1]
        out[..., 1] = s * pts[..., 0] + c * pts[..., 1]
        return out

    def contains(self, point: np.ndarray, tol: float = 1e-6) -> bool:
        local = np.abs(self.to_box_frame(point))
        return bool((local <= self.half() + tol).all())

    def footprint_corners(self) -> np.ndarray:
        hx, hy = self.half()[0], self.half()[1]
        corners = np.array([[hx, hy], [hx, -hy], [-hx, -hy], [-hx, hy]])
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        rot = np.array([[c, -s], [s, c]])
        return corners @ rot.T + self.center[:2]

    def shifted(self, dx: float, dy: float, dyaw: float) -> "Box":
        return Box(
            center=self.center + np.array([dx, dy, 0.0]),
            extents=self.extents,
            yaw=wrap_angle(self.yaw + dyaw),
        )


@dataclass(frozen=True, eq=False)
class SceneObject:
    id: str
    box: Box
    gt_keypoint: np.ndarray  # (3,) world
    gt_direction: float  # world bearing of the preferred approach
    direction_constrained: bool
    randomize: bool = True
    feature_seed: int = 0

    def perturbed(self, dx: float, dy: float, dyaw: float) -> "SceneObject":
        """Rigidly move the object: the keypoint and approach direction
        rotate about the box center together with the box."""
        c, s = math.cos(dyaw), math.sin(dyaw)
        rel = self.gt_keypoint - self.box.center
        kp = self.box.center + np.array(
            [c * rel[0] - s * rel[1] + dx, s * rel[0] + c * rel[1] + dy, rel[2]]
        )
        return SceneObject(
            id=self.id,
            box=self.box.shifted(dx, dy, dyaw),
            gt_keypoint=kp,
            gt_direction=wrap_angle(self.gt_direction + dyaw),
            direction_constrained=self.direction_constrained,
            randomize=self.randomize,
            feature_seed=self.feature_seed,
        )


@dataclass(frozen=True, eq=False)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray  # (3,3) camera-to-world
    translation: np.ndarray  # (3,) camera center in world

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise SceneError("camera: fx and fy must be positive")
        r = self.rotation
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-6) or not math.isclose(
            float(np.linalg.det(r)), 1.0, abs_tol=1e-6
        ):
            raise SceneError("camera: rotation must be orthonormal with det +1")

    def pixel_rays(self) -> np.ndarray:
        """(H, W, 3) unit ray directions in the camera frame (+z optical axis,
        +x image right, +y image down). Pixel (u, v) casts through image
        coordinates exactly (u, v). Cached per camera."""
        cached = self.__dict__.get("_rays")
        if cached is not None:
            return cached
        u = np.arange(self.width, dtype=float)
        v = np.arange(self.height, dtype=float)
        uu, vv = np.meshgrid(u, v, indexing="xy")
        d = np.stack(
            [(uu - self.cx) / self.fx, (vv - self.cy) / self.fy, np.ones_like(uu)],
            axis=-1,
        )
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        d.flags.writeable = False
        self.__dict__["_rays"] = d
        return d

    def rays_world(self) -> tuple[np.ndarray, np.ndarray]:
        """Camera center and (H, W, 3) unit ray directions in the world frame."""
        d = self.pixel_rays()
        return self.translation, d @ self.rotation.T

    def in_frame(self, pose: Pose2D) -> "CameraModel":
        """Re-express the extrinsics in `pose`'s frame (e.g. the robot base
        frame), leaving intrinsics untouched."""
        c, s = math.cos(-pose.theta), math.sin(-pose.theta)
        rz = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        t = self.translation - np.array([pose.x, pose.y, 0.0])
        return CameraModel(
            fx=self.fx, fy=self.fy, cx=self.cx, cy=self.cy,
            width=self.width, height=self.height,
            rotation=rz @ self.rotation, translation=rz @ t,
        )

    def project(self, points: np.ndarray) -> np.ndarray:
        """World points (N, 3) to pixel coordinates (N, 2); NaN behind camera."""
        pts = (np.asarray(points, dtype=float) - self.translation) @ self.rotation
        uv = np.full((len(pts), 2), np.nan)
        ok = pts[:, 2] > 1e-9
        uv[ok, 0] = self.fx * pts[ok, 0] / pts[ok, 2] + self.cx
        uv[ok, 1] = self.fy * pts[ok, 1] / pts[ok, 2] + self.cy
        return uv


def camera_look_at(eye, target, fx, fy, cx, cy, width, height) -> CameraModel:
    """Author a camera at `eye` whose optical axis points at `target`."""
    eye = np.asarray(eye, dtype=float)
    z = np.asarray(target, dtype=float) - eye
    norm = np.linalg.norm(z)
    if norm < 1e-9:
        raise SceneError("camera: eye and target coincide")
    z = z / norm
    up = np.array([0.0, 0.0, 1.0])
    x = np.cross(z, up)
    if np.linalg.norm(x) < 1e-9:
        raise SceneError("camera: optical axis may not be vertical")
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    rot = np.stack([x, y, z], axis=1)
    return CameraModel(fx=fx, fy=fy, cx=cx, cy=cy, width=width, height=height,
                       rotation=rot, translation=eye)


@dataclass(frozen=True)
class TaskSpec:
    object_id: str
    sub_instruction: str
    preferred_radius: float = 0.7
    reach_tolerance: float = 0.25
    approach_half_angle: float = math.pi / 3

    def __post_init__(self):
        if self.preferred_radius <= 0:
            raise SceneError("task: preferred_radius must be positive")
        if not (0.0 < self.approach_half_angle <= math.pi):
            raise SceneError("task: approach_half_angle must be in (0, pi]")


@dataclass(frozen=True)
class Randomization:
    position_range: float = 0.12  # +-meters, uniform per axis (non-paper default)
    yaw_range: float = 0.25  # +-radians
    start_radius: tuple[float, float] = (0.9, 1.5)  # coarse-waypoint annulus


@dataclass(frozen=True, eq=False)
class SceneSpec:
    name: str
    base_grid: OccupancyGrid
    objects: tuple[SceneObject, ...]
    camera: CameraModel
    randomization: Randomization = field(default_factory=Randomization)

    def object_by_id(self, object_id: str) -> SceneObject:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise SceneError(f"scene '{self.name}': no object with id '{object_id}'")

    def perturbed_objects(self, setup: "TrialSetup | None"):
        if setup is None:
            return self.objects
        out = []
        for obj in self.objects:
            dx, dy, dyaw = setup.perturbations.get(obj.id, (0.0, 0.0, 0.0))
            out.append(obj.perturbed(dx, dy, dyaw))
        return tuple(out)

    def composed_grid(self, setup: "TrialSetup | None" = None) -> OccupancyGrid:
        """Base map with every (perturbed) object footprint stamped Occupied."""
        cells = self.base_grid.cells.copy()
        for obj in self.perturbed_objects(setup):
            fp = footprint_cells(self.base_grid, obj.box)
            if len(fp):
                cells[fp[:, 0], fp[:, 1]] = OCCUPIED
        return self.base_grid.with_cells(cells)


@dataclass(frozen=True)
class TrialSetup:
    seed: int
    robot_start: Pose2D
    perturbations: dict  # object id -> (dx, dy, dyaw)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "robot_start": {
                "x": self.robot_start.x,
                "y": self.robot_start.y,
                "theta": self.robot_start.theta,
            },
            "perturbations": {
                k: list(v) for k, v in sorted(self.perturbations.items())
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TrialSetup":
        return cls(
            seed=doc["seed"],
            robot_start=Pose2D(**doc["robot_start"]),
            perturbations={k: tuple(v) for k, v in doc["perturbations"].items()},
        )


def footprint_cells(grid: OccupancyGrid, box: Box) -> np.ndarray:
    """(N, 2) indices of cells whose center lies inside the box footprint."""
    corners = box.footprint_corners()
    res = grid.resolution
    lo = np.floor((corners.min(axis=0) - np.asarray(grid.origin)) / res).astype(int)
    hi = np.ceil((corners.max(axis=0) - np.asarray(grid.origin)) / res).astype(int)
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, [grid.width, grid.height])
    if (hi <= lo).any():
        return np.empty((0, 2), dtype=int)
    ixs = np.arange(lo[0], hi[0])
    iys = np.arange(lo[1], hi[1])
    gx, gy = np.meshgrid(ixs, iys, indexing="ij")
    centers = np.stack(
        [
            grid.origin[0] + (gx.ravel() + 0.5) * res,
            grid.origin[1] + (gy.ravel() + 0.5) * res,
        ],
        axis=1,
    )
    local = box.to_box_frame(np.concatenate([centers, np.zeros((len(centers), 1))], axis=1))
    inside = (np.abs(local[:, 0]) <= box.half()[0]) & (np.abs(local[:, 1]) <= box.half()[1])
    return np.stack([gx.ravel()[inside], gy.ravel()[inside]], axis=1)


# ---------------------------------------------------------------------------
# document loading

def _load_map(doc: dict, base_dir: str | None) -> OccupancyGrid:
    ctx = "scene.map"
    if "pgm" in doc:
        from .gridmap import load_pgm
        import os

        path = doc["pgm"]
        if base_dir is not None:
            path = os.path.join(base_dir, path)
        return load_pgm(path)
    width = _require(doc, "width", int, ctx)
    height = _require(doc, "height", int, ctx)
    resolution = _require(doc, "resolution", float, ctx)
    origin = _vector(doc, "origin", 2, ctx)
    cells = np.full((width, height), FREE, dtype=np.uint8)
    for i, wall in enumerate(doc.get("walls", [])):
        lo = _vector(wall, "min", 2, f"{ctx}.walls[{i}]")
        hi = _vector(wall, "max", 2, f"{ctx}.walls[{i}]")
        if (hi <= lo).any():
            raise SceneError(f"{ctx}.walls[{i}]: max must exceed min")
        a = np.clip(np.floor((lo - origin) / resolution).astype(int), 0, [width, height])
        b = np.clip(np.ceil((hi - origin) / resolution).astype(int), 0, [width, height])
        cells[a[0]:b[0], a[1]:b[1]] = OCCUPIED
    return OccupancyGrid(cells, resolution, tuple(origin))


def _load_object(doc: dict, idx: int) -> SceneObject:
    ctx = f"scene.objects[{idx}]"
    obj_id = _require(doc, "id", str, ctx)
    box_doc = _require(doc, "box", dict, ctx)
    box = Box(
        center=_vector(box_doc, "center", 3, f"{ctx}.box"),
        extents=_vector(box_doc, "extents", 3, f"{ctx}.box"),
        yaw=_require(box_doc, "yaw", float, f"{ctx}.box"),
    )
    if (box.extents <= 0).any():
        raise SceneError(f"{ctx}: object '{obj_id}' has non-positive extents")
    obj = SceneObject(
        id=obj_id,
        box=box,
        gt_keypoint=_vector(doc, "gt_keypoint", 3, ctx),
        gt_direction=_require(doc, "gt_direction", float, ctx),
        direction_constrained=_require(doc, "direction_constrained", bool, ctx),
        randomize=bool(doc.get("randomize", True)),
        feature_seed=int(doc.get("feature_seed", 0)),
    )
    if not box.contains(obj.gt_keypoint, tol=1e-6):
        raise SceneError(
            f"{ctx}: object '{obj_id}' gt_keypoint lies outside its box"
        )
    return obj


def load_scene(doc: dict, base_dir: str | None = None) -> SceneSpec:
    """Validate a scene document; diagnostics name the offending field/object."""
    if not isinstance(doc, dict):
        raise SceneError("scene: document must be a JSON object")
    if doc.get("schema") != SCHEMA_VERSION:
        raise SceneError("scene: missing or unsupported 'schema' (expected 1)")
    name = _require(doc, "name", str, "scene")
    grid = _load_map(_require(doc, "map", dict, "scene"), base_dir)
    objects = tuple(
        _load_object(obj_doc, i)
        for i, obj_doc in enumerate(_require(doc, "objects", list, "scene"))
    )
    ids = [o.id for o in objects]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise SceneError(f"scene: duplicate object id(s) {dup}")
    lo = np.asarray(grid.origin)
    hi = lo + np.array([grid.width, grid.height]) * grid.resolution
    for obj in objects:
        corners = obj.box.footprint_corners()
        if (corners < lo).any() or (corners > hi).any():
            raise SceneError(f"scene: object '{obj.id}' footprint outside map bounds")
    cam_doc = _require(doc, "camera", dict, "scene")
    camera = CameraModel(
        fx=_require(cam_doc, "fx", float, "scene.camera"),
        fy=_require(cam_doc, "fy", float, "scene.camera"),
        cx=_require(cam_doc, "cx", float, "scene.camera"),
        cy=_require(cam_doc, "cy", float, "scene.camera"),
        width=_require(cam_doc, "width", int, "scene.camera"),
        height=_require(cam_doc, "height", int, "scene.camera"),
        rotation=np.array(_require(cam_doc, "rotation", list, "scene.camera"), dtype=float).reshape(3, 3),
        translation=_vector(cam_doc, "translation", 3, "scene.camera"),
    )
    rand_doc = doc.get("randomization", {})
    randomization = Randomization(
        position_range=float(rand_doc.get("position_range", 0.12)),
        yaw_range=float(rand_doc.get("yaw_range", 0.25)),
        start_radius=tuple(rand_doc.get("start_radius", (0.9, 1.5))),
    )
    return SceneSpec(name=name, base_grid=grid, objects=objects, camera=camera,
                     randomization=randomization)


def load_scene_file(path: str) -> SceneSpec:
    import os

    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    return load_scene(doc, base_dir=os.path.dirname(os.path.abspath(path)))


def load_task(doc: dict) -> TaskSpec:
    if not isinstance(doc, dict):
        raise SceneError("task: document must be a JSON object")
    if doc.get("schema") != SCHEMA_VERSION:
        raise SceneError("task: missing or unsupported 'schema' (expected 1)")
    return TaskSpec(
        object_id=_require(doc, "object_id", str, "task"),
        sub_instruction=_require(doc, "sub_instruction", str, "task"),
        preferred_radius=float(doc.get("preferred_radius", 0.7)),
        reach_tolerance=float(doc.get("reach_tolerance", 0.25)),
        approach_half_angle=float(doc.get("approach_half_angle", math.pi / 3)),
    )


def load_task_file(path: str) -> TaskSpec:
    with open(path, "r", encoding="utf-8") as f:
        return load_task(json.load(f))


# ---------------------------------------------------------------------------
# trial randomization

MAX_PERTURB_ATTEMPTS = 50
MAX_START_ATTEMPTS = 200


def randomize_trial(scene: SceneSpec, task: TaskSpec, seed: int) -> TrialSetup:
    """Deterministic trial draw: object perturbations within the configured
    ranges, and a collision-free robot start inside the coarse-navigation
    annulus around the (perturbed) target center, facing it."""
    rng = derive_rng(seed, "randomize")
    rand = scene.randomization
    lo_bound = np.asarray(scene.base_grid.origin)
    hi_bound = lo_bound + np.array(
        [scene.base_grid.width, scene.base_grid.height]
    ) * scene.base_grid.resolution

    perturbations = None
    for _ in range(MAX_PERTURB_ATTEMPTS):
        candidate = {}
        ok = True
        for obj in scene.objects:
            if not obj.randomize:
                candidate[obj.id] = (0.0, 0.0, 0.0)
                continue
            dx = float(rng.uniform(-rand.position_range, rand.position_range))
            dy = float(rng.uniform(-rand.position_range, rand.position_range))
            dyaw = float(rng.uniform(-rand.yaw_range, rand.yaw_range))
            candidate[obj.id] = (dx, dy, dyaw)
            corners = obj.box.shifted(dx, dy, dyaw).footprint_corners()
            if (corners < lo_bound).any() or (corners > hi_bound).any():
                ok = False
                break
        if ok:
            perturbations = candidate
            break
    if perturbations is None:
        raise RandomizationError(
            f"scene '{scene.name}': no in-bounds object perturbation after "
            f"{MAX_PERTURB_ATTEMPTS} attempts"
        )

    setup = TrialSetup(seed=seed, robot_start=Pose2D(0.0, 0.0, 0.0),
                       perturbations=perturbations)
    world = scene.composed_grid(setup)
    free = compute_free_set(world)
    target = scene.object_by_id(task.object_id)
    dx, dy, dyaw = perturbations[task.object_id]
    center = target.perturbed(dx, dy, dyaw).box.center[:2]

    r_lo, r_hi = rand.start_radius
    for _ in range(MAX_START_ATTEMPTS):
        bearing = float(rng.uniform(-math.pi, math.pi))
        radius = float(rng.uniform(r_lo, r_hi))
        x = center[0] + radius * math.cos(bearing)
        y = center[1] + radius * math.sin(bearing)
        if free.contains_point(x, y):
            theta = math.atan2(center[1] - y, center[0] - x)
            return TrialSetup(
                seed=seed,
                robot_start=Pose2D(x, y, theta),
                perturbations=perturbations,
            )
    raise RandomizationError(
        f"scene '{scene.name}': no collision-free robot start after "
        f"{MAX_START_ATTEMPTS} attempts"
    )


# ---------------------------------------------------------------------------
# synthetic capture

def _ray_box_hits(origin: np.ndarray, dirs: np.ndarray, box: Box) -> np.ndarray:
    """Slab-method entry distances for rays against one yawed box. dirs is
    (N, 3) unit vectors; returns (N,) t with +inf for misses. Rays starting
    inside the box count as misses (cameras observe from outside)."""
    c, s = math.cos(-box.yaw), math.sin(-box.yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    o = rot @ (origin - box.center)
    d = dirs @ rot.T
    half = box.half()

    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (-half - o) * inv
        t2 = (half - o) * inv
    near = np.minimum(t1, t2)
    far = np.maximum(t1, t2)
    # parallel rays: hit the slab iff the origin lies between its planes
    parallel = np.abs(d) < 1e-12
    inside_slab = np.abs(o) <= half
    near = np.where(parallel, np.where(inside_slab, -np.inf, np.inf), near)
    far = np.where(parallel, np.where(inside_slab, np.inf, -np.inf), far)

    tmin = near.max(axis=-1)
    tmax = far.min(axis=-1)
    hit = (tmax >= tmin) & (tmin > 1e-9)
    return np.where(hit, tmin, np.inf)


def synthetic_capture(
    scene: SceneSpec, target_id: str, setup: TrialSetup | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Render (depth, mask) for the scene camera: depth in meters along the
    unit pixel ray (inf for misses), mask true where the first hit belongs to
    the target object."""
    objects = scene.perturbed_objects(setup)
    ids = [o.id for o in objects]
    if target_id not in ids:
        raise SceneError(f"scene '{scene.name}': no object with id '{target_id}'")
    origin, dirs = scene.camera.rays_world()
    flat = dirs.reshape(-1, 3)
    depth = np.full(len(flat), np.inf)
    best = np.full(len(flat), -1, dtype=int)
    for i, obj in enumerate(objects):
        t = _ray_box_hits(origin, flat, obj.box)
        closer = t < depth
        depth[closer] = t[closer]
        best[closer] = i
    shape = (scene.camera.height, scene.camera.width)
    mask = (best == ids.index(target_id)).reshape(shape)
    return depth.reshape(shape), mask


def backproject_pixels(camera: CameraModel, depth: np.ndarray, pixels: np.ndarray) -> np.ndarray:
    """3-D points (in the camera's extrinsic frame) for (N, 2) integer pixel
    (row, col) pairs with finite depth."""
    rays = camera.pixel_rays()
    d = depth[pixels[:, 0], pixels[:, 1]][:, None]
    cam_pts = rays[pixels[:, 0], pixels[:, 1]] * d
    return cam_pts @ camera.rotation.T + camera.translation


# ---------------------------------------------------------------------------
# ground truth for the oracle and the success model

@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Per-trial ground truth (world frame). Consumed only by the scripted
    oracle and the success model."""

    keypoint: np.ndarray  # (3,)
    direction: float
    centroid: np.ndarray  # (2,) mean of the true footprint cell centers
    direction_constrained: bool

    @property
    def keypoint_xy(self) -> np.ndarray:
        return self.keypoint[:2]


def trial_ground_truth(scene: SceneSpec, object_id: str, setup: TrialSetup | None) -> GroundTruth:
    target = scene.object_by_id(object_id)
    if setup is not None:
        dx, dy, dyaw = setup.perturbations.get(object_id, (0.0, 0.0, 0.0))
        target = target.perturbed(dx, dy, dyaw)
    cells = footprint_cells(scene.base_grid, target.box)
    if len(cells) == 0:
        raise SceneError(f"object '{object_id}' has an empty footprint")
    res = scene.base_grid.resolution
    centers = np.asarray(scene.base_grid.origin) + (cells + 0.5) * res
    return GroundTruth(
        keypoint=target.gt_keypoint,
        direction=target.gt_direction,
        centroid=centers.mean(axis=0),
        direction_constrained=target.direction_constrained,
    )


# ---------------------------------------------------------------------------
# synthetic appearance features

FEATURE_DIM = 16
_LOBE_SIGMA = 0.06  # meters; spatial width of the affordance feature lobe
_LOBE_GAIN = 3.0


def synthetic_features(
    scene: SceneSpec,
    target_id: str,
    depth: np.ndarray,
    mask: np.ndarray,
    setup: TrialSetup | None = None,
    dim: int = FEATURE_DIM,
):
    """Per-pixel feature field standing in for a vision backbone: a smooth
    random basis (seeded per object) plus a distinct lobe around the
    ground-truth keypoint so that clustering yields a separable affordance
    cluster."""
    from .keypoints import FeatureGrid

    objects = {o.id: o for o in scene.perturbed_objects(setup)}
    target = objects[target_id]
    rng = derive_rng(target.feature_seed, target_id, "features")
    h, w = mask.shape

    # wave parameters are drawn before any pixels are touched, so the field
    # is a fixed function of the seed regardless of the mask
    waves = []
    for _ in range(dim):
        channel = []
        for _ in range(3):
            fx_, fy_ = rng.uniform(0.5, 4.0, size=2)
            phase = float(rng.uniform(0.0, 2.0 * math.pi))
            amp = float(rng.uniform(0.5, 1.0))
            channel.append((fx_, fy_, phase, amp))
        waves.append(channel)
    lobe = rng.normal(size=dim)
    lobe /= np.linalg.norm(lobe)

    valid = mask & np.isfinite(depth)
    features = np.zeros((h, w, dim), dtype=np.float32)
    pix = np.argwhere(valid)
    if len(pix):
        u = pix[:, 1] / max(w - 1, 1)
        v = pix[:, 0] / max(h - 1, 1)
        field = np.zeros((len(pix), dim))
        for c, channel in enumerate(waves):
            for fx_, fy_, phase, amp in channel:
                field[:, c] += amp * np.sin(2.0 * math.pi * (fx_ * u + fy_ * v) + phase)
        pts = backproject_pixels(scene.camera, depth, pix)
        d2 = ((pts - target.gt_keypoint) ** 2).sum(axis=1)
        weight = _LOBE_GAIN * np.exp(-d2 / (2.0 * _LOBE_SIGMA**2))
        field += weight[:, None] * lobe
        features[pix[:, 0], pix[:, 1]] = field.astype(np.float32)
    return FeatureGrid(features=features, mask=valid)


# ---------------------------------------------------------------------------
# debug dumps

DEPTH_MISS = 65535  # sentinel for inf/out-of-range depth in 16-bit dumps


def save_depth_pgm(depth: np.ndarray, path: str) -> None:
    """16-bit P5 depth dump, millimeter quantization; misses map to 65535."""
    mm = np.where(
        np.isfinite(depth), np.clip(np.round(depth * 1000.0), 0, DEPTH_MISS - 1), DEPTH_MISS
    ).astype(np.uint16)
    raster.write_pgm(path, mm)


def load_depth_pgm(path: str) -> np.ndarray:
    mm = raster.read_pgm(path).astype(np.float64)
    depth = mm / 1000.0
    depth[mm == DEPTH_MISS] = np.inf
    return depth


def save_mask_pgm(mask: np.ndarray, path: str) -> None:
    raster.write_pgm(path, np.where(mask, 255, 0).astype(np.uint8))


def load_mask_pgm(path: str) -> np.ndarray:
    return raster.read_pgm(path) == 255
