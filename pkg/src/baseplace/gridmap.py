"""2-D occupancy grids, clearance-based free sets, and egocentric extraction.

Frame conventions (fixed once, used everywhere):
  * world: +x right, +y up, angles CCW from +x, origin = corner of cell (0, 0)
  * grid: cell (ix, iy), ix along +x; cells[ix, iy] holds the state
  * world_to_grid floors (p - origin) / resolution; grid_to_world returns the
    cell center
Unknown cells are treated as obstacles when computing the clearance-based
free set (conservative: only known-free space is navigable).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import raster

FREE = 0
OCCUPIED = 1
UNKNOWN = 2

DEFAULT_CLEARANCE = 0.4  # meters between cell centers

_PGM_VALUES = {FREE: 255, OCCUPIED: 0, UNKNOWN: 128}
_PGM_STATES = {255: FREE, 0: OCCUPIED, 128: UNKNOWN}


class OutOfBoundsError(ValueError):
    """A world point fell outside the grid; conversions never wrap around."""


def wrap_angle(theta: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def to_local(self, points: np.ndarray) -> np.ndarray:
        """Map world points (..., 2) into this pose's frame (+x = heading)."""
        pts = np.asarray(points, dtype=float) - self.position
        c, s = math.cos(-self.theta), math.sin(-self.theta)
        rot = np.array([[c, -s], [s, c]])
        return pts @ rot.T

    def to_world(self, points: np.ndarray) -> np.ndarray:
        """Inverse of to_local."""
        pts = np.asarray(points, dtype=float)
        c, s = math.cos(self.theta), math.sin(self.theta)
        rot = np.array([[c, -s], [s, c]])
        return pts @ rot.T + self.position


class OccupancyGrid:
    """Immutable occupancy grid. cells has shape (width, height), dtype uint8."""

    def __init__(self, cells: np.ndarray, resolution: float, origin=(0.0, 0.0)):
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        cells = np.ascontiguousarray(cells, dtype=np.uint8)
        if cells.ndim != 2 or cells.size == 0:
            raise ValueError("cells must be a non-empty 2-D array")
        if not np.isin(cells, (FREE, OCCUPIED, UNKNOWN)).all():
            raise ValueError("cell states must be FREE, OCCUPIED or UNKNOWN")
        cells.flags.writeable = False
        self.cells = cells
        self.resolution = float(resolution)
        self.origin = (float(origin[0]), float(origin[1]))

    @classmethod
    def empty(cls, width: int, height: int, resolution: float, origin=(0.0, 0.0),
              fill: int = FREE) -> "OccupancyGrid":
        return cls(np.full((width, height), fill, dtype=np.uint8), resolution, origin)

    @property
    def width(self) -> int:
        return self.cells.shape[0]

    @property
    def height(self) -> int:
        return self.cells.shape[1]

    def in_bounds(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.width and 0 <= iy < self.height

    def world_to_grid(self, x: float, y: float) -> tuple[int, int]:
        ix = math.floor((x - self.origin[0]) / self.resolution)
        iy = math.floor((y - self.origin[1]) / self.resolution)
        if not self.in_bounds(ix, iy):
            raise OutOfBoundsError(
                f"point ({x:.3f}, {y:.3f}) maps to cell ({ix}, {iy}) outside "
                f"{self.width}x{self.height} grid"
            )
        return ix, iy

    def grid_to_world(self, ix: int, iy: int) -> tuple[float, float]:
        if not self.in_bounds(ix, iy):
            raise OutOfBoundsError(f"cell ({ix}, {iy}) outside grid")
        return (
            self.origin[0] + (ix + 0.5) * self.resolution,
            self.origin[1] + (iy + 0.5) * self.resolution,
        )

    def cell_indices_of(self, points: np.ndarray) -> np.ndarray:
        """Vectorized floor-discretization of (N, 2) world points (no bounds check)."""
        pts = np.asarray(points, dtype=float)
        return np.floor((pts - np.asarray(self.origin)) / self.resolution).astype(np.int64)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid arrays (width, height) of cell-center world coordinates."""
        xs = self.origin[0] + (np.arange(self.width) + 0.5) * self.resolution
        ys = self.origin[1] + (np.arange(self.height) + 0.5) * self.resolution
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        return gx, gy

    def with_cells(self, cells: np.ndarray) -> "OccupancyGrid":
        return OccupancyGrid(cells, self.resolution, self.origin)


@dataclass(frozen=True)
class FreeSet:
    """Cells that are Free and at least `clearance` meters from any obstacle."""

    grid: OccupancyGrid
    mask: np.ndarray  # bool, same shape as grid.cells
    clearance: float

    def __post_init__(self):
        self.mask.flags.writeable = False

    def contains_cell(self, ix: int, iy: int) -> bool:
        return self.grid.in_bounds(ix, iy) and bool(self.mask[ix, iy])

    def contains_point(self, x: float, y: float) -> bool:
        ix = math.floor((x - self.grid.origin[0]) / self.grid.resolution)
        iy = math.floor((y - self.grid.origin[1]) / self.grid.resolution)
        return self.contains_cell(ix, iy)

    def contains_points(self, points: np.ndarray) -> np.ndarray:
        """Vectorized membership test for (N, 2) world points."""
        idx = self.grid.cell_indices_of(points)
        ok = (
            (idx[:, 0] >= 0) & (idx[:, 0] < self.grid.width)
            & (idx[:, 1] >= 0) & (idx[:, 1] < self.grid.height)
        )
        result = np.zeros(len(idx), dtype=bool)
        if ok.any():
            sel = idx[ok]
            result[ok] = self.mask[sel[:, 0], sel[:, 1]]
        return result


def distance_transform(grid: OccupancyGrid, treat_unknown_as_occupied: bool = False) -> np.ndarray:
    """Exact Euclidean distance (meters) from each cell center to the nearest
    obstacle cell center. Obstacle cells map to 0; a grid with no obstacles
    maps to +inf everywhere."""
    obstacle = grid.cells == OCCUPIED
    if treat_unknown_as_occupied:
        obstacle |= grid.cells == UNKNOWN
    if not obstacle.any():
        return np.full(grid.cells.shape, np.inf)
    dist = ndimage.distance_transform_edt(~obstacle, sampling=grid.resolution)
    return dist


def compute_free_set(grid: OccupancyGrid, clearance: float = DEFAULT_CLEARANCE) -> FreeSet:
    """Free cells whose distance to the nearest Occupied-or-Unknown cell is
    at least `clearance`."""
    if clearance < 0:
        raise ValueError("clearance must be nonnegative")
    dist = distance_transform(grid, treat_unknown_as_occupied=True)
    mask = (grid.cells == FREE) & (dist >= clearance)
    return FreeSet(grid=grid, mask=mask, clearance=float(clearance))


def extract_local_egocentric(global_grid: OccupancyGrid, robot: Pose2D, size: int) -> OccupancyGrid:
    """Egocentric local map: `size` x `size` cells at the global resolution,
    centered on the robot, with local +x along the robot heading. Content is
    nearest-neighbor sampled (occupancy is categorical); samples outside the
    global map become Unknown. The local grid's origin places the robot at
    local world coordinates (0, 0)."""
    if size <= 0:
        raise ValueError("size must be positive")
    res = global_grid.resolution
    half = size // 2
    origin = (-half * res, -half * res)

    ix = np.arange(size)
    lx = origin[0] + (ix + 0.5) * res
    gxl, gyl = np.meshgrid(lx, lx, indexing="ij")
    local_pts = np.stack([gxl.ravel(), gyl.ravel()], axis=1)
    world_pts = robot.to_world(local_pts)
    # samples can land exactly on cell boundaries (robot at a cell center);
    # tie-break deterministically toward the upper cell
    idx = np.floor(
        (world_pts - np.asarray(global_grid.origin)) / res + 1e-7
    ).astype(np.int64)

    cells = np.full(size * size, UNKNOWN, dtype=np.uint8)
    ok = (
        (idx[:, 0] >= 0) & (idx[:, 0] < global_grid.width)
        & (idx[:, 1] >= 0) & (idx[:, 1] < global_grid.height)
    )
    sel = idx[ok]
    cells[ok] = global_grid.cells[sel[:, 0], sel[:, 1]]
    return OccupancyGrid(cells.reshape(size, size), res, origin)


def save_pgm(grid: OccupancyGrid, path: str) -> None:
    """Write the grid as a P5 PGM (0=Occupied, 128=Unknown, 255=Free) plus a
    `<path>.json` sidecar with {resolution, origin_x, origin_y}. Image row 0
    is the top of the map (highest y)."""
    lut = np.zeros(256, dtype=np.uint8)
    for state, value in _PGM_VALUES.items():
        lut[state] = value
    image = lut[grid.cells.T[::-1, :]]
    raster.write_pgm(path, image)
    sidecar = {
        "resolution": grid.resolution,
        "origin_x": grid.origin[0],
        "origin_y": grid.origin[1],
    }
    with open(f"{path}.json", "w", encoding="utf-8") as f:
        json.dump(sidecar, f, sort_keys=True)
        f.write("\n")


def load_pgm(path: str) -> OccupancyGrid:
    image = raster.read_pgm(path)
    if image.dtype != np.uint8:
        raise ValueError("occupancy PGM must be 8-bit")
    unknown = set(np.unique(image)) - set(_PGM_STATES)
    if unknown:
        raise ValueError(f"unexpected PGM values {sorted(unknown)}")
    cells = np.zeros(image.shape, dtype=np.uint8)
    for value, state in _PGM_STATES.items():
        cells[image == value] = state
    cells = cells[::-1, :].T
    with open(f"{path}.json", "r", encoding="utf-8") as f:
        sidecar = json.load(f)
    return OccupancyGrid(
        cells, sidecar["resolution"], (sidecar["origin_x"], sidecar["origin_y"])
    )
