"""Affordance guidance projection: object footprint from masked depth, the 12
candidate approach directions, oracle-voted direction selection, the fan
region, and the annotated top-down raster ("obstacle map plus") shown to the
oracle.

All geometry here lives in the frame of whatever grid is passed in (the
planner uses the robot-local egocentric map, so direction 1 points along the
robot's forward axis)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import raster
from .errors import TrialAbort
from .gridmap import FREE, OCCUPIED, UNKNOWN, FreeSet, OccupancyGrid, wrap_angle
from .oracle import (
    DIRECTION_VOTES,
    KIND_DIRECTION,
    OracleOption,
    OracleQuery,
    majority_vote,
)
from .scene import CameraModel, backproject_pixels

NUM_DIRECTIONS = 12
DIRECTION_STEP = 2.0 * math.pi / NUM_DIRECTIONS  # 30 degrees
DEFAULT_ARROW_LENGTH = 3.0  # meters
FAN_HALF_ANGLE = math.pi / 3  # +-60 degrees around the selected direction

# Fixed arrow palette, single source of truth for every rendering.
# Entry i-1 colors direction i; direction 1 is always red, direction 2 blue.
ARROW_PALETTE = (
    (255, 0, 0),
    (0, 0, 255),
    (0, 170, 0),
    (128, 0, 255),
    (0, 200, 200),
    (255, 0, 255),
    (128, 128, 0),
    (255, 105, 180),
    (0, 90, 160),
    (139, 69, 19),
    (0, 255, 127),
    (255, 215, 0),
)

COLOR_FREE = (255, 255, 255)
COLOR_OCCUPIED = (0, 0, 0)
COLOR_UNKNOWN = (160, 160, 160)
COLOR_FOOTPRINT = (0, 160, 0)
COLOR_FAN = (255, 165, 0)
COLOR_ROBOT = (40, 40, 40)
COLOR_MARKER = (0, 0, 200)


@dataclass(frozen=True)
class DirectionDescriptor:
    index: int  # 1..12
    bearing: float  # grid-frame bearing; index 1 lies along +x
    world_bearing: float  # same ray expressed in the world frame
    endpoint: np.ndarray  # (2,) clipped arrow tip, grid frame
    length: float

    @property
    def unit(self) -> np.ndarray:
        return np.array([math.cos(self.bearing), math.sin(self.bearing)])


@dataclass
class AffordanceContext:
    footprint: np.ndarray  # (N, 2) grid cells
    centroid: np.ndarray  # (2,) grid-frame world coordinates
    directions: tuple = ()
    selected_index: int | None = None
    fan: np.ndarray = field(default_factory=lambda: np.empty((0, 2), dtype=int))
    keypoint: np.ndarray | None = None  # (2,) grid-frame; set by keypoint stage


def backproject_mask(
    depth: np.ndarray, mask: np.ndarray, camera: CameraModel, grid: OccupancyGrid
) -> np.ndarray:
    """Cells hit by back-projecting every masked finite-depth pixel through
    the camera (pixel -> camera-frame 3-D -> extrinsic frame, drop z,
    discretize). Returns sorted unique (N, 2) indices; empty mask -> empty
    set (grounding failure is signalled upstream)."""
    if depth.shape != mask.shape:
        raise ValueError("depth and mask must have identical shapes")
    pixels = np.argwhere(mask & np.isfinite(depth))
    if len(pixels) == 0:
        return np.empty((0, 2), dtype=np.int64)
    points = backproject_pixels(camera, depth, pixels)
    idx = grid.cell_indices_of(points[:, :2])
    ok = (
        (idx[:, 0] >= 0) & (idx[:, 0] < grid.width)
        & (idx[:, 1] >= 0) & (idx[:, 1] < grid.height)
    )
    if not ok.any():
        return np.empty((0, 2), dtype=np.int64)
    return np.unique(idx[ok], axis=0)


def compute_centroid(footprint: np.ndarray, grid: OccupancyGrid) -> np.ndarray:
    """Arithmetic mean of the footprint cell centers."""
    if len(footprint) == 0:
        raise TrialAbort("skipped", "empty object footprint (grounding failure)")
    centers = np.asarray(grid.origin) + (np.asarray(footprint, dtype=float) + 0.5) * grid.resolution
    return centers.mean(axis=0)


def generate_directions(
    centroid: np.ndarray,
    free: FreeSet,
    arrow_length: float = DEFAULT_ARROW_LENGTH,
    frame_offset: float = 0.0,
) -> tuple:
    """Twelve rays every 30 degrees around the centroid, direction 1 along the
    grid +x axis. Each arrow is clipped at `arrow_length` or at the first
    non-free cell -- except for the contiguous non-free run at the start of
    the ray (the object itself and its clearance ring), which the arrow is
    allowed to cross. `frame_offset` is added to grid bearings to report the
    equivalent world bearing (robot heading for egocentric grids)."""
    grid = free.grid
    step = grid.resolution / 2.0
    n_steps = max(1, int(math.ceil(arrow_length / step)))
    out = []
    for i in range(1, NUM_DIRECTIONS + 1):
        bearing = (i - 1) * DIRECTION_STEP
        unit = np.array([math.cos(bearing), math.sin(bearing)])
        reached = 0.0
        seen_free = False
        for k in range(1, n_steps + 1):
            t = min(k * step, arrow_length)
            p = centroid + t * unit
            ix = math.floor((p[0] - grid.origin[0]) / grid.resolution)
            iy = math.floor((p[1] - grid.origin[1]) / grid.resolution)
            if not grid.in_bounds(ix, iy):
                break
            if free.mask[ix, iy]:
                seen_free = True
            elif seen_free:
                break
            reached = t
        out.append(
            DirectionDescriptor(
                index=i,
                bearing=wrap_angle(bearing),
                world_bearing=wrap_angle(bearing + frame_offset),
                endpoint=centroid + reached * unit,
                length=reached,
            )
        )
    return tuple(out)


def select_direction(directions, instruction: str, oracle, attachments=()) -> int:
    """Query the oracle three times and take the strict majority; no majority
    or a majority of 'uncertain' aborts the trial (recorded as skipped)."""
    options = tuple(
        OracleOption(index=d.index, bearing=d.world_bearing) for d in directions
    )
    votes = []
    for nonce in range(DIRECTION_VOTES):
        query = OracleQuery(
            kind=KIND_DIRECTION,
            instruction=instruction,
            options=options,
            want=1,
            attachments=tuple(attachments),
            nonce=nonce,
        )
        votes.append(oracle.answer(query).indices[0])
    return majority_vote(votes)


def build_fan(centroid: np.ndarray, direction, grid: OccupancyGrid) -> np.ndarray:
    """All grid cells whose center bears within 60 degrees of `direction`
    (a unit vector or a bearing) as seen from the centroid, at any radius.
    The cell containing the centroid itself is a member by convention."""
    if np.isscalar(direction):
        d = np.array([math.cos(direction), math.sin(direction)])
    else:
        d = np.asarray(direction, dtype=float)
    gx, gy = grid.cell_centers()
    vx = gx - centroid[0]
    vy = gy - centroid[1]
    norm = np.hypot(vx, vy)
    # dot >= |v| cos(60 deg) avoids dividing by |v|; zero vectors pass
    inside = (vx * d[0] + vy * d[1]) >= norm * math.cos(FAN_HALF_ANGLE)
    inside |= norm == 0.0
    return np.argwhere(inside)


def fan_contains(centroid: np.ndarray, direction_bearing: float, point, half_angle: float = FAN_HALF_ANGLE) -> bool:
    """Exact angular membership test for a continuous point."""
    dx = point[0] - centroid[0]
    dy = point[1] - centroid[1]
    if dx == 0.0 and dy == 0.0:
        return True
    return abs(wrap_angle(math.atan2(dy, dx) - direction_bearing)) <= half_angle


# ---------------------------------------------------------------------------
# rendering

@dataclass(frozen=True)
class ProjectionPolicy:
    """Which projection overlays are produced and attached to oracle queries.
    Realizes the projection-ablation variants."""

    name: str
    render_aux_arrows: bool = True  # the 12 numbered arrows
    use_direction: bool = True  # select a direction, render "A", build the fan
    attach_projection: bool = True  # False -> raw obstacle raster only

    def context_tags(self) -> tuple:
        from .oracle import TAG_ARROWS, TAG_FAN, TAG_FOOTPRINT, TAG_MAP

        tags = [TAG_MAP]
        if self.attach_projection:
            tags.append(TAG_FOOTPRINT)
            if self.render_aux_arrows:
                tags.append(TAG_ARROWS)
            if self.use_direction:
                tags.append(TAG_FAN)
        return tuple(tags)


PROJECTION_FULL = ProjectionPolicy(name="proj_full")
PROJECTION_NO_12_ARROWS = ProjectionPolicy(name="proj_no_12_arrows", render_aux_arrows=False)
PROJECTION_NO_DIRECTION_A = ProjectionPolicy(name="proj_no_direction_a", use_direction=False)
PROJECTION_NONE = ProjectionPolicy(
    name="proj_none", render_aux_arrows=False, use_direction=False, attach_projection=False
)

PROJECTION_POLICIES = {
    p.name: p
    for p in (
        PROJECTION_FULL,
        PROJECTION_NO_12_ARROWS,
        PROJECTION_NO_DIRECTION_A,
        PROJECTION_NONE,
    )
}


def world_to_pixel(grid: OccupancyGrid, point, scale: int) -> tuple[int, int]:
    """Grid-frame point -> (row, col) in a rendering at `scale` px per cell.
    Row 0 is the top of the map (highest y)."""
    col = (point[0] - grid.origin[0]) / grid.resolution * scale
    row = (grid.height - (point[1] - grid.origin[1]) / grid.resolution) * scale
    return int(row), int(col)


@dataclass(frozen=True)
class ObstacleMapPlus:
    """Top-down raster: base occupancy plus footprint, fan, the 12 colored
    arrows, an "A" label on the selected one, the robot marker, and numbered
    candidate markers."""

    grid: OccupancyGrid
    context: AffordanceContext
    robot_xy: tuple = (0.0, 0.0)
    robot_heading: float = 0.0
    candidates: tuple = ()  # (marker index, x, y) in the grid frame
    policy: ProjectionPolicy = PROJECTION_FULL

    def render(self, scale: int = 2) -> np.ndarray:
        grid = self.grid
        base = np.empty((grid.width, grid.height, 3), dtype=np.uint8)
        base[grid.cells == FREE] = COLOR_FREE
        base[grid.cells == OCCUPIED] = COLOR_OCCUPIED
        base[grid.cells == UNKNOWN] = COLOR_UNKNOWN

        ctx = self.context
        if self.policy.attach_projection:
            if self.policy.use_direction and len(ctx.fan):
                fan = ctx.fan
                tint = 0.55 * base[fan[:, 0], fan[:, 1]].astype(float) + 0.45 * np.array(COLOR_FAN)
                base[fan[:, 0], fan[:, 1]] = tint.astype(np.uint8)
            if len(ctx.footprint):
                base[ctx.footprint[:, 0], ctx.footprint[:, 1]] = COLOR_FOOTPRINT

        # to image axes: row = flipped y, col = x
        image = np.repeat(np.repeat(base.transpose(1, 0, 2)[::-1], scale, axis=0), scale, axis=1)

        if self.policy.attach_projection:
            self._draw_arrows(image, scale)
        self._draw_robot(image, scale)
        self._draw_candidates(image, scale)
        return image

    def _draw_arrows(self, image, scale):
        ctx = self.context
        for d in ctx.directions:
            selected = ctx.selected_index == d.index
            if not self.policy.render_aux_arrows and not selected:
                continue
            if selected and not self.policy.use_direction:
                continue
            r0, c0 = world_to_pixel(self.grid, ctx.centroid, scale)
            r1, c1 = world_to_pixel(self.grid, d.endpoint, scale)
            color = ARROW_PALETTE[d.index - 1]
            raster.draw_line(image, r0, c0, r1, c1, color)
            label_r, label_c = r1 - 3, c1 + 2
            if selected and self.policy.use_direction:
                raster.draw_glyph(image, label_r, label_c, "A", (0, 0, 0))
            elif self.policy.render_aux_arrows:
                raster.draw_text(image, label_r, label_c, str(d.index), color)

    def _draw_robot(self, image, scale):
        r, c = world_to_pixel(self.grid, self.robot_xy, scale)
        raster.draw_disc(image, r, c, max(2, scale), COLOR_ROBOT)
        tip = (
            self.robot_xy[0] + 0.3 * math.cos(self.robot_heading),
            self.robot_xy[1] + 0.3 * math.sin(self.robot_heading),
        )
        r1, c1 = world_to_pixel(self.grid, tip, scale)
        raster.draw_line(image, r, c, r1, c1, COLOR_ROBOT)

    def _draw_candidates(self, image, scale):
        for marker, x, y in self.candidates:
            r, c = world_to_pixel(self.grid, (x, y), scale)
            raster.draw_disc(image, r, c, max(1, scale // 2), COLOR_MARKER)
            raster.draw_text(image, r - 6, c + 2, str(int(marker)), COLOR_MARKER)

    def to_svg(self, scale: int = 2) -> str:
        """Same geometry as render(), as a compact SVG document."""
        grid = self.grid
        w, h = grid.width * scale, grid.height * scale
        parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w} {h}" '
            f'width="{w}" height="{h}">',
            f'<rect width="{w}" height="{h}" fill="rgb{COLOR_FREE}"/>',
        ]

        def cell_rects(cells, color):
            # run-length merge along x for compactness
            by_row: dict[int, list[int]] = {}
            for ix, iy in cells:
                by_row.setdefault(int(iy), []).append(int(ix))
            for iy, xs in sorted(by_row.items()):
                xs.sort()
                start = prev = xs[0]
                runs = []
                for x in xs[1:]:
                    if x == prev + 1:
                        prev = x
                    else:
                        runs.append((start, prev))
                        start = prev = x
                runs.append((start, prev))
                for a, b in runs:
                    px = a * scale
                    py = (grid.height - 1 - iy) * scale
                    parts.append(
                        f'<rect x="{px}" y="{py}" width="{(b - a + 1) * scale}" '
                        f'height="{scale}" fill="rgb{color}"/>'
                    )

        cell_rects(np.argwhere(self.grid.cells == OCCUPIED), COLOR_OCCUPIED)
        cell_rects(np.argwhere(self.grid.cells == UNKNOWN), COLOR_UNKNOWN)
        ctx = self.context
        if self.policy.attach_projection:
            if self.policy.use_direction and len(ctx.fan):
                cell_rects(ctx.fan, (255, 200, 120))
            if len(ctx.footprint):
                cell_rects(ctx.footprint, COLOR_FOOTPRINT)
            for d in ctx.directions:
                selected = ctx.selected_index == d.index
                if not self.policy.render_aux_arrows and not selected:
                    continue
                if selected and not self.policy.use_direction:
                    continue
                r0, c0 = world_to_pixel(grid, ctx.centroid, scale)
                r1, c1 = world_to_pixel(grid, d.endpoint, scale)
                color = ARROW_PALETTE[d.index - 1]
                parts.append(
                    f'<line x1="{c0}" y1="{r0}" x2="{c1}" y2="{r1}" '
                    f'stroke="rgb{color}" stroke-width="{scale}"/>'
                )
                label = "A" if selected else str(d.index)
                parts.append(
                    f'<text x="{c1 + 2}" y="{r1 - 2}" font-size="{6 * scale}">{label}</text>'
                )
        r, c = world_to_pixel(grid, self.robot_xy, scale)
        parts.append(f'<circle cx="{c}" cy="{r}" r="{max(2, scale)}" fill="rgb{COLOR_ROBOT}"/>')
        for marker, x, y in self.candidates:
            r, c = world_to_pixel(grid, (x, y), scale)
            parts.append(
                f'<circle cx="{c}" cy="{r}" r="{max(1, scale // 2)}" fill="rgb{COLOR_MARKER}"/>'
            )
            parts.append(
                f'<text x="{c + 2}" y="{r - 2}" font-size="{5 * scale}" '
                f'fill="rgb{COLOR_MARKER}">{int(marker)}</text>'
            )
        parts.append("</svg>")
        return "\n".join(parts)


def render_obstacle_map_plus(
    grid: OccupancyGrid,
    context: AffordanceContext,
    robot_xy=(0.0, 0.0),
    robot_heading: float = 0.0,
    candidates=(),
    policy: ProjectionPolicy = PROJECTION_FULL,
    scale: int = 2,
) -> np.ndarray:
    return ObstacleMapPlus(
        grid=grid,
        context=context,
        robot_xy=tuple(robot_xy),
        robot_heading=robot_heading,
        candidates=tuple(candidates),
        policy=policy,
    ).render(scale=scale)
