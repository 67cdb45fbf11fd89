import math

import numpy as np
import pytest

from baseplace.gridmap import (
    FREE,
    OCCUPIED,
    UNKNOWN,
    OccupancyGrid,
    OutOfBoundsError,
    Pose2D,
    compute_free_set,
    distance_transform,
    extract_local_egocentric,
    load_pgm,
    save_pgm,
    wrap_angle,
)


def brute_force_distance(grid, treat_unknown=False):
    """Independent all-pairs distance oracle for small grids."""
    obstacles = [
        (ix, iy)
        for ix in range(grid.width)
        for iy in range(grid.height)
        if grid.cells[ix, iy] == OCCUPIED
        or (treat_unknown and grid.cells[ix, iy] == UNKNOWN)
    ]
    out = np.full((grid.width, grid.height), np.inf)
    for ix in range(grid.width):
        for iy in range(grid.height):
            for ox, oy in obstacles:
                d = math.hypot(ix - ox, iy - oy) * grid.resolution
                if d < out[ix, iy]:
                    out[ix, iy] = d
    return out


def random_grid(rng, max_size=32, p_occ=0.1, p_unknown=0.0):
    w = int(rng.integers(1, max_size + 1))
    h = int(rng.integers(1, max_size + 1))
    u = rng.random((w, h))
    cells = np.full((w, h), FREE, dtype=np.uint8)
    cells[u < p_occ] = OCCUPIED
    cells[(u >= p_occ) & (u < p_occ + p_unknown)] = UNKNOWN
    return OccupancyGrid(cells, 0.05)


class TestFrames:
    def test_world_to_grid_arithmetic(self):
        grid = OccupancyGrid.empty(200, 200, 0.05)
        assert grid.world_to_grid(1.0, 2.0) == (20, 40)

    def test_origin_corner(self):
        grid = OccupancyGrid.empty(10, 10, 0.05)
        assert grid.world_to_grid(0.0, 0.0) == (0, 0)

    def test_round_trip_center(self):
        grid = OccupancyGrid.empty(200, 200, 0.05)
        x, y = grid.grid_to_world(20, 40)
        assert (x, y) == (pytest.approx(1.025), pytest.approx(2.025))
        assert grid.world_to_grid(x, y) == (20, 40)

    def test_round_trip_within_half_resolution(self):
        grid = OccupancyGrid.empty(30, 17, 0.1, origin=(-1.0, 2.0))
        rng = np.random.default_rng(3)
        for _ in range(200):
            x = rng.uniform(-1.0, -1.0 + 30 * 0.1 - 1e-9)
            y = rng.uniform(2.0, 2.0 + 17 * 0.1 - 1e-9)
            cx, cy = grid.grid_to_world(*grid.world_to_grid(x, y))
            assert abs(cx - x) <= 0.05 + 1e-12
            assert abs(cy - y) <= 0.05 + 1e-12

    def test_out_of_bounds_never_wraps(self):
        grid = OccupancyGrid.empty(10, 10, 0.05)
        with pytest.raises(OutOfBoundsError):
            grid.world_to_grid(-0.01, 0.2)
        with pytest.raises(OutOfBoundsError):
            grid.world_to_grid(0.2, 0.51)

    def test_wrap_angle_range(self):
        assert wrap_angle(math.pi) == pytest.approx(math.pi)
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)
        assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
        for theta in np.linspace(-20, 20, 401):
            w = wrap_angle(theta)
            assert -math.pi < w <= math.pi


class TestDistanceTransform:
    def test_four_neighbor(self):
        cells = np.full((5, 5), FREE, dtype=np.uint8)
        cells[2, 2] = OCCUPIED
        grid = OccupancyGrid(cells, 0.05)
        dist = distance_transform(grid)
        assert dist[2, 2] == 0.0
        assert dist[2, 3] == pytest.approx(0.05)

    def test_all_free_is_infinite(self):
        grid = OccupancyGrid.empty(8, 8, 0.05)
        assert np.isinf(distance_transform(grid)).all()

    def test_diagonal_neighbor(self):
        cells = np.full((5, 5), FREE, dtype=np.uint8)
        cells[2, 2] = OCCUPIED
        grid = OccupancyGrid(cells, 0.05)
        dist = distance_transform(grid)
        assert dist[3, 3] == pytest.approx(0.05 * math.sqrt(2))

    def test_matches_brute_force(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            grid = random_grid(rng, p_occ=0.15, p_unknown=0.05)
            expected = brute_force_distance(grid)
            np.testing.assert_allclose(distance_transform(grid), expected, atol=1e-9)


class TestFreeSet:
    def test_threshold_excludes(self):
        # obstacle 6 cells away at 0.05 m/cell = 0.30 m < 0.4
        cells = np.full((20, 20), FREE, dtype=np.uint8)
        cells[10, 10] = OCCUPIED
        grid = OccupancyGrid(cells, 0.05)
        free = compute_free_set(grid, 0.4)
        assert not free.mask[10, 16]

    def test_threshold_includes(self):
        # 9 cells away = 0.45 m >= 0.4
        cells = np.full((25, 25), FREE, dtype=np.uint8)
        cells[10, 10] = OCCUPIED
        grid = OccupancyGrid(cells, 0.05)
        free = compute_free_set(grid, 0.4)
        assert free.mask[10, 19]

    def test_matches_brute_force_64(self):
        rng = np.random.default_rng(7)
        for _ in range(8):
            w = int(rng.integers(16, 65))
            h = int(rng.integers(16, 65))
            u = rng.random((w, h))
            cells = np.full((w, h), FREE, dtype=np.uint8)
            cells[u < 0.03] = OCCUPIED
            cells[(u >= 0.03) & (u < 0.05)] = UNKNOWN
            grid = OccupancyGrid(cells, 0.05)
            free = compute_free_set(grid, 0.4)
            dist = brute_force_distance(grid, treat_unknown=True)
            expected = (grid.cells == FREE) & (dist >= 0.4)
            np.testing.assert_array_equal(free.mask, expected)

    def test_mask_subset_of_free_cells(self):
        rng = np.random.default_rng(19)
        for _ in range(10):
            grid = random_grid(rng, p_occ=0.2, p_unknown=0.1)
            clearance = float(rng.uniform(0.0, 0.5))
            free = compute_free_set(grid, clearance)
            assert not (free.mask & (grid.cells != FREE)).any()

    def test_point_membership(self):
        cells = np.full((20, 20), FREE, dtype=np.uint8)
        cells[0, :] = OCCUPIED
        grid = OccupancyGrid(cells, 0.05)
        free = compute_free_set(grid, 0.4)
        assert free.contains_point(0.9, 0.5)
        assert not free.contains_point(0.11, 0.5)
        assert not free.contains_point(-5.0, 0.5)
        pts = np.array([[0.9, 0.5], [0.11, 0.5], [-5.0, 0.5]])
        np.testing.assert_array_equal(free.contains_points(pts), [True, False, False])


def brute_force_local(global_grid, robot, size):
    """Per-cell inverse-rotation sampling oracle, written scalar on purpose."""
    res = global_grid.resolution
    half = size // 2
    out = np.full((size, size), UNKNOWN, dtype=np.uint8)
    for i in range(size):
        for j in range(size):
            lx = (i - half + 0.5) * res
            ly = (j - half + 0.5) * res
            wx = robot.x + math.cos(robot.theta) * lx - math.sin(robot.theta) * ly
            wy = robot.y + math.sin(robot.theta) * lx + math.cos(robot.theta) * ly
            ix = math.floor((wx - global_grid.origin[0]) / res)
            iy = math.floor((wy - global_grid.origin[1]) / res)
            if global_grid.in_bounds(ix, iy):
                out[i, j] = global_grid.cells[ix, iy]
    return out


class TestEgocentric:
    def _random_global(self, seed, n=40):
        rng = np.random.default_rng(seed)
        cells = np.where(rng.random((n, n)) < 0.2, OCCUPIED, FREE).astype(np.uint8)
        return OccupancyGrid(cells, 0.05)

    def test_identity_rotation_is_crop(self):
        grid = self._random_global(0)
        robot = Pose2D(*grid.grid_to_world(20, 20), 0.0)
        local = extract_local_egocentric(grid, robot, 10)
        crop = grid.cells[16:26, 16:26]
        np.testing.assert_array_equal(local.cells, crop)

    def test_quarter_turn(self):
        grid = OccupancyGrid.empty(41, 41, 0.05)
        cells = grid.cells.copy()
        cells[20, 26] = OCCUPIED  # 6 cells along +y from the robot cell
        grid = grid.with_cells(cells)
        robot = Pose2D(*grid.grid_to_world(20, 20), math.pi / 2)
        local = extract_local_egocentric(grid, robot, 21)
        # facing +y: the obstacle is straight ahead, i.e. along local +x
        hits = np.argwhere(local.cells == OCCUPIED)
        np.testing.assert_array_equal(hits, [[15, 10]])

    def test_matches_brute_force_at_45deg(self):
        grid = self._random_global(5)
        robot = Pose2D(1.01, 0.97, math.pi / 4)
        local = extract_local_egocentric(grid, robot, 17)
        np.testing.assert_array_equal(local.cells, brute_force_local(grid, robot, 17))

    def test_out_of_map_is_unknown(self):
        grid = OccupancyGrid.empty(10, 10, 0.05)
        robot = Pose2D(0.05, 0.05, 0.0)
        local = extract_local_egocentric(grid, robot, 11)
        assert (local.cells[0, :] == UNKNOWN).all()

    def test_rotation_commutes_at_right_angles(self):
        # extracting with theta=90deg == extracting with theta=0 then rotating
        # cell indices; windows differ by the half-cell offset at the border,
        # so compare the overlapping interior
        grid = self._random_global(9)
        center = grid.grid_to_world(20, 20)
        size = 15
        axis = extract_local_egocentric(grid, Pose2D(*center, 0.0), size)
        turned = extract_local_egocentric(grid, Pose2D(*center, math.pi / 2), size)
        for i in range(size):
            for j in range(size - 1):
                assert turned.cells[i, j] == axis.cells[size - 2 - j, i]


class TestPgmRoundTrip:
    def test_bit_exact(self, tmp_path):
        rng = np.random.default_rng(2)
        cells = rng.choice([FREE, OCCUPIED, UNKNOWN], size=(33, 21)).astype(np.uint8)
        grid = OccupancyGrid(cells, 0.05, origin=(-1.25, 3.5))
        path = tmp_path / "map.pgm"
        save_pgm(grid, path)
        back = load_pgm(path)
        np.testing.assert_array_equal(back.cells, grid.cells)
        assert back.resolution == grid.resolution
        assert back.origin == grid.origin
        # writing the loaded grid again reproduces the files byte for byte
        path2 = tmp_path / "map2.pgm"
        save_pgm(back, path2)
        assert path.read_bytes() == path2.read_bytes()
        assert (tmp_path / "map.pgm.json").read_bytes() == (tmp_path / "map2.pgm.json").read_bytes()

    def test_rejects_bad_values(self, tmp_path):
        from baseplace import raster

        img = np.full((4, 4), 77, dtype=np.uint8)
        raster.write_pgm(tmp_path / "bad.pgm", img)
        with open(tmp_path / "bad.pgm.json", "w") as f:
            f.write('{"resolution": 0.05, "origin_x": 0, "origin_y": 0}')
        with pytest.raises(ValueError):
            load_pgm(tmp_path / "bad.pgm")
