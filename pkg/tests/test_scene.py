import copy
import json
import math

import numpy as np
import pytest

from baseplace.gridmap import OCCUPIED, compute_free_set
from baseplace.keypoints import load_features, save_features
from baseplace.scene import (
    Box,
    CameraModel,
    RandomizationError,
    SceneError,
    camera_look_at,
    footprint_cells,
    load_depth_pgm,
    load_mask_pgm,
    load_scene,
    load_task,
    randomize_trial,
    save_depth_pgm,
    save_mask_pgm,
    synthetic_capture,
    synthetic_features,
    trial_ground_truth,
)
from conftest import simple_task_doc


class TestLoading:
    def test_minimal_scene_valid(self, scene_doc):
        scene = load_scene(scene_doc)
        assert scene.name == "simple"
        assert scene.base_grid.width == 200
        assert len(scene.objects) == 1

    def test_object_out_of_bounds_names_object(self, scene_doc):
        doc = copy.deepcopy(scene_doc)
        doc["objects"][0]["box"]["center"] = [10.5, 5.0, 0.3]
        with pytest.raises(SceneError, match="crate"):
            load_scene(doc)

    def test_duplicate_id_rejected(self, scene_doc):
        doc = copy.deepcopy(scene_doc)
        doc["objects"].append(copy.deepcopy(doc["objects"][0]))
        with pytest.raises(SceneError, match="duplicate"):
            load_scene(doc)

    def test_schema_violation_names_field(self, scene_doc):
        doc = copy.deepcopy(scene_doc)
        del doc["objects"][0]["gt_direction"]
        with pytest.raises(SceneError, match="gt_direction"):
            load_scene(doc)

    def test_keypoint_outside_box_rejected(self, scene_doc):
        doc = copy.deepcopy(scene_doc)
        doc["objects"][0]["gt_keypoint"] = [5.0, 5.0, 0.45]
        with pytest.raises(SceneError, match="gt_keypoint"):
            load_scene(doc)

    def test_missing_schema_version(self, scene_doc):
        doc = copy.deepcopy(scene_doc)
        doc["schema"] = 99
        with pytest.raises(SceneError, match="schema"):
            load_scene(doc)

    def test_task_loading(self):
        task = load_task(simple_task_doc())
        assert task.preferred_radius == 0.7
        assert task.object_id == "crate"

    def test_footprint_stamped_occupied(self, simple_scene):
        grid = simple_scene.composed_grid()
        fp = footprint_cells(grid, simple_scene.objects[0].box)
        assert len(fp) == pytest.approx((0.4 / 0.05) ** 2, abs=20)
        assert (grid.cells[fp[:, 0], fp[:, 1]] == OCCUPIED).all()


class TestRandomize:
    def test_deterministic(self, simple_scene, simple_task):
        a = randomize_trial(simple_scene, simple_task, 42)
        b = randomize_trial(simple_scene, simple_task, 42)
        assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(
            b.to_dict(), sort_keys=True
        )

    def test_twenty_seeds_distinct_and_free(self, simple_scene, simple_task):
        starts = set()
        for seed in range(20):
            setup = randomize_trial(simple_scene, simple_task, seed)
            starts.add((setup.robot_start.x, setup.robot_start.y))
            world = simple_scene.composed_grid(setup)
            free = compute_free_set(world)
            assert free.contains_point(setup.robot_start.x, setup.robot_start.y)
        assert len(starts) == 20

    def test_start_within_annulus_facing_target(self, simple_scene, simple_task):
        setup = randomize_trial(simple_scene, simple_task, 7)
        dx, dy, _ = setup.perturbations["crate"]
        obj = simple_scene.objects[0]
        center = obj.box.center[:2] + np.array([dx, dy])
        d = math.hypot(setup.robot_start.x - center[0], setup.robot_start.y - center[1])
        assert 0.9 <= d <= 1.5
        bearing = math.atan2(center[1] - setup.robot_start.y, center[0] - setup.robot_start.x)
        assert setup.robot_start.theta == pytest.approx(bearing)

    def test_zero_ranges_equal_nominal(self, scene_doc, simple_task):
        doc = copy.deepcopy(scene_doc)
        doc["randomization"]["position_range"] = 0.0
        doc["randomization"]["yaw_range"] = 0.0
        scene = load_scene(doc)
        setup = randomize_trial(scene, simple_task, 5)
        assert setup.perturbations["crate"] == (0.0, 0.0, 0.0)

    def test_impossible_start_raises(self, scene_doc, simple_task):
        doc = copy.deepcopy(scene_doc)
        # wall everything except the object area: no free start cell remains
        doc["map"]["walls"] = [{"min": [0.0, 0.0], "max": [10.0, 10.0]}]
        scene = load_scene(doc)
        with pytest.raises(RandomizationError):
            randomize_trial(scene, simple_task, 0)

    def test_setup_round_trip(self, simple_scene, simple_task):
        setup = randomize_trial(simple_scene, simple_task, 3)
        from baseplace.scene import TrialSetup

        back = TrialSetup.from_dict(json.loads(json.dumps(setup.to_dict())))
        assert back.to_dict() == setup.to_dict()


def scalar_slab_hit(origin, direction, box):
    """Independent scalar slab-method oracle."""
    c, s = math.cos(-box.yaw), math.sin(-box.yaw)
    o = np.array(
        [
            c * (origin[0] - box.center[0]) - s * (origin[1] - box.center[1]),
            s * (origin[0] - box.center[0]) + c * (origin[1] - box.center[1]),
            origin[2] - box.center[2],
        ]
    )
    d = np.array(
        [
            c * direction[0] - s * direction[1],
            s * direction[0] + c * direction[1],
            direction[2],
        ]
    )
    tmin, tmax = -math.inf, math.inf
    for axis in range(3):
        h = box.extents[axis] / 2.0
        if abs(d[axis]) < 1e-12:
            if abs(o[axis]) > h:
                return math.inf
            continue
        t1 = (-h - o[axis]) / d[axis]
        t2 = (h - o[axis]) / d[axis]
        t1, t2 = min(t1, t2), max(t1, t2)
        tmin, tmax = max(tmin, t1), min(tmax, t2)
    if tmax >= tmin and tmin > 1e-9:
        return tmin
    return math.inf


class TestCapture:
    def _axis_scene(self, scene_doc):
        doc = copy.deepcopy(scene_doc)
        doc["objects"][0]["box"] = {
            "center": [5.0, 5.0, 0.5],
            "extents": [1.0, 1.0, 1.0],
            "yaw": 0.0,
        }
        doc["objects"][0]["gt_keypoint"] = [5.0, 5.0, 1.0]
        # straight-down camera 2 m above the box center
        doc["camera"]["rotation"] = [[1, 0, 0], [0, -1, 0], [0, 0, -1]]
        doc["camera"]["translation"] = [5.0, 5.0, 2.5]
        doc["camera"]["cx"] = 160.0
        doc["camera"]["cy"] = 120.0
        return load_scene(doc)

    def test_axis_aligned_depth(self, scene_doc):
        scene = self._axis_scene(scene_doc)
        depth, mask = synthetic_capture(scene, "crate")
        assert depth[120, 160] == pytest.approx(1.5, abs=1e-9)
        assert mask[120, 160]

    def test_miss_is_infinite(self, scene_doc):
        scene = self._axis_scene(scene_doc)
        depth, mask = synthetic_capture(scene, "crate")
        assert math.isinf(depth[0, 0])
        assert not mask[0, 0]

    def test_matches_scalar_slab_oracle(self):
        rng = np.random.default_rng(12)
        for _ in range(5):
            center = rng.uniform(3.0, 7.0, size=3)
            center[2] = rng.uniform(0.2, 0.8)
            box = Box(
                center=center,
                extents=rng.uniform(0.3, 1.2, size=3),
                yaw=float(rng.uniform(-math.pi, math.pi)),
            )
            eye = center + np.array(
                [rng.uniform(1.0, 2.5) * math.cos(a := rng.uniform(0, 2 * math.pi)),
                 rng.uniform(1.0, 2.5) * math.sin(a),
                 rng.uniform(1.0, 2.0)]
            )
            camera = camera_look_at(eye, center, 120.0, 120.0, 32.0, 24.0, 64, 48)
            origin, dirs = camera.rays_world()
            from baseplace.scene import _ray_box_hits

            got = _ray_box_hits(origin, dirs.reshape(-1, 3), box)
            flat = dirs.reshape(-1, 3)
            for i in range(0, len(flat), 97):
                expected = scalar_slab_hit(origin, flat[i], box)
                if math.isinf(expected):
                    assert math.isinf(got[i])
                else:
                    assert got[i] == pytest.approx(expected, abs=1e-9)

    def test_unknown_target_rejected(self, simple_scene):
        with pytest.raises(SceneError, match="nope"):
            synthetic_capture(simple_scene, "nope")


class TestGroundTruth:
    def test_centroid_near_box_center(self, simple_scene, simple_task):
        gt = trial_ground_truth(simple_scene, "crate", None)
        np.testing.assert_allclose(gt.centroid, [5.0, 6.0], atol=0.05)
        assert gt.direction == pytest.approx(-math.pi / 2)

    def test_perturbation_moves_ground_truth(self, simple_scene, simple_task):
        setup = randomize_trial(simple_scene, simple_task, 11)
        gt = trial_ground_truth(simple_scene, "crate", setup)
        dx, dy, dyaw = setup.perturbations["crate"]
        assert gt.direction == pytest.approx(-math.pi / 2 + dyaw)
        np.testing.assert_allclose(gt.centroid, [5.0 + dx, 6.0 + dy], atol=0.08)


class TestIO:
    def test_feature_round_trip(self, simple_scene, tmp_path):
        depth, mask = synthetic_capture(simple_scene, "crate")
        fg = synthetic_features(simple_scene, "crate", depth, mask)
        assert mask.sum() > 100
        path = tmp_path / "feat.bin"
        save_features(fg, path)
        back = load_features(path)
        np.testing.assert_array_equal(back, fg.features)

    def test_depth_mask_round_trip(self, simple_scene, tmp_path):
        depth, mask = synthetic_capture(simple_scene, "crate")
        save_depth_pgm(depth, tmp_path / "d.pgm")
        save_mask_pgm(mask, tmp_path / "m.pgm")
        depth_back = load_depth_pgm(tmp_path / "d.pgm")
        mask_back = load_mask_pgm(tmp_path / "m.pgm")
        np.testing.assert_array_equal(mask_back, mask)
        finite = np.isfinite(depth)
        np.testing.assert_array_equal(np.isfinite(depth_back), finite)
        assert np.abs(depth_back[finite] - depth[finite]).max() <= 0.0005 + 1e-9
