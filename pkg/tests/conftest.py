import copy
import math

import pytest

from baseplace.scene import camera_look_at, load_scene


def simple_scene_doc():
    """One freestanding box on an open 10x10 m map, camera on the approach
    side looking at the object."""
    camera = camera_look_at(
        eye=(5.0, 4.0, 1.9),
        target=(5.0, 6.0, 0.4),
        fx=300.0,
        fy=300.0,
        cx=160.0,
        cy=120.0,
        width=320,
        height=240,
    )
    return {
        "schema": 1,
        "name": "simple",
        "map": {
            "width": 200,
            "height": 200,
            "resolution": 0.05,
            "origin": [0.0, 0.0],
            "walls": [],
        },
        "objects": [
            {
                "id": "crate",
                "box": {
                    "center": [5.0, 6.0, 0.3],
                    "extents": [0.4, 0.4, 0.6],
                    "yaw": 0.0,
                },
                "gt_keypoint": [5.0, 5.8, 0.45],
                "gt_direction": -math.pi / 2,
                "direction_constrained": True,
                "feature_seed": 3,
            }
        ],
        "camera": {
            "fx": camera.fx,
            "fy": camera.fy,
            "cx": camera.cx,
            "cy": camera.cy,
            "width": camera.width,
            "height": camera.height,
            "rotation": camera.rotation.tolist(),
            "translation": camera.translation.tolist(),
        },
        "randomization": {
            "position_range": 0.1,
            "yaw_range": 0.2,
            "start_radius": [0.9, 1.5],
        },
    }


def simple_task_doc():
    return {
        "schema": 1,
        "object_id": "crate",
        "sub_instruction": "open the crate lid",
        "preferred_radius": 0.7,
        "reach_tolerance": 0.25,
        "approach_half_angle": math.pi / 3,
    }


@pytest.fixture
def scene_doc():
    return simple_scene_doc()


@pytest.fixture
def simple_scene(scene_doc):
    return load_scene(copy.deepcopy(scene_doc))


@pytest.fixture
def simple_task():
    from baseplace.scene import load_task

    return load_task(simple_task_doc())
