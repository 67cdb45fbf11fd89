#!/usr/bin/env python3
"""Regenerate the packaged scene/task/suite JSON files.

Run from the repository root:  python3 tools/make_task_data.py
"""

import json
import math
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from baseplace.scene import camera_look_at  # noqa: E402

DATA = os.path.join(os.path.dirname(__file__), "..", "src", "baseplace", "data")

BORDER_WALLS = [
    {"min": [0.0, 0.0], "max": [10.0, 0.1]},
    {"min": [0.0, 9.9], "max": [10.0, 10.0]},
    {"min": [0.0, 0.0], "max": [0.1, 10.0]},
    {"min": [9.9, 0.0], "max": [10.0, 10.0]},
]


def base_map(extra_walls=()):
    return {
        "width": 200,
        "height": 200,
        "resolution": 0.05,
        "origin": [0.0, 0.0],
        "walls": BORDER_WALLS + list(extra_walls),
    }


def camera_block(eye, target):
    cam = camera_look_at(eye, target, fx=300.0, fy=300.0, cx=160.0, cy=120.0,
                         width=320, height=240)
    return {
        "fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
        "width": cam.width, "height": cam.height,
        "rotation": cam.rotation.tolist(),
        "translation": cam.translation.tolist(),
    }


def rotated_offset(center, local_dx, local_dy, z, yaw):
    c, s = math.cos(yaw), math.sin(yaw)
    return [
        center[0] + c * local_dx - s * local_dy,
        center[1] + s * local_dx + c * local_dy,
        z,
    ]


def camera_eye(center, bearing, distance=1.9, height=2.0):
    return [
        center[0] + distance * math.cos(bearing),
        center[1] + distance * math.sin(bearing),
        height,
    ]


def obj(id_, center, extents, yaw, keypoint, direction, constrained,
        randomize=True, feature_seed=1):
    return {
        "id": id_,
        "box": {"center": list(center), "extents": list(extents), "yaw": yaw},
        "gt_keypoint": keypoint,
        "gt_direction": direction,
        "direction_constrained": constrained,
        "randomize": randomize,
        "feature_seed": feature_seed,
    }


def scene_doc(name, objects, eye, look, randomization=None):
    return {
        "schema": 1,
        "name": name,
        "map": base_map(),
        "objects": objects,
        "camera": camera_block(eye, look),
        "randomization": randomization
        or {"position_range": 0.12, "yaw_range": 0.25, "start_radius": [0.9, 1.5]},
    }


def task_doc(object_id, instruction):
    return {
        "schema": 1,
        "object_id": object_id,
        "sub_instruction": instruction,
        "preferred_radius": 0.7,
        "reach_tolerance": 0.25,
        "approach_half_angle": math.pi / 3,
    }


def make_all():
    tasks = []

    # 1. throw the can into the trash bin: open-top bin, unconstrained
    center = [5.0, 5.6, 0.3]
    tasks.append(
        (
            "throw_can_trash",
            scene_doc(
                "throw_can_trash",
                [
                    obj("trash_bin", center, [0.4, 0.4, 0.6], 0.0,
                        keypoint=[5.0, 5.6, 0.6], direction=-math.pi / 2,
                        constrained=False, feature_seed=11),
                    obj("side_table", [2.3, 7.6, 0.375], [0.8, 0.5, 0.75], 0.2,
                        keypoint=[2.3, 7.6, 0.75], direction=0.0,
                        constrained=False, randomize=False, feature_seed=12),
                ],
                eye=camera_eye(center, -math.pi / 2),
                look=[5.0, 5.6, 0.4],
            ),
            task_doc("trash_bin", "throw the can into the trash bin"),
        )
    )

    # 2. pick up the pot by its handle: pot on a small stove, handle east
    pot_center = [5.0, 5.0, 0.91]
    tasks.append(
        (
            "pot_handle",
            scene_doc(
                "pot_handle",
                [
                    obj("stove", [5.0, 5.0, 0.4], [0.45, 0.45, 0.8], 0.0,
                        keypoint=[5.0, 5.0, 0.8], direction=0.0,
                        constrained=False, randomize=False, feature_seed=21),
                    obj("pot", pot_center, [0.3, 0.3, 0.22], 0.0,
                        keypoint=[5.15, 5.0, 0.95], direction=0.0,
                        constrained=True, feature_seed=22),
                    obj("fridge", [8.3, 2.1, 0.9], [0.7, 0.7, 1.8], 0.0,
                        keypoint=[8.3, 2.1, 1.0], direction=math.pi,
                        constrained=False, randomize=False, feature_seed=23),
                ],
                eye=camera_eye(pot_center, 0.0, height=2.1),
                look=[5.0, 5.0, 0.9],
            ),
            task_doc("pot", "pick up the pot by its handle"),
        )
    )

    # 3. put the mug on the shelf: open side faces south-ish
    yaw = 0.15
    shelf_center = [5.0, 5.5, 0.7]
    open_dir = yaw - math.pi / 2
    tasks.append(
        (
            "mug_shelf",
            scene_doc(
                "mug_shelf",
                [
                    obj("shelf", shelf_center, [0.7, 0.3, 1.4], yaw,
                        keypoint=rotated_offset(shelf_center, 0.0, -0.15, 1.0, yaw),
                        direction=open_dir, constrained=True, feature_seed=31),
                    obj("couch", [2.0, 2.1, 0.4], [1.6, 0.6, 0.8], 0.0,
                        keypoint=[2.0, 2.1, 0.8], direction=math.pi / 2,
                        constrained=False, randomize=False, feature_seed=32),
                ],
                eye=camera_eye(shelf_center, open_dir, height=2.3),
                look=[shelf_center[0], shelf_center[1], 0.9],
            ),
            task_doc("shelf", "put the mug on the shelf"),
        )
    )

    # 4. open the cabinet: drawer face south-ish, handle offset on the face
    yaw = 0.3
    cab_center = [5.2, 5.3, 0.6]
    face_dir = yaw - math.pi / 2
    tasks.append(
        (
            "open_cabinet",
            scene_doc(
                "open_cabinet",
                [
                    obj("cabinet", cab_center, [0.8, 0.45, 1.2], yaw,
                        keypoint=rotated_offset(cab_center, 0.12, -0.225, 0.95, yaw),
                        direction=face_dir, constrained=True, feature_seed=41),
                    obj("table", [7.9, 7.5, 0.375], [0.9, 0.6, 0.75], -0.3,
                        keypoint=[7.9, 7.5, 0.75], direction=math.pi,
                        constrained=False, randomize=False, feature_seed=42),
                ],
                eye=camera_eye(cab_center, face_dir, height=2.1),
                look=[cab_center[0], cab_center[1], 0.8],
            ),
            task_doc("cabinet", "open the cabinet"),
        )
    )

    # 5. open the dishwasher: door face east-ish
    yaw = -0.2
    dw_center = [4.8, 5.2, 0.425]
    tasks.append(
        (
            "open_dishwasher",
            scene_doc(
                "open_dishwasher",
                [
                    obj("dishwasher", dw_center, [0.55, 0.55, 0.85], yaw,
                        keypoint=rotated_offset(dw_center, 0.275, 0.0, 0.8, yaw),
                        direction=yaw, constrained=True, feature_seed=51),
                    obj("bin", [7.6, 3.0, 0.25], [0.35, 0.35, 0.5], 0.0,
                        keypoint=[7.6, 3.0, 0.5], direction=math.pi,
                        constrained=False, randomize=False, feature_seed=52),
                ],
                eye=camera_eye(dw_center, yaw, height=2.0),
                look=[dw_center[0], dw_center[1], 0.7],
            ),
            task_doc("dishwasher", "open the dishwasher"),
        )
    )

    os.makedirs(os.path.join(DATA, "scenes"), exist_ok=True)
    os.makedirs(os.path.join(DATA, "tasks"), exist_ok=True)
    suite = {"schema": 1, "tasks": []}
    for name, scene, task in tasks:
        with open(os.path.join(DATA, "scenes", f"{name}.json"), "w") as f:
            json.dump(scene, f, indent=1, sort_keys=True)
            f.write("\n")
        with open(os.path.join(DATA, "tasks", f"{name}.json"), "w") as f:
            json.dump(task, f, indent=1, sort_keys=True)
            f.write("\n")
        suite["tasks"].append(
            {"name": name, "scene": f"scenes/{name}.json", "task": f"tasks/{name}.json"}
        )
    with open(os.path.join(DATA, "suite.json"), "w") as f:
        json.dump(suite, f, indent=1, sort_keys=True)
        f.write("\n")
    print(f"wrote {len(tasks)} scene/task pairs under {os.path.normpath(DATA)}")


if __name__ == "__main__":
    make_all()
