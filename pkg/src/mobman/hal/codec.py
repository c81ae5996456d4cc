"""JSON shapes for values that cross the API boundary."""
from __future__ import annotations

import json

from mobman.assets.model import CollisionShape, SceneObject
from mobman.geometry import Pose3D


def pose3d_to_dict(p: Pose3D) -> dict:
    return {"translation": list(p.translation), "rotation": list(p.rotation)}


def pose3d_from_dict(d) -> Pose3D:
    return Pose3D(tuple(d["translation"]), tuple(d["rotation"]))


def object_to_dict(o: SceneObject) -> dict:
    return {
        "id": o.id,
        "shape": {"kind": o.shape.kind, "dimensions": list(o.shape.dimensions),
                  "offset": pose3d_to_dict(o.shape.offset)},
        "pose": pose3d_to_dict(o.pose),
        "movable": o.movable,
    }


def object_from_dict(d) -> SceneObject:
    s = d["shape"]
    shape = CollisionShape(s["kind"], tuple(s["dimensions"]), pose3d_from_dict(s["offset"]))
    return SceneObject(d["id"], shape, pose3d_from_dict(d["pose"]), bool(d["movable"]))


def encode_line(msg: dict) -> bytes:
    return (json.dumps(msg, separators=(",", ":"), allow_nan=False) + "\n").encode("utf-8")
