"""Top-down geometric grasp rule (stands in for a learned affordance model)."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from mobman.assets.model import SceneObject
from mobman.errors import ObjectTooWide
from mobman.geometry import Pose3D

# tool z pointing down: a half turn about world x
TOP_DOWN = (0.0, 1.0, 0.0, 0.0)
STANDOFF = 0.10
WIDTH_MARGIN = 0.01


@dataclass(frozen=True)
class GraspPose:
    pre_grasp: Pose3D
    grasp: Pose3D
    approach_axis: tuple[float, float, float]
    required_width: float


def propose_grasp(obj: SceneObject, gripper_max_width: float, standoff: float = STANDOFF,
                  margin: float = WIDTH_MARGIN) -> GraspPose:
    lo, hi = obj.aabb()
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError(f"object {obj.id!r} has no finite bounding box")
    center = (lo + hi) / 2.0
    width = float(min(hi[0] - lo[0], hi[1] - lo[1])) + margin
    if width > gripper_max_width + 1e-12:
        raise ObjectTooWide(f"{obj.id!r} needs {width:.3f} m, gripper opens {gripper_max_width:.3f} m")
    axis = np.array([0.0, 0.0, -1.0])
    grasp = Pose3D(tuple(float(v) for v in center), TOP_DOWN)
    pre = Pose3D(tuple(float(v) for v in center - standoff * axis), TOP_DOWN)
    return GraspPose(pre, grasp, tuple(float(v) for v in axis), width)


def place_pose(point, obj: SceneObject, relative: Pose3D, clearance: float = 0.001) -> Pose3D:
    """Top-down tool pose that sets a held object down centred on ``point``.

    ``relative`` is the object pose in the tool frame. The object's AABB
    bottom ends ``clearance`` above ``point``.
    """
    tool = Pose3D((0.0, 0.0, 0.0), TOP_DOWN)
    lo, hi = replace(obj, pose=tool @ relative).aabb()
    dx = point[0] - (lo[0] + hi[0]) / 2.0
    dy = point[1] - (lo[1] + hi[1]) / 2.0
    dz = point[2] + clearance - lo[2]
    return Pose3D((float(dx), float(dy), float(dz)), TOP_DOWN)
