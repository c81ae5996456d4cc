"""Reference worlds and the fixed scenes used by tests, scripts and the CLI."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from mobman.assets.library import gripper_joint_positions, reference_robot
from mobman.assets.model import CollisionShape, RobotModel, SceneObject
from mobman.geometry import JointState, Pose2D, Pose3D
from mobman.sim.collision import placed_object
from mobman.sim.world import LidarConfig, LidarScan, WorldState, raycast_lidar
from mobman.worldfile import WorldFile, load_world

DATA_DIR = Path(__file__).parent / "data"
KITCHEN_WORLD = DATA_DIR / "kitchen.yaml"
KITCHEN_CONFIG = DATA_DIR / "kitchen_config.yaml"
BOX_ROOM_WORLD = DATA_DIR / "box_room.yaml"


def kitchen() -> WorldFile:
    return load_world(KITCHEN_WORLD)


def box_room() -> WorldFile:
    return load_world(BOX_ROOM_WORLD)


# --- single-obstacle arm scene ----------------------------------------------------

@dataclass(frozen=True)
class ArmScene:
    model: RobotModel
    base: Pose2D
    start: JointState
    goal: JointState
    obstacles: tuple[SceneObject, ...]
    fixed: dict


def single_obstacle_scene(model: Optional[RobotModel] = None) -> ArmScene:
    """The reference robot at the origin swinging its arm past one box.

    Start and goal differ only in the shoulder pan (-1 rad to +1 rad), so the
    straight joint-space motion sweeps the forearm through the box.
    """
    model = model or reference_robot()
    arm = model.group("arm")
    box = SceneObject("obstacle", CollisionShape("box", (0.3, 0.3, 0.5)), Pose3D((0.55, 0.0, 0.25)))
    start = JointState(arm, (-1.0, 0.9, 0.9, 0.0, 0.9, 0.0))
    goal = JointState(arm, (1.0, 0.9, 0.9, 0.0, 0.9, 0.0))
    return ArmScene(model, Pose2D(), start, goal, (box,), gripper_joint_positions(model, 0.09))


# --- box-room traversal -----------------------------------------------------------

# loop around the room, clear of all three boxes
TRAVERSAL_CORNERS = ((0.5, 0.4), (3.6, 0.4), (3.6, 2.6), (0.5, 2.6))


def traversal_poses(n: int = 50, corners=TRAVERSAL_CORNERS) -> list[Pose2D]:
    """``n`` poses evenly spaced by arc length along a closed polyline, facing along it."""
    pts = [np.asarray(c, dtype=float) for c in corners] + [np.asarray(corners[0], dtype=float)]
    seg = [np.linalg.norm(b - a) for a, b in zip(pts, pts[1:])]
    total = sum(seg)
    out = []
    for i in range(n):
        s = total * i / n
        k = 0
        while s > seg[k]:
            s -= seg[k]
            k += 1
        a, b = pts[k], pts[k + 1]
        p = a + (b - a) * (s / seg[k])
        out.append(Pose2D(p[0], p[1], math.atan2(b[1] - a[1], b[0] - a[0])))
    return out


def traversal_scans(world: WorldState, poses, cfg: LidarConfig = LidarConfig()) -> list[tuple[Pose2D, LidarScan]]:
    return [(p, raycast_lidar(world, p, cfg)) for p in poses]


def _inside(placed, p: np.ndarray) -> bool:
    local = placed.rot.T @ (p - placed.center)
    if placed.kind == "box":
        return bool(np.all(np.abs(local) <= np.asarray(placed.dims) / 2.0))
    if placed.kind == "sphere":
        return bool(np.linalg.norm(local) <= placed.dims[0])
    r, length = placed.dims
    if placed.kind == "cylinder":
        return bool(math.hypot(local[0], local[1]) <= r and abs(local[2]) <= length / 2.0)
    z = max(-length / 2.0, min(length / 2.0, local[2]))
    return bool(np.linalg.norm(local - np.array([0.0, 0.0, z])) <= r)


def rasterize(objects, width: int, height: int, resolution: float, origin: Pose2D, z: float) -> np.ndarray:
    """Boolean (height, width) mask: cell centre at height ``z`` lies inside some object."""
    mask = np.zeros((height, width), dtype=bool)
    placed = [placed_object(o)[0] for o in objects]
    for r in range(height):
        y = origin.y + (r + 0.5) * resolution
        for c in range(width):
            x = origin.x + (c + 0.5) * resolution
            p = np.array([x, y, z])
            mask[r, c] = any(_inside(pl, p) for pl in placed)
    return mask
