"""World description files: objects, named locations, robot spawns."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from mobman.assets.library import AssetManifest, Mount, assemble
from mobman.assets.model import CollisionShape, RobotModel, SceneObject
from mobman.config import read_yaml
from mobman.errors import ConfigError, MobmanError
from mobman.geometry import Pose2D, Pose3D
from mobman.sim.world import WorldState, spawn_robot

DEFAULT_MOUNTS = (
    {"unit": "arm6", "link": "base/base_link", "offset": {"xyz": [0.0, 0.0, 0.32]}},
    {"unit": "pj_gripper", "link": "arm/wrist3", "offset": {"xyz": [0.0, 0.0, 0.03]}},
)


@dataclass(frozen=True)
class Location:
    name: str
    base: Pose2D
    # surface point where objects are set down here, if any
    place: Optional[tuple[float, float, float]] = None


@dataclass(frozen=True)
class RobotSpawn:
    id: str
    model: RobotModel
    pose: Pose2D
    joints: dict = field(default_factory=dict)


@dataclass(frozen=True)
class WorldFile:
    bounds: tuple[float, float, float, float]
    objects: tuple[SceneObject, ...]
    locations: dict
    robots: tuple[RobotSpawn, ...]
    path: Optional[str] = None

    def location(self, name: str) -> Location:
        try:
            return self.locations[name]
        except KeyError:
            raise ConfigError(f"unknown location {name!r}") from None

    def build(self) -> WorldState:
        robots = {r.id: spawn_robot(r.model, r.pose, r.joints) for r in self.robots}
        return WorldState(robots, self.objects, 0.0)

    def robot(self, robot_id: str) -> RobotSpawn:
        for r in self.robots:
            if r.id == robot_id:
                return r
        raise ConfigError(f"world has no robot {robot_id!r}")


def _pose3d(d, where) -> Pose3D:
    if d is None:
        return Pose3D()
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: pose must be a mapping with xyz/rpy")
    return Pose3D.from_xyz_rpy(tuple(d.get("xyz", (0, 0, 0))), tuple(d.get("rpy", (0, 0, 0))))


def _pose2d(d, where) -> Pose2D:
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected {{x, y, theta}}")
    try:
        return Pose2D(float(d.get("x", 0.0)), float(d.get("y", 0.0)), float(d.get("theta", 0.0)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _object(d, manifest: AssetManifest, i: int) -> SceneObject:
    where = f"objects[{i}]"
    if not isinstance(d, dict) or "id" not in d:
        raise ConfigError(f"{where}: every object needs an id")
    pose = _pose3d(d.get("pose"), where)
    movable = bool(d.get("movable", False))
    if "asset" in d:
        try:
            return manifest.scene_object(d["asset"], d["id"], pose, movable)
        except MobmanError as exc:
            raise ConfigError(f"{where}: {exc}") from None
    s = d.get("shape")
    if not isinstance(s, dict):
        raise ConfigError(f"{where}: needs either asset or shape")
    try:
        shape = CollisionShape(s["kind"], tuple(float(v) for v in s["dimensions"]), _pose3d(s.get("offset"), where))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{where}: bad shape ({exc})") from None
    return SceneObject(d["id"], shape, pose, movable)


def _robot(d, manifest: AssetManifest, i: int) -> RobotSpawn:
    where = f"robots[{i}]"
    mounts = [Mount(m["unit"], m["link"], _pose3d(m.get("offset"), where)) for m in d.get("mounts", DEFAULT_MOUNTS)]
    try:
        model = assemble(manifest, d.get("base", "diffdrive_base"), mounts, name=d.get("name", "mobman"))
    except MobmanError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    joints = {str(k): float(v) for k, v in (d.get("joints") or {}).items()}
    for n in joints:
        if n not in {j.name for j in model.actuated_joints}:
            raise ConfigError(f"{where}: unknown joint {n!r}")
    return RobotSpawn(str(d.get("id", "robot")), model, _pose2d(d.get("spawn", {}), where), joints)


def load_world(path: Union[str, Path], manifest: Optional[AssetManifest] = None) -> WorldFile:
    data = read_yaml(path)
    return parse_world(data, manifest, str(path))


def parse_world(data: dict, manifest: Optional[AssetManifest] = None, path: Optional[str] = None) -> WorldFile:
    manifest = manifest or AssetManifest.load()
    objs = tuple(_object(o, manifest, i) for i, o in enumerate(data.get("objects") or []))
    ids = [o.id for o in objs]
    if len(set(ids)) != len(ids):
        raise ConfigError("object ids must be unique")
    locs = {}
    for name, d in (data.get("locations") or {}).items():
        place = d.get("place")
        locs[str(name)] = Location(str(name), _pose2d(d.get("base", {}), f"locations.{name}"),
                                   tuple(float(v) for v in place) if place is not None else None)
    robots = tuple(_robot(r, manifest, i) for i, r in enumerate(data.get("robots") or [{}]))
    b = data.get("bounds")
    if b is None:
        raise ConfigError("world file needs bounds [x_min, y_min, x_max, y_max]")
    bounds = tuple(float(v) for v in b)
    if len(bounds) != 4 or bounds[0] >= bounds[2] or bounds[1] >= bounds[3]:
        raise ConfigError("bounds must be [x_min, y_min, x_max, y_max] with min < max")
    return WorldFile(bounds, objs, locs, robots, path)
