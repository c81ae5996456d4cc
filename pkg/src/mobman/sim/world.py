"""Kinematic world simulation: velocity-driven stepping, grasping, sensors."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

import numpy as np

from mobman.assets.library import gripper_joint_positions, gripper_max_width, tip_link
from mobman.assets.model import RobotModel, SceneObject
from mobman.errors import NothingAttached, TooFarToGrasp, UnknownObject, UnknownRobot
from mobman.geometry import JointState, Pose2D, Pose3D, Twist2D, integrate_unicycle, invert
from mobman.kinematics import link_transforms
from mobman.sensors import LidarScan  # noqa: F401  (re-exported)
from mobman.sim.collision import AttachedBody, Placed, base_transform, check_collision, placed_object, ray_distance


@dataclass(frozen=True)
class LidarConfig:
    n_beams: int = 180
    fov: float = 2 * math.pi
    max_range: float = 8.0
    height: float = 0.2

    @property
    def no_hit(self) -> float:
        return self.max_range + 1.0

    def angles(self) -> tuple[float, float]:
        """(angle_min, angle_increment) relative to the sensor heading.

        A full circle starts at the heading and splits evenly; a partial fan is
        centred on the heading with beams at both edges.
        """
        if self.fov >= 2 * math.pi - 1e-12:
            return 0.0, 2 * math.pi / self.n_beams
        if self.n_beams == 1:
            return 0.0, 0.0
        return -self.fov / 2.0, self.fov / (self.n_beams - 1)


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.02
    odom_noise_std: tuple[float, float] = (0.0, 0.0)
    lidar: LidarConfig = LidarConfig()
    rng_seed: int = 0
    grasp_reach: float = 0.05
    gripper_speed: float = 0.1
    penetration_eps: float = 1e-6

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if min(self.odom_noise_std) < 0:
            raise ValueError("noise std must be >= 0")


@dataclass(frozen=True)
class Grasp:
    object_id: str
    relative: Pose3D  # object pose in the tool frame


@dataclass(frozen=True)
class RobotState:
    model: RobotModel
    base: Pose2D = Pose2D()
    joints: JointState = JointState()
    gripper_width: float = 0.0
    grasp: Optional[Grasp] = None
    collided: bool = False

    def full_joint_map(self) -> dict[str, float]:
        q = self.joints.as_dict()
        q.update(gripper_joint_positions(self.model, self.gripper_width))
        return q


@dataclass(frozen=True)
class RobotCommand:
    twist: Twist2D = Twist2D()
    joint_targets: Optional[Mapping[str, float]] = None
    gripper_width: Optional[float] = None


@dataclass(frozen=True)
class WorldState:
    robots: Mapping[str, RobotState] = field(default_factory=dict)
    objects: tuple[SceneObject, ...] = ()
    time: float = 0.0

    def robot(self, robot_id: str) -> RobotState:
        try:
            return self.robots[robot_id]
        except KeyError:
            raise UnknownRobot(robot_id) from None

    def object(self, object_id: str) -> SceneObject:
        for o in self.objects:
            if o.id == object_id:
                return o
        raise UnknownObject(object_id)

    def with_robot(self, robot_id: str, state: RobotState) -> "WorldState":
        robots = dict(self.robots)
        robots[robot_id] = state
        return replace(self, robots=robots)

    def with_object(self, obj: SceneObject) -> "WorldState":
        return replace(self, objects=tuple(obj if o.id == obj.id else o for o in self.objects))


def spawn_robot(model: RobotModel, base: Pose2D = Pose2D(), joints: Optional[Mapping[str, float]] = None,
                gripper_width: Optional[float] = None) -> RobotState:
    """Robot state with every non-gripper actuated joint at 0 (or ``joints``)."""
    fingers = set(model.group("gripper"))
    names = [j.name for j in model.actuated_joints if j.name not in fingers]
    given = dict(joints or {})
    q = JointState(tuple(names), tuple(given.get(n, 0.0) for n in names))
    width = gripper_max_width(model) if gripper_width is None and fingers else (gripper_width or 0.0)
    return RobotState(model, base, q, width)


def tool_world_transform(state: RobotState, frames=None) -> np.ndarray:
    frames = frames if frames is not None else link_transforms(state.model, state.full_joint_map())
    return base_transform(state.base) @ frames[tip_link(state.model)]


def _attached_bodies(world: WorldState, state: RobotState) -> list[AttachedBody]:
    if state.grasp is None:
        return []
    return [AttachedBody(world.object(state.grasp.object_id), tip_link(state.model), state.grasp.relative)]


def object_width(obj: SceneObject) -> float:
    lo, hi = obj.aabb()
    return float(min(hi[0] - lo[0], hi[1] - lo[1]))


def _move_toward(cur: float, target: float, max_delta: float) -> float:
    d = target - cur
    if abs(d) <= max_delta:
        return target
    return cur + math.copysign(max_delta, d)


def _advance_robot(world: WorldState, state: RobotState, cmd: RobotCommand, dt: float,
                   cfg: SimConfig) -> RobotState:
    model = state.model
    base = state.base
    if cmd.twist.v != 0.0 or cmd.twist.w != 0.0:
        base = integrate_unicycle(base, cmd.twist, dt)
    names = state.joints.names
    pos = list(state.joints.positions)
    vel = [0.0] * len(names)
    if cmd.joint_targets:
        for i, n in enumerate(names):
            if n in cmd.joint_targets:
                vmax = model.joint(n).max_velocity
                new = _move_toward(pos[i], float(cmd.joint_targets[n]), vmax * dt)
                vel[i] = (new - pos[i]) / dt
                pos[i] = new
    width = state.gripper_width
    if cmd.gripper_width is not None and model.group("gripper"):
        target = min(max(cmd.gripper_width, 0.0), gripper_max_width(model))
        if state.grasp is not None:
            target = max(target, object_width(world.object(state.grasp.object_id)))
        width = _move_toward(width, target, cfg.gripper_speed * dt)
    moved = base != state.base or any(vel) or width != state.gripper_width
    if not moved:
        return replace(state, joints=JointState(names, tuple(pos), tuple(vel)), collided=False)
    candidate = replace(state, base=base, joints=JointState(names, tuple(pos), tuple(vel)), gripper_width=width)
    ignore = {state.grasp.object_id} if state.grasp else set()
    if check_collision(model, base, candidate.full_joint_map(), world.objects, ignore,
                       _attached_bodies(world, state)):
        return replace(state, joints=JointState(names, state.joints.positions), collided=True)
    return replace(candidate, collided=False)


def _carry_grasped(world: WorldState, robot_id: str) -> WorldState:
    state = world.robots[robot_id]
    if state.grasp is None:
        return world
    obj = world.object(state.grasp.object_id)
    m = tool_world_transform(state) @ state.grasp.relative.as_matrix()
    return world.with_object(replace(obj, pose=Pose3D.from_matrix(m)))


def step(world: WorldState, commands: Mapping[str, RobotCommand], dt: float, cfg: SimConfig = SimConfig()) -> WorldState:
    """Advance every robot by one tick; colliding motions are cancelled whole."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    for rid in commands:
        if rid not in world.robots:
            raise UnknownRobot(rid)
    for rid in sorted(world.robots):
        cmd = commands.get(rid) or RobotCommand()
        state = _advance_robot(world, world.robots[rid], cmd, dt, cfg)
        world = _carry_grasped(world.with_robot(rid, state), rid)
    return replace(world, time=world.time + dt)


def attach(world: WorldState, robot_id: str, object_id: str, cfg: SimConfig = SimConfig()) -> WorldState:
    """Couple an object to the robot's tool frame."""
    state = world.robot(robot_id)
    obj = world.object(object_id)
    tool = tool_world_transform(state)
    shape, _ = placed_object(obj)
    dist = _point_shape_distance(tool[:3, 3], shape)
    if dist > cfg.grasp_reach:
        raise TooFarToGrasp(f"{object_id!r} is {dist:.3f} m from the gripper (reach {cfg.grasp_reach} m)")
    if state.gripper_width + 1e-9 < object_width(obj):
        raise TooFarToGrasp(f"gripper width {state.gripper_width:.3f} m below object width {object_width(obj):.3f} m")
    rel = invert(Pose3D.from_matrix(tool)) @ obj.pose
    world = world.with_robot(robot_id, replace(state, grasp=Grasp(object_id, rel)))
    return world


def detach(world: WorldState, robot_id: str) -> WorldState:
    state = world.robot(robot_id)
    if state.grasp is None:
        raise NothingAttached(f"robot {robot_id!r} holds nothing")
    return world.with_robot(robot_id, replace(state, grasp=None))


def _point_shape_distance(p, shape: Placed) -> float:
    if shape.contains(p):
        return 0.0
    from mobman.sim.collision import gjk_distance

    point = Placed("sphere", (1e-12,), np.eye(3), np.asarray(p, dtype=float))
    return gjk_distance(point, shape)


def grasp_candidate(world: WorldState, robot_id: str, cfg: SimConfig = SimConfig()) -> Optional[str]:
    """Nearest movable object the open gripper could close on, if any."""
    state = world.robot(robot_id)
    p = tool_world_transform(state)[:3, 3]
    best = None
    for obj in world.objects:
        if not obj.movable:
            continue
        d = _point_shape_distance(p, placed_object(obj)[0])
        if d <= cfg.grasp_reach and state.gripper_width + 1e-9 >= object_width(obj):
            if best is None or (d, obj.id) < best:
                best = (d, obj.id)
    return best[1] if best else None


def raycast_lidar(world: WorldState, sensor_pose: Pose2D, cfg: LidarConfig = LidarConfig(),
                  ignore=()) -> LidarScan:
    """Planar scan at ``cfg.height`` against every object shape."""
    ignore = set(ignore)
    origin = np.array([sensor_pose.x, sensor_pose.y, cfg.height])
    shapes = []
    for obj in world.objects:
        if obj.id in ignore:
            continue
        shape, (lo, hi) = placed_object(obj)
        if lo[2] > cfg.height or hi[2] < cfg.height:
            continue
        cx, cy = (lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2
        rad = math.hypot(hi[0] - lo[0], hi[1] - lo[1]) / 2
        shapes.append((shape, cx, cy, rad))
    amin, inc = cfg.angles()
    ranges = []
    for i in range(cfg.n_beams):
        a = sensor_pose.theta + amin + i * inc
        d = np.array([math.cos(a), math.sin(a), 0.0])
        best = math.inf
        for shape, cx, cy, rad in shapes:
            # skip shapes whose bounding circle the beam cannot touch
            rx, ry = cx - origin[0], cy - origin[1]
            along = rx * d[0] + ry * d[1]
            if along < -rad or abs(rx * d[1] - ry * d[0]) > rad or along - rad > best:
                continue
            t = ray_distance(shape, origin, d)
            if t is not None and t < best:
                best = t
        ranges.append(best if best <= cfg.max_range and best > 0 else cfg.no_hit)
    return LidarScan(amin, inc, tuple(ranges), world.time, cfg.max_range)


def read_odometry(world: WorldState, robot_id: str, rng: np.random.Generator,
                  noise_std: tuple[float, float] = (0.0, 0.0)) -> tuple[Pose2D, float]:
    """Ground-truth base pose plus Gaussian noise; exact when noise is zero."""
    pose = world.robot(robot_id).base
    sxy, sth = noise_std
    if sxy > 0 or sth > 0:
        dx, dy = rng.normal(0.0, sxy, 2) if sxy > 0 else (0.0, 0.0)
        dth = rng.normal(0.0, sth) if sth > 0 else 0.0
        pose = Pose2D(pose.x + dx, pose.y + dy, pose.theta + dth)
    return pose, world.time


def robot_in_collision(world: WorldState, robot_id: str) -> bool:
    state = world.robot(robot_id)
    ignore = {state.grasp.object_id} if state.grasp else set()
    return check_collision(state.model, state.base, state.full_joint_map(), world.objects, ignore,
                           _attached_bodies(world, state))
