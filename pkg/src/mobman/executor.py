"""Skill chain: turns symbolic plan steps into navigation/manipulation skills over a RobotHandle.

Everything here goes through :class:`mobman.hal.api.RobotHandle`, so the same
execution runs unchanged on any backend.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from mobman.assets.library import gripper_joint_positions, gripper_max_width, tip_link
from mobman.assets.model import RobotModel
from mobman.control.trajectory import (JointTrajectory, TrackParams, follow_trajectory, rotate_to, track_path)
from mobman.errors import MobmanError, NoPath, UnboundSchema, UnknownObject, UnknownSkill
from mobman.geometry import JointState, Pose2D, Pose3D, Twist2D, invert, normalize_angle
from mobman.hal.api import HalError, RobotHandle
from mobman.kinematics import link_transforms
from mobman.manipulation.grasp import STANDOFF, place_pose, propose_grasp
from mobman.manipulation.rrt import MotionPlanRequest, RrtParams, plan_arm
from mobman.navigation.astar import plan_global, smooth_path
from mobman.navigation.dwa import ClearanceField, DwaParams, plan_local, rollout
from mobman.navigation.grid import MapParams, OccupancyGrid, inflate, update_map
from mobman.sim.collision import AttachedBody, base_transform

SKILLS = ("navigate_to", "pick_object", "place_object", "open_gripper", "close_gripper")
SUCCESS, FAILURE = "Success", "Failure"


@dataclass(frozen=True)
class SkillBinding:
    """schema name -> (skill id, indices of the ground arguments the skill takes)."""

    schemas: Mapping[str, tuple[str, tuple[int, ...]]]
    # symbolic constant -> world object id (identity when absent)
    entities: Mapping[str, str] = field(default_factory=dict)

    def check(self, schema_names: Sequence[str]) -> None:
        for s in schema_names:
            if s not in self.schemas:
                raise UnboundSchema(s)
        for s, (skill, _) in self.schemas.items():
            if skill not in SKILLS:
                raise UnknownSkill(f"schema {s!r} bound to unknown skill {skill!r}")


FETCH_BINDINGS = SkillBinding({
    "move": ("navigate_to", (1,)),
    "pick": ("pick_object", (0,)),
    "place": ("place_object", (0, 1)),
})


@dataclass(frozen=True)
class WorldKnowledge:
    """What the executor is told rather than perceives."""

    model: RobotModel
    locations: Mapping  # name -> worldfile.Location
    bounds: tuple[float, float, float, float]
    home: Optional[Mapping[str, float]] = None
    ik_seeds: tuple[Mapping[str, float], ...] = ()


# arm configurations that start IK in front of and below the shoulder
REFERENCE_IK_SEEDS = (
    {"arm/shoulder_pan": 0.0, "arm/shoulder_lift": 0.6, "arm/elbow": 1.2, "arm/wrist_1": 0.0,
     "arm/wrist_2": 1.3, "arm/wrist_3": 0.0},
    {"arm/shoulder_pan": 0.0, "arm/shoulder_lift": 0.3, "arm/elbow": 1.5, "arm/wrist_1": 0.0,
     "arm/wrist_2": 1.3, "arm/wrist_3": 0.0},
)


@dataclass(frozen=True)
class ExecConfig:
    map_params: MapParams = MapParams()
    resolution: float = 0.05
    inflation_radius: float = 0.35
    allow_unknown: bool = True
    rescan_every: int = 25
    max_replans: int = 5
    stall_ticks: int = 25
    guard_horizon: float = 0.3
    # turn in place toward the path first when starting further off-heading than this
    align_tol: float = math.pi / 8
    dwa: DwaParams = DwaParams(robot_radius=0.2)
    track: TrackParams = TrackParams()
    heading_tol: float = 0.05
    rrt: RrtParams = RrtParams()
    standoff: float = STANDOFF
    place_clearance: float = 0.001
    settle_time: float = 0.5
    settle_tol: float = 1e-3
    diverge_tol: float = 0.5


@dataclass
class Outcome:
    status: str
    reason: Optional[str] = None
    detail: str = ""
    metrics: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == SUCCESS


@dataclass
class StepReport:
    index: int
    action: str
    kind: str
    skill: str
    outcome: Outcome
    sim_time: float
    wall_time: float


@dataclass
class ExecutionReport:
    steps: list = field(default_factory=list)
    status: str = SUCCESS
    sim_time: float = 0.0
    wall_time: float = 0.0

    def to_jsonl(self, include_wall_time: bool = False) -> str:
        """One line per step plus a summary line.

        Wall-clock times are left out by default so that logs from identical
        runs are byte-identical.
        """
        lines = []
        for s in self.steps:
            row = {"step": s.index, "action": s.action, "kind": s.kind, "skill": s.skill,
                   "outcome": s.outcome.status, "reason": s.outcome.reason, "detail": s.outcome.detail,
                   "sim_time": s.sim_time, "metrics": s.outcome.metrics}
            if include_wall_time:
                row["wall_time"] = s.wall_time
            lines.append(row)
        summary = {"summary": True, "status": self.status, "steps": len(self.steps), "sim_time": self.sim_time}
        if include_wall_time:
            summary["wall_time"] = self.wall_time
        lines.append(summary)
        return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in lines)


class _Replan(Exception):
    pass


def _failure(exc: Exception) -> Outcome:
    if isinstance(exc, HalError):
        return Outcome(FAILURE, exc.code, exc.message)
    if isinstance(exc, NoPath):
        return Outcome(FAILURE, "NoPath", f"{type(exc).__name__}: {exc}")
    return Outcome(FAILURE, type(exc).__name__, str(exc))


def _r(x: float) -> float:
    return float(round(x, 9))


class SkillRunner:
    """Holds the navigation map and runs skills one at a time through a handle."""

    def __init__(self, handle: RobotHandle, knowledge: WorldKnowledge, cfg: ExecConfig = ExecConfig()):
        self.handle = handle
        self.k = knowledge
        self.cfg = cfg
        x0, y0, x1, y1 = knowledge.bounds
        res = cfg.resolution
        w = int(math.ceil((x1 - x0) / res - 1e-9))
        h = int(math.ceil((y1 - y0) / res - 1e-9))
        self.grid = OccupancyGrid.empty(w, h, res, Pose2D(x0, y0), cfg.map_params)
        self.arm_names = tuple(n for n in knowledge.model.group("arm"))
        self.tip = tip_link(knowledge.model)

    # --- helpers ------------------------------------------------------------------
    def pose(self) -> Pose2D:
        return self.handle.sensor.odometry().pose

    def scan(self) -> None:
        self.grid = update_map(self.grid, self.handle.sensor.lidar(), self.pose())

    def _objects(self) -> dict:
        return {o.id: o for o in self.handle.sensor.objects()}

    def _seeds(self) -> tuple[JointState, ...]:
        seeds = list(self.k.ik_seeds) or list(REFERENCE_IK_SEEDS)
        out = []
        for s in seeds:
            if all(n in s for n in self.arm_names):
                out.append(JointState(self.arm_names, tuple(float(s[n]) for n in self.arm_names)))
        return tuple(out)

    def _tool_world(self, base: Pose2D, arm: JointState, width: float) -> np.ndarray:
        q = dict(gripper_joint_positions(self.k.model, width))
        q.update(arm.as_dict())
        return base_transform(base) @ link_transforms(self.k.model, q)[self.tip]

    def _move_arm(self, goal: Union[JointState, Pose3D], obstacles, ignore=(), attached=(), padding=None,
                  seeds=()) -> JointTrajectory:
        start = self.handle.arm.get_joint_state()
        width = self.handle.gripper.width()
        params = self.cfg.rrt if padding is None else replace(self.cfg.rrt, padding=padding)
        req = MotionPlanRequest(self.k.model, self.pose(), JointState(start.names, start.positions), goal,
                                tuple(obstacles), frozenset(ignore), params,
                                gripper_joint_positions(self.k.model, width), tuple(attached),
                                ik_seeds=tuple(seeds) + self._seeds())
        traj = plan_arm(req)
        follow_trajectory(self.handle, traj, tick=self.cfg.track.tick, settle_time=self.cfg.settle_time,
                          settle_tol=self.cfg.settle_tol, diverge_tol=self.cfg.diverge_tol)
        return traj

    def _home(self) -> Optional[JointState]:
        if self.k.home is None:
            return JointState(self.arm_names, tuple(0.0 for _ in self.arm_names))
        return JointState(self.arm_names, tuple(float(self.k.home.get(n, 0.0)) for n in self.arm_names))

    # --- skills -------------------------------------------------------------------
    def navigate_to(self, goal: Union[str, Pose2D]) -> Outcome:
        if isinstance(goal, str):
            goal = self.k.locations[goal].base
        cfg = self.cfg
        pose = self.pose()
        if pose.distance_to(goal) < cfg.track.goal_tol and abs(normalize_angle(goal.theta - pose.theta)) < cfg.heading_tol:
            return Outcome(SUCCESS, metrics={"path_length": 0.0, "replans": 0, "ticks": 0})
        self.scan()
        replans = 0
        ticks = 0
        path = None
        while True:
            pose = self.pose()
            inflated = inflate(self.grid, cfg.inflation_radius)
            blocked = self._plan_mask(inflated, pose)
            path = plan_global(inflated, pose, goal, blocked=blocked)
            path = smooth_path(inflated, path, blocked=blocked)
            poses = list(path.poses[1:]) or [path.poses[0]]
            poses[-1] = Pose2D(goal.x, goal.y, goal.theta)
            first = poses[0]
            if pose.distance_to(first) > cfg.track.goal_tol:
                bearing = math.atan2(first.y - pose.y, first.x - pose.x)
                if abs(normalize_angle(bearing - pose.theta)) > cfg.align_tol:
                    rotate_to(self.handle, bearing, tol=cfg.heading_tol, tick=cfg.track.tick)
            try:
                rep = track_path(self.handle, poses, cfg.track, guard=self._guard(poses))
                ticks += rep.ticks
                break
            except _Replan:
                replans += 1
                if replans > cfg.max_replans:
                    raise NoPath(f"gave up after {cfg.max_replans} replans")
        rotate_to(self.handle, goal.theta, tol=cfg.heading_tol, tick=cfg.track.tick)
        final = self.pose()
        return Outcome(SUCCESS, metrics={"path_length": _r(path.total_cost), "replans": replans, "ticks": ticks,
                                         "final_error": _r(final.distance_to(goal))})

    def _plan_mask(self, inflated: OccupancyGrid, pose: Pose2D) -> np.ndarray:
        """Inflated blocked mask; if the robot already sits in the inflation band,
        free the band within one inflation radius so it can plan its way out."""
        blocked = inflated.blocked(self.cfg.allow_unknown)
        r, c = self.grid.world_to_cell(pose.x, pose.y)
        if not self.grid.in_bounds(r, c) or not blocked[r, c]:
            return blocked
        raw = self.grid.blocked(self.cfg.allow_unknown)
        if raw[r, c]:
            return blocked
        rows, cols = np.indices(blocked.shape)
        res = self.grid.resolution
        near = np.hypot(rows - r, cols - c) * res <= self.cfg.inflation_radius
        out = blocked.copy()
        out[near] = raw[near]
        return out

    def _guard(self, poses: Sequence[Pose2D]) -> Callable:
        cfg = self.cfg
        state = {"ticks": 0, "stalled": 0, "field": ClearanceField(self.grid, cfg.dwa.allow_unknown)}

        def guard(pose: Pose2D, cmd: Twist2D, target: Pose2D) -> Twist2D:
            state["ticks"] += 1
            if cfg.rescan_every and state["ticks"] % cfg.rescan_every == 0:
                self.grid = update_map(self.grid, self.handle.sensor.lidar(), pose)
                state["field"] = ClearanceField(self.grid, cfg.dwa.allow_unknown)
                blocked = inflate(self.grid, cfg.inflation_radius).occupied()
                for p in poses:
                    r, c = self.grid.world_to_cell(p.x, p.y)
                    if self.grid.in_bounds(r, c) and blocked[r, c]:
                        raise _Replan()
            field_ = state["field"]
            # pure pursuit re-aims every tick, so only imminent contact is checked
            for p in rollout(pose, cmd.v, cmd.w, cfg.guard_horizon, cfg.dwa.dt):
                if field_(p.x, p.y) < cfg.dwa.robot_radius:
                    local = plan_local(self.grid, pose, cmd, (target.x, target.y), cfg.dwa, field_)
                    # parked by the local planner: ask for a new global path instead
                    state["stalled"] = state["stalled"] + 1 if local.v == 0.0 and local.w == 0.0 else 0
                    if state["stalled"] >= cfg.stall_ticks:
                        raise _Replan()
                    return local
            state["stalled"] = 0
            return cmd

        return guard

    def pick_object(self, object_id: str) -> Outcome:
        objs = self._objects()
        if object_id not in objs:
            raise UnknownObject(object_id)
        obj = objs[object_id]
        grasp = propose_grasp(obj, gripper_max_width(self.k.model), self.cfg.standoff)
        if self.handle.gripper.width() + 1e-9 < grasp.required_width:
            self.handle.gripper.open()
        obstacles = list(objs.values())
        self._move_arm(grasp.pre_grasp, obstacles)
        pre = self.handle.arm.get_joint_state()
        self._move_arm(grasp.grasp, obstacles, padding=0.0, seeds=(pre,))
        res = self.handle.gripper.close()
        if res.get("attached") != object_id:
            return Outcome(FAILURE, "GraspFailed", f"gripper closed without holding {object_id!r}")
        held = self._attached(object_id)
        self._move_arm(JointState(pre.names, pre.positions), obstacles, ignore={object_id}, attached=[held],
                       padding=0.0)
        self._move_arm(self._home(), obstacles, ignore={object_id}, attached=[held])
        return Outcome(SUCCESS, metrics={"required_width": _r(grasp.required_width),
                                         "held_width": _r(self.handle.gripper.width())})

    def _attached(self, object_id: str) -> AttachedBody:
        obj = self._objects()[object_id]
        tool = self._tool_world(self.pose(), self.handle.arm.get_joint_state(), self.handle.gripper.width())
        rel = invert(Pose3D.from_matrix(tool)) @ obj.pose
        return AttachedBody(obj, self.tip, rel)

    def place_object(self, object_id: str, location: str) -> Outcome:
        loc = self.k.locations[location]
        if loc.place is None:
            raise MobmanError(f"location {location!r} has no place point")
        held_id = self.handle.sensor.status().get("attached")
        if held_id != object_id:
            return Outcome(FAILURE, "NothingAttached", f"not holding {object_id!r}")
        held = self._attached(object_id)
        objs = self._objects()
        obstacles = list(objs.values())
        target = place_pose(loc.place, held.object, held.relative, self.cfg.place_clearance)
        pre = Pose3D((target.translation[0], target.translation[1], target.translation[2] + self.cfg.standoff),
                     target.rotation)
        self._move_arm(pre, obstacles, ignore={object_id}, attached=[held])
        above = self.handle.arm.get_joint_state()
        self._move_arm(target, obstacles, ignore={object_id}, attached=[held], padding=0.0, seeds=(above,))
        self.handle.gripper.open()
        objs = self._objects()
        obstacles = list(objs.values())
        self._move_arm(JointState(above.names, above.positions), obstacles, padding=0.0)
        self._move_arm(self._home(), obstacles)
        final = objs[object_id].pose.translation
        err = math.dist(final[:2], loc.place[:2])
        return Outcome(SUCCESS, metrics={"placement_error": _r(err),
                                         "object_pose": [_r(v) for v in final]})

    def open_gripper(self) -> Outcome:
        res = self.handle.gripper.open()
        return Outcome(SUCCESS, metrics={"width": _r(res["width"])})

    def close_gripper(self) -> Outcome:
        res = self.handle.gripper.close()
        return Outcome(SUCCESS, metrics={"width": _r(res["width"]), "attached": res.get("attached")})

    def run(self, skill: str, args: Sequence) -> Outcome:
        if skill not in SKILLS:
            raise UnknownSkill(f"unknown skill {skill!r}")
        try:
            return getattr(self, skill)(*args)
        except (MobmanError, KeyError) as exc:
            self._stop()
            if isinstance(exc, KeyError):
                return Outcome(FAILURE, "UnknownEntity", f"no such location or object: {exc}")
            return _failure(exc)

    def _stop(self) -> None:
        try:
            self.handle.base.set_velocity(Twist2D())
        except MobmanError:
            pass


def execute_skill(handle: RobotHandle, skill: str, args: Sequence, knowledge: WorldKnowledge,
                  cfg: ExecConfig = ExecConfig(), runner: Optional[SkillRunner] = None) -> Outcome:
    """Run one skill with the same semantics as inside :func:`execute_plan`."""
    if skill not in SKILLS:
        raise UnknownSkill(f"unknown skill {skill!r}")
    runner = runner or SkillRunner(handle, knowledge, cfg)
    return runner.run(skill, args)


def execute_plan(handle: RobotHandle, plan: Sequence, bindings: SkillBinding, knowledge: WorldKnowledge,
                 cfg: ExecConfig = ExecConfig(), on_step: Optional[Callable[[StepReport], None]] = None
                 ) -> ExecutionReport:
    """Run ``plan`` step by step; stop at the first failing step."""
    bindings.check(sorted({a.name for a in plan}))
    report = ExecutionReport()
    if not plan:
        return report
    runner = SkillRunner(handle, knowledge, cfg)
    t_wall0 = time.perf_counter()
    t_sim0 = handle.time()
    for i, act in enumerate(plan):
        skill, idx = bindings.schemas[act.name]
        args = [bindings.entities.get(act.args[j], act.args[j]) for j in idx]
        w0, s0 = time.perf_counter(), handle.time()
        outcome = runner.run(skill, args)
        step = StepReport(i, act.label, act.kind, skill, outcome, _r(handle.time() - s0), time.perf_counter() - w0)
        report.steps.append(step)
        if on_step is not None:
            on_step(step)
        if not outcome.ok:
            report.status = FAILURE
            break
    report.sim_time = _r(handle.time() - t_sim0)
    report.wall_time = time.perf_counter() - t_wall0
    return report
