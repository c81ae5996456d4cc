"""RRT-Connect arm planning in joint space, with random-pair shortcutting."""
from __future__ import annotations

import json
import math
from functools import lru_cache
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from mobman.assets.library import tip_link
from mobman.assets.model import RobotModel, SceneObject
from mobman.control.trajectory import JointTrajectory
from mobman.errors import (GoalInCollision, IkFailed, KinematicsError, PlanningTimeout, StartInCollision)
from mobman.geometry import JointState, Pose2D, Pose3D, invert
from mobman.kinematics import IkOptions, ik_solve, within_limits
from mobman.sim.collision import AttachedBody, base_transform, check_collision


@dataclass(frozen=True)
class RrtParams:
    step_size: float = 0.1
    goal_bias: float = 0.1
    max_iters: int = 5000
    shortcut_passes: int = 50
    rng_seed: int = 0
    # extra margin on every collision shape while planning
    padding: float = 0.01
    ik_attempts: int = 8

    def __post_init__(self):
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ValueError("goal_bias must be in [0, 1]")
        if not self.step_size > 0:
            raise ValueError("step_size must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class MotionPlanRequest:
    model: RobotModel
    base_pose: Pose2D
    start: JointState
    goal: Union[JointState, Pose3D]
    obstacles: tuple[SceneObject, ...] = ()
    ignore: frozenset = frozenset()
    params: RrtParams = RrtParams()
    # joints held still during planning (e.g. finger positions)
    fixed: Mapping[str, float] = field(default_factory=dict)
    attached: tuple[AttachedBody, ...] = ()
    # IK orientation mode when ``goal`` is a tip pose
    orientation: str = "axis"
    ik_seeds: tuple[JointState, ...] = ()


def edge_points(a: np.ndarray, b: np.ndarray, spacing: float) -> int:
    """Subdivisions for a segment so consecutive checks are <= ``spacing`` apart."""
    return max(1, int(math.ceil(float(np.linalg.norm(b - a)) / spacing - 1e-12)))


class ArmChecker:
    """Collision test for arm configurations with the base and other joints fixed."""

    def __init__(self, model: RobotModel, base: Pose2D, names: Sequence[str], fixed: Mapping[str, float] = (),
                 obstacles: Sequence[SceneObject] = (), ignore=(), attached: Sequence[AttachedBody] = (),
                 padding: float = 0.0, spacing: float = 0.05):
        self.model = model
        self.base = base
        self.names = tuple(names)
        self.fixed = dict(fixed)
        self.obstacles = tuple(obstacles)
        self.ignore = frozenset(ignore)
        self.attached = tuple(attached)
        self.padding = padding
        # checks twice as dense as the spacing the contract promises
        self.spacing = spacing
        self.levers = lever_arms(model, self.names, self.attached)
        self.calls = 0

    def qmap(self, q) -> dict[str, float]:
        m = dict(self.fixed)
        m.update(zip(self.names, (float(v) for v in q)))
        return m

    def free(self, q) -> bool:
        self.calls += 1
        return not check_collision(self.model, self.base, self.qmap(q), self.obstacles, self.ignore,
                                   self.attached, self.padding)

    def segment_free(self, a, b) -> bool:
        a, b = np.asarray(a, float), np.asarray(b, float)
        n = 2 * edge_points(a, b, self.spacing)
        if self.padding > 0:
            # no body point moves more than sweep / (2 n) away from its nearest sample, so the
            # padded checks cover the whole continuous motion
            sweep = float(np.abs(b - a) @ self.levers)
            n = max(n, int(math.ceil(sweep / (2.0 * self.padding))))
        if not self.free(b):
            return False
        for k in _coarse_to_fine(n):
            if not self.free(a + (b - a) * (k / n)):
                return False
        return True


def lever_arms(model: RobotModel, names: Sequence[str], attached: Sequence[AttachedBody] = ()) -> np.ndarray:
    """Per-joint bound on how far any collision point below the joint moves per unit of joint motion.

    Revolute joints use the largest distance from the joint origin to downstream geometry
    (configuration independent: chained offsets plus bounding radii). Prismatic joints give 1.
    """
    children: dict[str, list] = {}
    for j in model.joints:
        children.setdefault(j.parent, []).append(j)
    held: dict[str, list[float]] = {}
    for body in attached:
        held.setdefault(body.link, []).append(
            float(np.linalg.norm(body.relative.position)) + _radius(body.object.shape))

    def reach(link: str) -> float:
        # farthest collision point below ``link``, measured from its frame origin
        ln = model.link(link)
        best = _radius(ln.collision) if ln.collision is not None else 0.0
        best = max([best] + held.get(link, []))
        for j in children.get(link, []):
            slide = max(abs(v) for v in j.limits) if j.kind == "prismatic" and j.limits else 0.0
            best = max(best, float(np.linalg.norm(j.origin.position)) + slide + reach(j.child))
        return best

    out = []
    for n in names:
        j = model.joint(n)
        out.append(1.0 if j.kind == "prismatic" else reach(j.child))
    return np.array(out, dtype=float)


def _radius(shape) -> float:
    return float(np.linalg.norm(shape.offset.position) + np.linalg.norm(shape.half_extents()))


@lru_cache(maxsize=256)
def _coarse_to_fine(n: int) -> tuple[int, ...]:
    """Interior indices 1..n-1 ordered midpoint-first so collisions show up early."""
    order, seen = [], set()
    spans = [(0, n)]
    while spans:
        nxt = []
        for lo, hi in spans:
            if hi - lo < 2:
                continue
            mid = (lo + hi) // 2
            if mid not in seen:
                seen.add(mid)
                order.append(mid)
            nxt += [(lo, mid), (mid, hi)]
        spans = nxt
    return tuple(order)


class _Tree:
    def __init__(self, root: np.ndarray):
        self.nodes = [root]
        self.parent = [-1]
        self._arr = root[None, :].copy()

    def nearest(self, q: np.ndarray) -> int:
        d = np.sum((self._arr - q) ** 2, axis=1)
        return int(np.argmin(d))

    def add(self, q: np.ndarray, parent: int) -> int:
        self.nodes.append(q)
        self.parent.append(parent)
        self._arr = np.vstack([self._arr, q])
        return len(self.nodes) - 1

    def path_to_root(self, i: int) -> list[np.ndarray]:
        out = []
        while i >= 0:
            out.append(self.nodes[i])
            i = self.parent[i]
        return out


_REACHED, _ADVANCED, _TRAPPED = 0, 1, 2


def _extend(tree: _Tree, q: np.ndarray, step: float, checker: ArmChecker) -> tuple[int, int]:
    i = tree.nearest(q)
    near = tree.nodes[i]
    d = float(np.linalg.norm(q - near))
    if d <= step:
        new, status = q, _REACHED
    else:
        new, status = near + (q - near) * (step / d), _ADVANCED
    if not checker.segment_free(near, new):
        return _TRAPPED, -1
    return status, tree.add(new, i)


def _connect(tree: _Tree, q: np.ndarray, step: float, checker: ArmChecker) -> tuple[int, int]:
    while True:
        status, idx = _extend(tree, q, step, checker)
        if status != _ADVANCED:
            return status, idx


def rrt_connect(start: np.ndarray, goal: np.ndarray, lo: np.ndarray, hi: np.ndarray, checker: ArmChecker,
                params: RrtParams, rng: np.random.Generator) -> list[np.ndarray]:
    """Joint-space path from ``start`` to ``goal`` (both assumed collision-free)."""
    if checker.segment_free(start, goal):
        return [start, goal]
    ta, tb = _Tree(start), _Tree(goal)
    a_is_start = True
    for _ in range(params.max_iters):
        if rng.random() < params.goal_bias:
            q_rand = tb.nodes[0]
        else:
            q_rand = rng.uniform(lo, hi)
        status, idx = _extend(ta, q_rand, params.step_size, checker)
        if status != _TRAPPED:
            status_b, idx_b = _connect(tb, ta.nodes[idx], params.step_size, checker)
            if status_b == _REACHED:
                pa = ta.path_to_root(idx)[::-1]
                pb = tb.path_to_root(idx_b)
                path = pa + pb[1:]
                return path if a_is_start else path[::-1]
        ta, tb = tb, ta
        a_is_start = not a_is_start
    raise PlanningTimeout(params.max_iters)


def joint_path_length(points: Sequence[Sequence[float]]) -> float:
    return float(sum(np.linalg.norm(np.subtract(b, a)) for a, b in zip(points, points[1:])))


def shortcut_points(points: list, checker: ArmChecker, passes: int, rng: np.random.Generator) -> list:
    pts = [np.asarray(p, float) for p in points]
    for _ in range(passes):
        if len(pts) <= 2:
            break
        i, j = sorted(rng.choice(len(pts), size=2, replace=False))
        if j - i < 2:
            continue
        if checker.segment_free(pts[i], pts[j]):
            pts = pts[:i + 1] + pts[j:]
    return pts


def _velocities(model: RobotModel, names) -> list[float]:
    return [model.joint(n).max_velocity for n in names]


def shortcut(traj: JointTrajectory, checker: ArmChecker, passes: int, rng_seed: int = 0,
             rng: Optional[np.random.Generator] = None) -> JointTrajectory:
    """Random-pair shortcutting; re-times the result with per-joint max velocities."""
    if len(traj.points) <= 2:
        return traj
    rng = rng if rng is not None else np.random.default_rng(rng_seed)
    pts = shortcut_points(list(traj.points), checker, passes, rng)
    if len(pts) == len(traj.points):
        return traj
    return JointTrajectory.timed(traj.names, [tuple(float(v) for v in p) for p in pts],
                                 _velocities(checker.model, traj.names))


def _sampling_bounds(model: RobotModel, names) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = zip(*(model.joint(n).sampling_limits() for n in names))
    return np.array(lo), np.array(hi)


def resolve_goal(req: MotionPlanRequest, checker: ArmChecker) -> JointState:
    """Solve IK for a tip-pose goal, trying the start and any extra seeds."""
    names = req.start.names
    base = Pose3D.from_matrix(base_transform(req.base_pose))
    local = invert(base) @ req.goal
    tip = tip_link(req.model)
    rng = np.random.default_rng(req.params.rng_seed ^ 0x5EED)
    lo, hi = _sampling_bounds(req.model, names)
    seeds = [req.start, *req.ik_seeds]
    while len(seeds) < req.params.ik_attempts:
        seeds.append(JointState(names, tuple(rng.uniform(lo, hi))))
    opts = IkOptions(orientation=req.orientation, joints=names)
    last = None
    fail = None
    for seed in seeds:
        full = dict(req.fixed)
        full.update(seed.as_dict())
        try:
            sol = ik_solve(req.model, tip, local, JointState.from_mapping(full), opts)
        except KeyError as exc:
            raise IkFailed(f"IK seed missing joint {exc}") from exc
        except KinematicsError as exc:
            last = exc
            continue
        q = JointState(names, tuple(sol.as_dict()[n] for n in names))
        if not within_limits(req.model, q.as_dict()):
            continue
        if checker.free(q.positions):
            return q
        fail = q
    if fail is not None:
        raise GoalInCollision(f"every IK solution for {req.goal.translation} collides")
    raise IkFailed(f"IK failed for tip target {req.goal.translation}: {last}")


def make_checker(req: MotionPlanRequest) -> ArmChecker:
    return ArmChecker(req.model, req.base_pose, req.start.names, req.fixed, req.obstacles, req.ignore,
                      req.attached, req.params.padding, req.params.step_size / 2.0)


def plan_arm(req: MotionPlanRequest) -> JointTrajectory:
    """Collision-free joint trajectory from ``req.start`` to ``req.goal``.

    Every waypoint and every interpolated configuration at ``step_size / 2``
    spacing along each segment is collision-free under the same checker the
    simulator uses.
    """
    names = req.start.names
    checker = make_checker(req)
    if not within_limits(req.model, req.start.as_dict()):
        raise StartInCollision("start configuration violates joint limits")
    if not checker.free(req.start.positions):
        raise StartInCollision("start configuration is in collision")
    if isinstance(req.goal, Pose3D):
        goal = resolve_goal(req, checker)
    else:
        missing = set(names) - set(req.goal.names)
        if missing:
            raise ValueError(f"goal omits joints {sorted(missing)}")
        gm = req.goal.as_dict()
        goal = JointState(names, tuple(gm[n] for n in names))
        if not within_limits(req.model, goal.as_dict()):
            raise GoalInCollision("goal configuration violates joint limits")
        if not checker.free(goal.positions):
            raise GoalInCollision("goal configuration is in collision")
    start = np.array(req.start.positions, float)
    target = np.array(goal.positions, float)
    if np.array_equal(start, target):
        return JointTrajectory(names, (tuple(start),), (0.0,))
    lo, hi = _sampling_bounds(req.model, names)
    rng = np.random.default_rng(req.params.rng_seed)
    pts = rrt_connect(start, target, lo, hi, checker, req.params, rng)
    pts = shortcut_points(pts, checker, req.params.shortcut_passes, rng)
    pts = [tuple(float(v) for v in p) for p in pts]
    # endpoints exactly as requested
    pts[0], pts[-1] = tuple(req.start.positions), tuple(goal.positions)
    return JointTrajectory.timed(names, pts, _velocities(req.model, names))


def dense_violations(traj: JointTrajectory, checker: ArmChecker, spacing: float) -> int:
    """Count colliding configurations on a ``spacing`` interpolation of ``traj``."""
    bad = 0
    pts = [np.asarray(p, float) for p in traj.points]
    if not checker.free(pts[0]):
        bad += 1
    for a, b in zip(pts, pts[1:]):
        n = edge_points(a, b, spacing)
        for k in range(1, n + 1):
            if not checker.free(a + (b - a) * (k / n)):
                bad += 1
    return bad


def trajectory_to_jsonl(traj: JointTrajectory) -> str:
    return "".join(json.dumps({"t": t, "positions": list(p)}, separators=(",", ":")) + "\n"
                   for t, p in zip(traj.times, traj.points))


def trajectory_from_jsonl(text: str, names: Sequence[str]) -> JointTrajectory:
    rows = [json.loads(line) for line in text.splitlines() if line.strip()]
    return JointTrajectory(tuple(names), tuple(tuple(r["positions"]) for r in rows), tuple(r["t"] for r in rows))
