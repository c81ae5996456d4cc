"""Arm trajectory following and base path tracking over a RobotHandle."""
from __future__ import annotations

import bisect
import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from mobman.errors import TrackingDiverged
from mobman.geometry import Pose2D, Twist2D, normalize_angle
from mobman.hal.api import HalError, RobotHandle


class ControllerKind(enum.Enum):
    WHEELED = "wheeled"
    ARM = "arm"
    LEGGED = "legged"


def make_controller(kind: ControllerKind):
    """Controller entry point per robot category."""
    if kind is ControllerKind.ARM:
        return follow_trajectory
    if kind is ControllerKind.WHEELED:
        return track_path
    raise HalError("Unsupported", f"no {kind.value} controller implemented")


@dataclass(frozen=True)
class JointTrajectory:
    names: tuple[str, ...]
    points: tuple[tuple[float, ...], ...]
    times: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "points", tuple(tuple(float(v) for v in p) for p in self.points))
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        if not self.points or len(self.points) != len(self.times):
            raise ValueError("trajectory needs one time per waypoint and at least one waypoint")
        if any(len(p) != len(self.names) for p in self.points):
            raise ValueError("waypoint size does not match joint names")
        if self.times[0] != 0.0 or any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("times must start at 0 and strictly increase")

    @property
    def duration(self) -> float:
        return self.times[-1]

    def sample(self, t: float) -> tuple[float, ...]:
        """Linear interpolation in time, clamped to the ends."""
        if t <= 0.0:
            return self.points[0]
        if t >= self.times[-1]:
            return self.points[-1]
        i = bisect.bisect_right(self.times, t) - 1
        t0, t1 = self.times[i], self.times[i + 1]
        a = (t - t0) / (t1 - t0)
        p, q = self.points[i], self.points[i + 1]
        return tuple(x + (y - x) * a for x, y in zip(p, q))

    def path_length(self) -> float:
        return sum(math.dist(a, b) for a, b in zip(self.points, self.points[1:]))

    @classmethod
    def timed(cls, names, points, max_velocities: Sequence[float], min_segment: float = 1e-3) -> "JointTrajectory":
        """Assign times so no joint exceeds its max velocity on any segment."""
        times = [0.0]
        for a, b in zip(points, points[1:]):
            dur = max((abs(y - x) / v for x, y, v in zip(a, b, max_velocities)), default=0.0)
            times.append(times[-1] + max(dur, min_segment))
        return cls(tuple(names), tuple(points), tuple(times))


@dataclass
class TrackingReport:
    ticks: int = 0
    duration: float = 0.0
    max_error: float = 0.0
    final_error: float = 0.0
    extra: dict = field(default_factory=dict)


def follow_trajectory(handle: RobotHandle, traj: JointTrajectory, tick: float = 0.02, settle_time: float = 0.5,
                      settle_tol: float = 1e-3, diverge_tol: float = 0.5) -> TrackingReport:
    """Stream interpolated joint targets once per tick, then hold the last one."""
    state = handle.arm.get_joint_state()
    order = [traj.names.index(n) for n in state.names]
    report = TrackingReport()

    def reorder(p):
        return [p[i] for i in order]

    def err(target):
        cur = handle.arm.get_joint_state().positions
        return max((abs(a - b) for a, b in zip(cur, target)), default=0.0)

    e = max((abs(a - b) for a, b in zip(state.positions, reorder(traj.points[0]))), default=0.0)
    report.max_error = e
    if e > diverge_tol:
        raise TrackingDiverged(f"start state {e:.3f} rad away from trajectory start")
    if len(traj.points) == 1 and e <= settle_tol:
        report.final_error = e
        return report
    t = 0.0
    n_ticks = int(math.ceil(traj.duration / tick - 1e-9))
    for k in range(1, n_ticks + 1):
        t = min(k * tick, traj.duration)
        target = reorder(traj.sample(t))
        handle.arm.set_joint_targets(target)
        handle.tick(tick)
        report.ticks += 1
        e = err(target)
        report.max_error = max(report.max_error, e)
        if e > diverge_tol:
            handle.arm.set_joint_targets(handle.arm.get_joint_state().positions)
            raise TrackingDiverged(f"tracking error {e:.3f} rad at t={t:.2f} s")
    final = reorder(traj.points[-1])
    handle.arm.set_joint_targets(final)
    settle = 0.0
    e = err(final)
    while e > settle_tol and settle < settle_time:
        handle.tick(tick)
        report.ticks += 1
        settle += tick
        e = err(final)
    report.final_error = e
    report.duration = report.ticks * tick
    if e > settle_tol:
        raise TrackingDiverged(f"did not settle: final error {e:.4f} rad")
    return report


@dataclass(frozen=True)
class TrackParams:
    lookahead: float = 0.3
    v_max: float = 0.5
    v_min: float = 0.05
    k_v: float = 1.0
    w_max: float = 1.5
    goal_tol: float = 0.05
    timeout: float = 60.0
    tick: float = 0.02
    # turn in place when the lookahead point is further off-heading than this
    turn_in_place: float = math.pi / 4


def _project(path: Sequence[Pose2D], i: int, pose: Pose2D) -> tuple[int, float]:
    """Advance along segments from ``i``; return (segment index, fraction along it) of the closest point."""
    best = (math.inf, i, 0.0)
    for k in range(i, max(i + 1, len(path) - 1)):
        a = path[k]
        b = path[k + 1] if k + 1 < len(path) else a
        dx, dy = b.x - a.x, b.y - a.y
        L2 = dx * dx + dy * dy
        u = 0.0 if L2 == 0 else max(0.0, min(1.0, ((pose.x - a.x) * dx + (pose.y - a.y) * dy) / L2))
        d = math.hypot(a.x + u * dx - pose.x, a.y + u * dy - pose.y)
        if d < best[0] - 1e-12:
            best = (d, k, u)
        elif d > best[0] + 1.0:
            break  # far past the closest stretch
    return best[1], best[2]


def _point_on(path: Sequence[Pose2D], k: int, u: float) -> tuple[float, float]:
    a = path[k]
    b = path[k + 1] if k + 1 < len(path) else a
    return a.x + u * (b.x - a.x), a.y + u * (b.y - a.y)


def _remaining(path: Sequence[Pose2D], k: int, u: float) -> float:
    x, y = _point_on(path, k, u)
    rem = 0.0
    if k + 1 < len(path):
        rem = math.hypot(path[k + 1].x - x, path[k + 1].y - y)
    for a, b in zip(path[k + 1:], path[k + 2:]):
        rem += math.hypot(b.x - a.x, b.y - a.y)
    return rem


def _lookahead_point(path: Sequence[Pose2D], k: int, u: float, dist: float) -> Pose2D:
    """Point ``dist`` further along the path from the projection (k, u)."""
    x, y = _point_on(path, k, u)
    left = dist
    for j in range(k + 1, len(path)):
        seg = math.hypot(path[j].x - x, path[j].y - y)
        if seg >= left:
            a = left / seg
            return Pose2D(x + a * (path[j].x - x), y + a * (path[j].y - y))
        left -= seg
        x, y = path[j].x, path[j].y
    return path[-1]


def pure_pursuit(pose: Pose2D, target: Pose2D, remaining: float, p: TrackParams) -> Twist2D:
    dx, dy = target.x - pose.x, target.y - pose.y
    alpha = normalize_angle(math.atan2(dy, dx) - pose.theta)
    if abs(alpha) > p.turn_in_place:
        return Twist2D(0.0, math.copysign(p.w_max, alpha))
    ld = max(math.hypot(dx, dy), 1e-6)
    # slow down while the heading is still off so arcs stay close to the path
    v = max(p.v_min, min(p.v_max, p.k_v * remaining) * math.cos(alpha))
    w = 2.0 * math.sin(alpha) / ld * v
    return Twist2D(v, max(-p.w_max, min(p.w_max, w)))


def track_path(handle: RobotHandle, path: Sequence[Pose2D], params: TrackParams = TrackParams(),
               guard: Optional[Callable[[Pose2D, Twist2D, Pose2D], Twist2D]] = None) -> TrackingReport:
    """Drive the base along ``path`` until within ``goal_tol`` of its last point.

    ``guard`` may replace the pure-pursuit command (e.g. with a local planner
    when the nominal command would collide); it gets (pose, command, target).
    """
    if not path:
        raise ValueError("empty path")
    report = TrackingReport()
    goal = path[-1]
    i, u = 0, 0.0
    t = 0.0
    remaining_log = []
    try:
        while True:
            pose = handle.sensor.odometry().pose
            # the closest segment only moves forward
            i, u = _project(path, i, pose)
            d_goal = pose.distance_to(goal)
            rem = _remaining(path, i, u)
            remaining_log.append(rem)
            report.final_error = d_goal
            if d_goal < params.goal_tol:
                break
            if t >= params.timeout:
                raise HalError("Timeout", f"path tracking stopped {d_goal:.3f} m from goal after {params.timeout} s")
            target = _lookahead_point(path, i, u, params.lookahead)
            cmd = pure_pursuit(pose, target, max(rem, d_goal), params)
            if guard is not None:
                cmd = guard(pose, cmd, target)
            handle.base.set_velocity(cmd)
            handle.tick(params.tick)
            t += params.tick
            report.ticks += 1
    finally:
        handle.base.set_velocity(Twist2D())
    report.duration = t
    report.extra["remaining"] = remaining_log
    return report


def rotate_to(handle: RobotHandle, heading: float, tol: float = 0.05, gain: float = 2.0, w_max: float = 1.0,
              tick: float = 0.02, timeout: float = 20.0) -> float:
    """Turn in place to a heading; returns the final heading error."""
    t = 0.0
    try:
        while True:
            pose = handle.sensor.odometry().pose
            e = normalize_angle(heading - pose.theta)
            if abs(e) < tol:
                return e
            if t >= timeout:
                raise HalError("Timeout", f"heading error {e:.3f} rad after {timeout} s")
            w = max(-w_max, min(w_max, gain * e))
            if abs(w) < 0.1:
                w = math.copysign(0.1, e)
            handle.base.set_velocity(Twist2D(0.0, w))
            handle.tick(tick)
            t += tick
    finally:
        handle.base.set_velocity(Twist2D())
