"""Dynamic-window local planner for a differential-drive base."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional


from mobman.errors import AllTrajectoriesCollide
from mobman.geometry import Pose2D, Twist2D, integrate_unicycle, normalize_angle
from mobman.navigation.grid import OccupancyGrid, clearance_map


@dataclass(frozen=True)
class DwaParams:
    v_min: float = 0.0
    v_max: float = 0.5
    w_min: float = -1.5
    w_max: float = 1.5
    n_v: int = 6
    n_w: int = 21
    horizon: float = 1.5
    dt: float = 0.1
    w_progress: float = 1.0
    w_clearance: float = 0.2
    w_heading: float = 0.5
    robot_radius: float = 0.25
    clearance_cap: float = 1.0
    # optional acceleration limits (m/s^2, rad/s^2); None = full lattice each call
    acc_v: Optional[float] = None
    acc_w: Optional[float] = None
    allow_unknown: bool = True

    def __post_init__(self):
        vals = [self.v_min, self.v_max, self.w_min, self.w_max, self.horizon, self.dt, self.w_progress,
                self.w_clearance, self.w_heading, self.robot_radius, self.clearance_cap]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("DWA parameters must be finite")
        if self.n_v < 1 or self.n_w < 1:
            raise ValueError("sample counts must be >= 1")
        if not (self.horizon > 0 and self.dt > 0):
            raise ValueError("horizon and dt must be > 0")
        if self.v_min > self.v_max or self.w_min > self.w_max:
            raise ValueError("empty velocity range")


def _lattice(lo: float, hi: float, n: int) -> list[float]:
    if n == 1:
        return [hi]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def velocity_samples(params: DwaParams, twist: Twist2D = Twist2D()) -> list[tuple[float, float]]:
    v_lo, v_hi, w_lo, w_hi = params.v_min, params.v_max, params.w_min, params.w_max
    if params.acc_v is not None:
        v_lo = max(v_lo, twist.v - params.acc_v * params.dt)
        v_hi = min(v_hi, twist.v + params.acc_v * params.dt)
    if params.acc_w is not None:
        w_lo = max(w_lo, twist.w - params.acc_w * params.dt)
        w_hi = min(w_hi, twist.w + params.acc_w * params.dt)
    if v_lo > v_hi or w_lo > w_hi:
        return []
    return [(v, w) for v in _lattice(v_lo, v_hi, params.n_v) for w in _lattice(w_lo, w_hi, params.n_w)]


def rollout(pose: Pose2D, v: float, w: float, horizon: float, dt: float) -> list[Pose2D]:
    n = max(1, int(math.ceil(horizon / dt - 1e-9)))
    out = [pose]
    for _ in range(n):
        out.append(integrate_unicycle(out[-1], Twist2D(v, w), dt))
    return out


class ClearanceField:
    """Conservative distance from a world point to the nearest blocked cell."""

    def __init__(self, grid: OccupancyGrid, allow_unknown: bool = True):
        self.grid = grid
        self.dist = clearance_map(grid.blocked(allow_unknown), grid.resolution)
        # farthest a point can be from its cell centre, plus the half-diagonal of the obstacle cell
        self.slack = math.sqrt(2.0) * grid.resolution

    def __call__(self, x: float, y: float) -> float:
        r, c = self.grid.world_to_cell(x, y)
        if not self.grid.in_bounds(r, c):
            return -math.inf
        return float(self.dist[r, c]) - self.slack


def score_rollout(poses: list[Pose2D], goal: tuple[float, float], clearance: ClearanceField,
                  params: DwaParams) -> Optional[float]:
    """Weighted score, or None when the rollout comes within robot_radius of an obstacle."""
    lowest = math.inf
    for p in poses:
        d = clearance(p.x, p.y)
        if d < params.robot_radius:
            return None
        lowest = min(lowest, d)
    gx, gy = goal
    start, end = poses[0], poses[-1]
    d0 = math.hypot(gx - start.x, gy - start.y)
    d1 = math.hypot(gx - end.x, gy - end.y)
    reach = max(params.v_max * params.horizon, 1e-9)
    progress = (d0 - d1) / reach
    if d1 > 1e-9:
        err = abs(normalize_angle(math.atan2(gy - end.y, gx - end.x) - end.theta))
    else:
        err = 0.0
    heading = 1.0 - err / math.pi
    clear = min(lowest - params.robot_radius, params.clearance_cap) / params.clearance_cap
    return params.w_progress * progress + params.w_clearance * clear + params.w_heading * heading


def plan_local(grid: OccupancyGrid, pose: Pose2D, twist: Twist2D, goal_point, params: DwaParams = DwaParams(),
               clearance: Optional[ClearanceField] = None) -> Twist2D:
    """Best collision-free (v, w) on the sample lattice.

    Ties (scores equal to 1e-12) go to the smallest |w|, then the smallest v.
    """
    field = clearance or ClearanceField(grid, params.allow_unknown)
    gx, gy = (goal_point.x, goal_point.y) if hasattr(goal_point, "x") else goal_point
    best = None
    for v, w in velocity_samples(params, twist):
        s = score_rollout(rollout(pose, v, w, params.horizon, params.dt), (gx, gy), field, params)
        if s is None:
            continue
        key = (-round(s, 12), abs(w), v, w)
        if best is None or key < best:
            best = key
    if best is None:
        raise AllTrajectoriesCollide(f"every sampled rollout from {pose} collides")
    return Twist2D(best[2], best[3])


def rollout_collides(grid_field: ClearanceField, pose: Pose2D, twist: Twist2D, params: DwaParams) -> bool:
    for p in rollout(pose, twist.v, twist.w, params.horizon, params.dt):
        if grid_field(p.x, p.y) < params.robot_radius:
            return True
    return False
