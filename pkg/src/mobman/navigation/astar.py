"""A* global planning on 8-connected grids plus line-of-sight smoothing."""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from mobman.errors import GoalOccupied, NoPath, StartOccupied
from mobman.geometry import Pose2D
from mobman.navigation.grid import OccupancyGrid, traverse

SQRT2 = math.sqrt(2.0)
_MOVES = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


@dataclass(frozen=True)
class Path2D:
    poses: tuple[Pose2D, ...]
    total_cost: float

    def __len__(self):
        return len(self.poses)

    @classmethod
    def through(cls, poses: Sequence[Pose2D]) -> "Path2D":
        poses = tuple(poses)
        return cls(poses, path_length(poses))

    def to_jsonl(self) -> str:
        return "".join(json.dumps(p.to_dict(), separators=(",", ":")) + "\n" for p in self.poses)

    @classmethod
    def from_jsonl(cls, text: str) -> "Path2D":
        return cls.through(Pose2D.from_dict(json.loads(line)) for line in text.splitlines() if line.strip())


def path_length(poses: Sequence[Pose2D]) -> float:
    return float(sum(math.hypot(b.x - a.x, b.y - a.y) for a, b in zip(poses, poses[1:])))


def octile(a: tuple[int, int], b: tuple[int, int]) -> float:
    dr, dc = abs(a[0] - b[0]), abs(a[1] - b[1])
    return max(dr, dc) + (SQRT2 - 1.0) * min(dr, dc)


@dataclass(frozen=True)
class CellPath:
    cells: tuple[tuple[int, int], ...]
    straight: int
    diagonal: int
    expanded: int

    @property
    def cost(self) -> float:
        """Cost in cell units."""
        return self.straight + self.diagonal * SQRT2


def astar_cells(blocked: np.ndarray, start: tuple[int, int], goal: tuple[int, int]) -> Optional[CellPath]:
    """A* over free cells; None when the goal is unreachable.

    The heap is keyed (f, h, row, col) so ties go to the lower heuristic and
    then row-major order. Diagonal moves need both adjacent cardinal cells
    free. Costs are carried as (straight, diagonal) step counts so the
    returned cost is exact in those terms.
    """
    h_max, w_max = blocked.shape
    free = ~blocked
    g_val = {start: 0.0}
    counts = {start: (0, 0)}
    parent = {start: None}
    closed = set()
    h0 = octile(start, goal)
    heap = [(h0, h0, start[0], start[1])]
    expanded = 0
    while heap:
        f, h, r, c = heapq.heappop(heap)
        cur = (r, c)
        if cur in closed:
            continue
        closed.add(cur)
        expanded += 1
        if cur == goal:
            cells = []
            node = cur
            while node is not None:
                cells.append(node)
                node = parent[node]
            s, d = counts[cur]
            return CellPath(tuple(reversed(cells)), s, d, expanded)
        s0, d0 = counts[cur]
        for dr, dc in _MOVES:
            nr, nc = r + dr, c + dc
            if not (0 <= nr < h_max and 0 <= nc < w_max) or not free[nr, nc]:
                continue
            diag = dr != 0 and dc != 0
            if diag and not (free[r, nc] and free[nr, c]):
                continue
            nxt = (nr, nc)
            if nxt in closed:
                continue
            cnt = (s0, d0 + 1) if diag else (s0 + 1, d0)
            g = cnt[0] + cnt[1] * SQRT2
            if g < g_val.get(nxt, math.inf) - 1e-12:
                g_val[nxt] = g
                counts[nxt] = cnt
                parent[nxt] = cur
                hn = octile(nxt, goal)
                heapq.heappush(heap, (g + hn, hn, nr, nc))
    return None


def _with_headings(points: Sequence[tuple[float, float]], start_theta: float, goal_theta: float) -> tuple[Pose2D, ...]:
    out = []
    for i, (x, y) in enumerate(points):
        if i + 1 < len(points):
            nx, ny = points[i + 1]
            th = math.atan2(ny - y, nx - x) if (nx, ny) != (x, y) else start_theta
        else:
            th = goal_theta
        out.append(Pose2D(x, y, th))
    return tuple(out)


def plan_global(grid: OccupancyGrid, start: Pose2D, goal: Pose2D, allow_unknown: bool = False,
                blocked: Optional[np.ndarray] = None) -> Path2D:
    """Optimal 8-connected path between the cells containing ``start`` and ``goal``.

    Poses are cell centres; each heading points at the next pose and the last
    one takes ``goal.theta``. ``allow_unknown`` lets the search enter cells
    the map has not classified as free.
    """
    blocked = grid.blocked(allow_unknown) if blocked is None else blocked
    s = grid.world_to_cell(start.x, start.y)
    g = grid.world_to_cell(goal.x, goal.y)
    if not grid.in_bounds(*s):
        raise StartOccupied(f"start {start} is outside the map")
    if not grid.in_bounds(*g):
        raise GoalOccupied(f"goal {goal} is outside the map")
    if blocked[s]:
        raise StartOccupied(f"start cell {s} is not free")
    if blocked[g]:
        raise GoalOccupied(f"goal cell {g} is not free")
    found = astar_cells(blocked, s, g)
    if found is None:
        raise NoPath(f"no path from cell {s} to cell {g}")
    pts = [grid.cell_center(r, c) for r, c in found.cells]
    return Path2D.through(_with_headings(pts, start.theta, goal.theta))


def line_of_sight(grid: OccupancyGrid, blocked: np.ndarray, a: Pose2D, b: Pose2D) -> bool:
    for r, c in traverse(grid, a.x, a.y, b.x, b.y, supercover=True):
        if not grid.in_bounds(r, c) or blocked[r, c]:
            return False
    return True


def smooth_path(grid: OccupancyGrid, path: Path2D, allow_unknown: bool = False,
                blocked: Optional[np.ndarray] = None) -> Path2D:
    """Greedy shortcutting: from each kept pose jump to the farthest visible one."""
    poses = path.poses
    if len(poses) <= 2:
        return path
    blocked = grid.blocked(allow_unknown) if blocked is None else blocked
    keep = [0]
    i = 0
    last = len(poses) - 1
    while i < last:
        j = last
        while j > i + 1 and not line_of_sight(grid, blocked, poses[i], poses[j]):
            j -= 1
        keep.append(j)
        i = j
    pts = [(poses[k].x, poses[k].y) for k in keep]
    out = _with_headings(pts, poses[0].theta, poses[-1].theta)
    smoothed = Path2D.through(out)
    # triangle inequality makes this hold; guard against float noise anyway
    return smoothed if smoothed.total_cost <= path.total_cost + 1e-12 else path
