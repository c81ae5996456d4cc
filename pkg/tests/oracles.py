"""Independent reference implementations used as test oracles.

None of these import the code under test beyond plain data types, so a bug
in a planner or a kinematics routine cannot hide behind the same bug here.
"""
from __future__ import annotations

import heapq
import math
from collections import deque

import numpy as np

from mobman.assets.model import JointSpec, LinkSpec, RobotModel
from mobman.geometry import Pose3D

SQRT2 = math.sqrt(2.0)


# --- kinematics -------------------------------------------------------------------

def planar_arm(l1: float = 1.0, l2: float = 1.0, lim: float = math.pi) -> RobotModel:
    """Two revolute z joints in a plane; the tip sits ``l2`` beyond the elbow."""
    links = [LinkSpec("base"), LinkSpec("upper"), LinkSpec("fore"), LinkSpec("tip")]
    joints = [
        JointSpec("j1", "revolute", "base", "upper", Pose3D(), (0.0, 0.0, 1.0), (-lim, lim)),
        JointSpec("j2", "revolute", "upper", "fore", Pose3D((l1, 0.0, 0.0)), (0.0, 0.0, 1.0), (-lim, lim)),
        JointSpec("tip_fixed", "fixed", "fore", "tip", Pose3D((l2, 0.0, 0.0))),
    ]
    return RobotModel("planar", links, joints, "base", "arm")


def planar_tip_by_hand(q1: float, q2: float, l1: float = 1.0, l2: float = 1.0) -> np.ndarray:
    """Chain of 3x3 homogeneous planar transforms, written out longhand."""
    def rot(a):
        return np.array([[math.cos(a), -math.sin(a), 0.0], [math.sin(a), math.cos(a), 0.0], [0.0, 0.0, 1.0]])

    def trans(x):
        return np.array([[1.0, 0.0, x], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])

    m = rot(q1) @ trans(l1) @ rot(q2) @ trans(l2)
    return np.array([m[0, 2], m[1, 2], 0.0])


def central_difference_jacobian(fk_position, q: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Position Jacobian by central differences of an arbitrary FK callable."""
    cols = []
    for i in range(len(q)):
        e = np.zeros_like(q)
        e[i] = h
        cols.append((np.asarray(fk_position(q + e)) - np.asarray(fk_position(q - e))) / (2 * h))
    return np.stack(cols, axis=1)


def unicycle_closed_form(x, y, th, v, w, t):
    if abs(w) < 1e-12:
        return x + v * t * math.cos(th), y + v * t * math.sin(th), th
    return (x + v / w * (math.sin(th + w * t) - math.sin(th)),
            y - v / w * (math.cos(th + w * t) - math.cos(th)),
            th + w * t)


# --- grids --------------------------------------------------------------------------

def dijkstra_cost(blocked: np.ndarray, start, goal):
    """8-connected shortest path without corner cutting; None if unreachable.

    Returns the optimal (straight, diagonal) step counts. Queue order uses
    the float length, but labels are the exact integer pairs, so two
    equal-cost paths always produce the same answer.
    """
    h, w = blocked.shape
    if blocked[start] or blocked[goal]:
        return None
    best = {start: (0, 0)}
    pq = [(0.0, (0, 0), start)]
    done = set()
    while pq:
        _, pair, cell = heapq.heappop(pq)
        if cell in done:
            continue
        done.add(cell)
        if cell == goal:
            return pair
        r, c = cell
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == dc == 0:
                    continue
                nr, nc = r + dr, c + dc
                if not (0 <= nr < h and 0 <= nc < w) or blocked[nr, nc] or (nr, nc) in done:
                    continue
                if dr and dc and (blocked[r + dr, c] or blocked[r, c + dc]):
                    continue
                npair = (pair[0], pair[1] + 1) if dr and dc else (pair[0] + 1, pair[1])
                nd = npair[0] + SQRT2 * npair[1]
                old = best.get((nr, nc))
                if old is None or nd < old[0] + SQRT2 * old[1] - 1e-9:
                    best[(nr, nc)] = npair
                    heapq.heappush(pq, (nd, npair, (nr, nc)))
    return None


def brute_inflate(occ: np.ndarray, radius_cells: float) -> np.ndarray:
    out = occ.copy()
    rows, cols = np.nonzero(occ)
    h, w = occ.shape
    for r in range(h):
        for c in range(w):
            if any((r - a) ** 2 + (c - b) ** 2 <= radius_cells ** 2 + 1e-9 for a, b in zip(rows, cols)):
                out[r, c] = True
    return out


# --- collision ----------------------------------------------------------------------

def _inside_local(kind, dims, p):
    """Vectorised containment for points ``p`` (n, 3) in a primitive's local frame."""
    p = np.atleast_2d(p)
    eps = 1e-12
    if kind == "box":
        return np.all(np.abs(p) <= np.asarray(dims) / 2.0 + eps, axis=1)
    if kind == "sphere":
        return np.linalg.norm(p, axis=1) <= dims[0] + eps
    r, length = dims
    if kind == "cylinder":
        return (np.hypot(p[:, 0], p[:, 1]) <= r + eps) & (np.abs(p[:, 2]) <= length / 2.0 + eps)
    z = np.clip(p[:, 2], -length / 2.0, length / 2.0)
    return np.sqrt(p[:, 0] ** 2 + p[:, 1] ** 2 + (p[:, 2] - z) ** 2) <= r + eps


def sample_surface(kind, dims, rng, n):
    """Points on (or just inside) a primitive, in its local frame."""
    if kind == "box":
        pts = rng.uniform(-0.5, 0.5, (n, 3)) * np.asarray(dims)
        axis = rng.integers(0, 3, n)
        sign = rng.choice([-1.0, 1.0], n)
        pts[np.arange(n), axis] = sign * np.asarray(dims)[axis] / 2.0
        return pts
    if kind == "sphere":
        v = rng.normal(size=(n, 3))
        return v / np.linalg.norm(v, axis=1, keepdims=True) * dims[0]
    r, length = dims
    ang = rng.uniform(0, 2 * math.pi, n)
    z = rng.uniform(-length / 2.0, length / 2.0, n)
    pts = np.stack([r * np.cos(ang), r * np.sin(ang), z], axis=1)
    if kind == "capsule":
        v = rng.normal(size=(n // 2, 3))
        v = v / np.linalg.norm(v, axis=1, keepdims=True) * r
        v[:, 2] += np.where(v[:, 2] >= 0, length / 2.0, -length / 2.0)
        pts[: n // 2] = v
    return pts


def contains(kind, dims, rot, center, p) -> bool:
    return bool(_inside_local(kind, dims, rot.T @ (np.asarray(p) - center))[0])


def overlap_by_sampling(a, b, rng, n=4000) -> bool:
    """Monte-Carlo containment test: some surface point of one primitive lies in the other.

    Two convex bodies intersect iff the surface of one meets the other, or
    one contains the other entirely (caught by testing the centres).
    """
    if contains(b[0], b[1], b[2], b[3], a[3]) or contains(a[0], a[1], a[2], a[3], b[3]):
        return True
    for s, o in ((a, b), (b, a)):
        pts = sample_surface(s[0], s[1], rng, n) @ s[2].T + s[3]
        local = (pts - o[3]) @ o[2]
        if _inside_local(o[0], o[1], local).any():
            return True
    return False


def shape_tuple(kind, dims, rot, center):
    return kind, tuple(dims), np.asarray(rot, dtype=float), np.asarray(center, dtype=float)


# --- STRIPS ---------------------------------------------------------------------------

def bfs_plan_length(initial: frozenset, goal: frozenset, actions, limit: int = 10 ** 5):
    """Breadth-first search over ground (pre, add, delete) triples."""
    if goal <= initial:
        return 0
    seen = {initial}
    frontier = deque([(initial, 0)])
    while frontier:
        s, d = frontier.popleft()
        for pre, add, dele in actions:
            if pre <= s:
                n = (s - dele) | add
                if n in seen:
                    continue
                if goal <= n:
                    return d + 1
                seen.add(n)
                if len(seen) > limit:
                    raise RuntimeError("state space too large for the oracle")
                frontier.append((n, d + 1))
    return None


# --- dependency graph ------------------------------------------------------------------

def import_closure(root_modules, package_dir, package="mobman") -> set:
    """Transitive in-package imports of ``root_modules``, from source text only."""
    import ast
    from pathlib import Path

    base = Path(package_dir)

    def source(mod):
        parts = mod.split(".")[1:]
        if not parts:
            return base / "__init__.py"
        rel = Path(*parts)
        for p in (base / rel.with_suffix(".py"), base / rel / "__init__.py"):
            if p.exists():
                return p
        return None

    seen, todo = set(), list(root_modules)
    while todo:
        mod = todo.pop()
        if mod in seen:
            continue
        path = source(mod)
        if path is None:
            continue
        seen.add(mod)
        for node in ast.walk(ast.parse(path.read_text())):
            names = []
            if isinstance(node, ast.Import):
                names = [a.name for a in node.names]
            elif isinstance(node, ast.ImportFrom) and node.module:
                names = [node.module] + [f"{node.module}.{a.name}" for a in node.names]
            todo.extend(n for n in names if n == package or n.startswith(package + "."))
    return seen


def dijkstra_all(blocked: np.ndarray, start) -> dict:
    """Shortest 8-connected float distance from ``start`` to every reachable cell."""
    h, w = blocked.shape
    dist = {start: 0.0}
    pq = [(0.0, start)]
    done = set()
    while pq:
        d, (r, c) = heapq.heappop(pq)
        if (r, c) in done:
            continue
        done.add((r, c))
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                nr, nc = r + dr, c + dc
                if (dr, dc) == (0, 0) or not (0 <= nr < h and 0 <= nc < w) or blocked[nr, nc]:
                    continue
                if dr and dc and (blocked[r + dr, c] or blocked[r, c + dc]):
                    continue
                nd = d + (SQRT2 if dr and dc else 1.0)
                if nd < dist.get((nr, nc), math.inf):
                    dist[(nr, nc)] = nd
                    heapq.heappush(pq, (nd, (nr, nc)))
    return {k: dist[k] for k in done}


def segment_touches_square(p0, p1, lo, hi, eps=1e-9) -> bool:
    """Slab test: does the segment p0-p1 meet the closed square [lo, hi]^2 (grown by eps)?"""
    t0, t1 = 0.0, 1.0
    for k in range(2):
        d = p1[k] - p0[k]
        a, b = lo[k] - eps, hi[k] + eps
        if abs(d) < 1e-15:
            if not a <= p0[k] <= b:
                return False
            continue
        ta, tb = (a - p0[k]) / d, (b - p0[k]) / d
        if ta > tb:
            ta, tb = tb, ta
        t0, t1 = max(t0, ta), min(t1, tb)
        if t0 > t1:
            return False
    return True


def point_square_distance(p, lo, hi) -> float:
    dx = max(lo[0] - p[0], 0.0, p[0] - hi[0])
    dy = max(lo[1] - p[1], 0.0, p[1] - hi[1])
    return math.hypot(dx, dy)


def dwa_free_space_choice(pose, goal, lattice, horizon, dt, w_progress, w_heading, v_max):
    """Best lattice sample in obstacle-free space, with closed-form arcs.

    Clearance is capped and therefore identical for every sample, so only
    goal progress and final heading error decide. Ties: smallest |w|, then v.
    """
    n = max(1, int(math.ceil(horizon / dt - 1e-9)))
    T = n * dt
    gx, gy = goal
    d0 = math.hypot(gx - pose[0], gy - pose[1])
    best = None
    for v, w in lattice:
        x, y, th = unicycle_closed_form(pose[0], pose[1], pose[2], v, w, T)
        d1 = math.hypot(gx - x, gy - y)
        err = abs(math.remainder(math.atan2(gy - y, gx - x) - th, 2 * math.pi)) if d1 > 1e-9 else 0.0
        s = w_progress * (d0 - d1) / (v_max * horizon) + w_heading * (1.0 - err / math.pi)
        key = (-round(s, 9), abs(w), v, w)
        if best is None or key < best:
            best = key
    return best[2], best[3]


# --- motion planning --------------------------------------------------------------------

def dense_collisions(points, collides, spacing: float) -> int:
    """Colliding samples along a piecewise-linear joint path, no two samples more than ``spacing`` apart."""
    pts = [np.asarray(p, dtype=float) for p in points]
    samples = [pts[0]]
    for a, b in zip(pts, pts[1:]):
        n = max(1, math.ceil(np.abs(b - a).max() / spacing))  # max-norm step <= spacing bounds the 2-norm too
        n = max(n, math.ceil(np.linalg.norm(b - a) / spacing))
        samples.extend(a + (b - a) * k / n for k in range(1, n + 1))
    return sum(1 for q in samples if collides(q))
