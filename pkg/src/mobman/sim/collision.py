"""Primitive collision geometry: intersection, point containment, ray casts.

Every shape is placed by a 4x4 world transform; cylinders and capsules run
along the local z axis. Pairs without a closed form go through GJK on
support mappings, which is exact for convex primitives up to the distance
tolerance ``TOL``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from mobman.assets.model import CollisionShape, RobotModel, SceneObject
from mobman.geometry import JointState, Pose2D, Pose3D

TOL = 1e-9


@dataclass(frozen=True)
class Placed:
    """A collision shape at a world transform."""

    kind: str
    dims: tuple
    rot: np.ndarray
    center: np.ndarray

    @classmethod
    def of(cls, shape: CollisionShape, world: np.ndarray) -> "Placed":
        m = world @ shape.offset.as_matrix()
        return cls(shape.kind, shape.dimensions, m[:3, :3], m[:3, 3].copy())

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "sphere":
            ext = np.full(3, self.dims[0])
        elif self.kind == "box":
            ext = np.abs(self.rot) @ (np.asarray(self.dims) / 2.0)
        else:
            r, length = self.dims
            ax = self.rot[:, 2]
            ext = np.abs(ax) * (length / 2.0)
            if self.kind == "capsule":
                ext = ext + r
            else:
                ext = ext + r * np.sqrt(np.clip(1.0 - ax * ax, 0.0, 1.0))
        return self.center - ext, self.center + ext

    def segment(self) -> tuple[np.ndarray, np.ndarray]:
        half = self.rot[:, 2] * (self.dims[1] / 2.0)
        return self.center - half, self.center + half

    def support(self, d: np.ndarray) -> np.ndarray:
        if self.kind == "sphere":
            n = np.linalg.norm(d)
            return self.center + (d / n * self.dims[0] if n > 0 else 0.0)
        local = self.rot.T @ d
        if self.kind == "box":
            h = np.asarray(self.dims) / 2.0
            return self.center + self.rot @ np.where(local >= 0.0, h, -h)
        r, length = self.dims
        z = length / 2.0 if local[2] >= 0.0 else -length / 2.0
        if self.kind == "cylinder":
            rho = math.hypot(local[0], local[1])
            if rho > 0:
                p = np.array([local[0] / rho * r, local[1] / rho * r, z])
            else:
                p = np.array([0.0, 0.0, z])
            return self.center + self.rot @ p
        n = np.linalg.norm(d)
        return self.center + self.rot @ np.array([0.0, 0.0, z]) + (d / n * r if n > 0 else 0.0)

    def contains(self, p, tol: float = 0.0) -> bool:
        local = self.rot.T @ (np.asarray(p, dtype=float) - self.center)
        if self.kind == "sphere":
            return float(local @ local) <= (self.dims[0] + tol) ** 2
        if self.kind == "box":
            return bool(np.all(np.abs(local) <= np.asarray(self.dims) / 2.0 + tol))
        r, length = self.dims
        if self.kind == "cylinder":
            return abs(local[2]) <= length / 2.0 + tol and math.hypot(local[0], local[1]) <= r + tol
        z = min(max(local[2], -length / 2.0), length / 2.0)
        return math.dist(local, (0.0, 0.0, z)) <= r + tol


def closest_on_segment(p, a, b) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0 else min(1.0, max(0.0, float((p - a) @ ab) / denom))
    return a + t * ab


def segment_segment_distance(p1, q1, p2, q2) -> float:
    """Closest distance between segments p1q1 and p2q2 (Ericson 5.1.9)."""
    d1, d2, r = q1 - p1, q2 - p2, p1 - p2
    a, e, f = float(d1 @ d1), float(d2 @ d2), float(d2 @ r)
    if a <= 1e-18 and e <= 1e-18:
        return float(np.linalg.norm(r))
    if a <= 1e-18:
        s, t = 0.0, min(1.0, max(0.0, f / e))
    else:
        c = float(d1 @ r)
        if e <= 1e-18:
            t, s = 0.0, min(1.0, max(0.0, -c / a))
        else:
            b = float(d1 @ d2)
            denom = a * e - b * b
            s = min(1.0, max(0.0, (b * f - c * e) / denom)) if denom > 1e-18 else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t, s = 0.0, min(1.0, max(0.0, -c / a))
            elif t > 1.0:
                t, s = 1.0, min(1.0, max(0.0, (b - c) / a))
    c1 = p1 + d1 * s
    c2 = p2 + d2 * t
    return float(np.linalg.norm(c1 - c2))


# --- GJK -------------------------------------------------------------------

def _closest_segment(a, b):
    ab = b - a
    t = -float(a @ ab) / float(ab @ ab) if float(ab @ ab) > 0 else 0.0
    if t <= 0.0:
        return a, [a]
    if t >= 1.0:
        return b, [b]
    return a + t * ab, [a, b]


def _closest_triangle(a, b, c):
    # Ericson 5.1.5 with query point at the origin
    ab, ac = b - a, c - a
    ap = -a
    d1, d2 = float(ab @ ap), float(ac @ ap)
    if d1 <= 0 and d2 <= 0:
        return a, [a]
    bp = -b
    d3, d4 = float(ab @ bp), float(ac @ bp)
    if d3 >= 0 and d4 <= d3:
        return b, [b]
    vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        v = d1 / (d1 - d3)
        return a + v * ab, [a, b]
    cp = -c
    d5, d6 = float(ab @ cp), float(ac @ cp)
    if d6 >= 0 and d5 <= d6:
        return c, [c]
    vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        w = d2 / (d2 - d6)
        return a + w * ac, [a, c]
    va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return b + w * (c - b), [b, c]
    denom = 1.0 / (va + vb + vc)
    v, w = vb * denom, vc * denom
    return a + ab * v + ac * w, [a, b, c]


def _closest_tetra(a, b, c, d):
    best = None
    any_outside = False
    for p, q, r, s in ((a, b, c, d), (a, c, d, b), (a, d, b, c), (b, d, c, a)):
        n = np.cross(q - p, r - p)
        sp = float(n @ (-p))
        so = float(n @ (s - p))
        if sp * so < 0.0 or (so == 0.0):
            any_outside = True
            pt, simp = _closest_triangle(p, q, r)
            dist = float(pt @ pt)
            if best is None or dist < best[0]:
                best = (dist, pt, simp)
    if not any_outside:
        return np.zeros(3), [a, b, c, d]
    return best[1], best[2]


def _closest_simplex(simplex):
    n = len(simplex)
    if n == 1:
        return simplex[0], simplex
    if n == 2:
        return _closest_segment(*simplex)
    if n == 3:
        return _closest_triangle(*simplex)
    return _closest_tetra(*simplex)


def gjk_distance(a: Placed, b: Placed, stop_above: float = math.inf, max_iter: int = 100) -> float:
    """Distance between two convex shapes (0 when they overlap).

    Returns as soon as the lower bound exceeds ``stop_above``.
    """
    v = a.center - b.center
    if not np.any(v):
        v = np.array([1.0, 0.0, 0.0])
    simplex: list[np.ndarray] = []
    for _ in range(max_iter):
        w = a.support(-v) - b.support(v)
        vv = float(v @ v)
        vw = float(v @ w)
        if vw > 0 and vw * vw > (stop_above * stop_above) * vv:
            return vw / math.sqrt(vv)
        if vv - vw <= 1e-12 * max(vv, 1e-12):
            return math.sqrt(vv)
        simplex.append(w)
        v, simplex = _closest_simplex(simplex)
        vv = float(v @ v)
        if vv <= TOL * TOL or len(simplex) == 4:
            return math.sqrt(vv) if len(simplex) < 4 else 0.0
    return float(np.linalg.norm(v))


def _sphere_box_dist(s: Placed, box: Placed) -> float:
    local = box.rot.T @ (s.center - box.center)
    h = np.asarray(box.dims) / 2.0
    d = np.maximum(np.abs(local) - h, 0.0)
    return float(np.linalg.norm(d)) - s.dims[0]


def shapes_intersect(a: Placed, b: Placed, tol: float = TOL) -> bool:
    """True iff the two shapes overlap or touch (within ``tol``)."""
    ka, kb = a.kind, b.kind
    if ka > kb:
        a, b, ka, kb = b, a, kb, ka
    if ka == "sphere" and kb == "sphere":
        return float(np.linalg.norm(a.center - b.center)) <= a.dims[0] + b.dims[0] + tol
    if ka == "capsule" and kb == "capsule":
        return segment_segment_distance(*a.segment(), *b.segment()) <= a.dims[0] + b.dims[0] + tol
    if ka == "capsule" and kb == "sphere":
        p = closest_on_segment(b.center, *a.segment())
        return float(np.linalg.norm(b.center - p)) <= a.dims[0] + b.dims[0] + tol
    if ka == "box" and kb == "sphere":
        return _sphere_box_dist(b, a) <= tol
    return gjk_distance(a, b, stop_above=tol) <= tol


def aabb_overlap(a, b) -> bool:
    return bool(np.all(a[0] <= b[1]) and np.all(b[0] <= a[1]))


# --- rays --------------------------------------------------------------------

def _ray_box(o, d, h):
    t0, t1 = -math.inf, math.inf
    for i in range(3):
        if abs(d[i]) < 1e-15:
            if abs(o[i]) > h[i]:
                return None
            continue
        a, b = (-h[i] - o[i]) / d[i], (h[i] - o[i]) / d[i]
        if a > b:
            a, b = b, a
        t0, t1 = max(t0, a), min(t1, b)
        if t0 > t1:
            return None
    return t0, t1


def _ray_sphere(o, d, c, r):
    oc = o - c
    b = float(oc @ d)
    cc = float(oc @ oc) - r * r
    disc = b * b - cc
    if disc < 0:
        return None
    s = math.sqrt(disc)
    return -b - s, -b + s


def _ray_cylinder_local(o, d, r, half):
    """Entry/exit params against a z-aligned finite cylinder at the origin."""
    t0, t1 = -math.inf, math.inf
    a = d[0] * d[0] + d[1] * d[1]
    if a < 1e-18:
        if o[0] * o[0] + o[1] * o[1] > r * r:
            return None
    else:
        b = o[0] * d[0] + o[1] * d[1]
        c = o[0] * o[0] + o[1] * o[1] - r * r
        disc = b * b - a * c
        if disc < 0:
            return None
        s = math.sqrt(disc)
        t0, t1 = (-b - s) / a, (-b + s) / a
    if abs(d[2]) < 1e-15:
        if abs(o[2]) > half:
            return None
    else:
        za, zb = (-half - o[2]) / d[2], (half - o[2]) / d[2]
        if za > zb:
            za, zb = zb, za
        t0, t1 = max(t0, za), min(t1, zb)
    if t0 > t1:
        return None
    return t0, t1


def ray_distance(shape: Placed, origin, direction) -> Optional[float]:
    """Smallest t >= 0 with origin + t*direction on the shape, else None.

    ``direction`` must be unit length. A ray starting inside reports 0.
    """
    o = shape.rot.T @ (np.asarray(origin, dtype=float) - shape.center)
    d = shape.rot.T @ np.asarray(direction, dtype=float)
    if shape.kind == "box":
        hit = _ray_box(o, d, np.asarray(shape.dims) / 2.0)
    elif shape.kind == "sphere":
        hit = _ray_sphere(o, d, np.zeros(3), shape.dims[0])
    elif shape.kind == "cylinder":
        hit = _ray_cylinder_local(o, d, shape.dims[0], shape.dims[1] / 2.0)
    else:
        r, length = shape.dims
        hits = [h for h in (
            _ray_cylinder_local(o, d, r, length / 2.0),
            _ray_sphere(o, d, np.array([0.0, 0.0, length / 2.0]), r),
            _ray_sphere(o, d, np.array([0.0, 0.0, -length / 2.0]), r),
        ) if h is not None]
        if not hits:
            return None
        hit = (min(h[0] for h in hits), max(h[1] for h in hits))
    if hit is None or hit[1] < 0:
        return None
    return max(hit[0], 0.0)


# --- robot-level checking -------------------------------------------------------

def base_transform(base: Pose2D) -> np.ndarray:
    c, s = math.cos(base.theta), math.sin(base.theta)
    m = np.eye(4)
    m[0, 0], m[0, 1], m[1, 0], m[1, 1] = c, -s, s, c
    m[0, 3], m[1, 3] = base.x, base.y
    return m


_object_cache: dict[int, tuple[SceneObject, Placed, tuple]] = {}


def placed_object(obj: SceneObject) -> tuple[Placed, tuple]:
    hit = _object_cache.get(id(obj))
    if hit is not None and hit[0] is obj:
        return hit[1], hit[2]
    p = Placed.of(obj.shape, obj.pose.as_matrix())
    box = p.aabb()
    if len(_object_cache) > 4096:
        _object_cache.clear()
    _object_cache[id(obj)] = (obj, p, box)
    return p, box


@dataclass(frozen=True)
class AttachedBody:
    """An object rigidly held by a link (pose given in that link's frame)."""

    object: SceneObject
    link: str
    relative: Pose3D


def robot_shapes(model: RobotModel, base: Pose2D, q, attached: Iterable[AttachedBody] = (), padding: float = 0.0,
                 transforms: Optional[dict] = None) -> list[tuple[str, Placed]]:
    from mobman.kinematics import link_transforms

    qmap = q.as_dict() if isinstance(q, JointState) else q
    frames = transforms if transforms is not None else link_transforms(model, qmap)
    world = base_transform(base)
    out = []
    for ln in model.links:
        if ln.collision is None:
            continue
        out.append((ln.name, Placed.of(ln.collision.padded(padding), world @ frames[ln.name])))
    for body in attached:
        m = world @ frames[body.link] @ body.relative.as_matrix()
        out.append((body.object.id, Placed.of(body.object.shape.padded(padding), m)))
    return out


def check_collision(
    model: RobotModel,
    base: Pose2D,
    q,
    objects: Iterable[SceneObject],
    ignore: Iterable[str] = (),
    attached: Iterable[AttachedBody] = (),
    padding: float = 0.0,
) -> bool:
    """True iff any link (or held object) shape touches a non-ignored object."""
    ignore = set(ignore)
    attached = list(attached)
    ignore.update(b.object.id for b in attached)
    obs = [placed_object(o) for o in objects if o.id not in ignore]
    if not obs:
        return False
    for _, shape in robot_shapes(model, base, q, attached, padding):
        box = shape.aabb()
        for other, obox in obs:
            if aabb_overlap(box, obox) and shapes_intersect(shape, other):
                return True
    return False
