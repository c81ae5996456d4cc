"""Robot and scene description types plus model-level transforms."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from mobman.errors import BadPrefix, InvalidModel, NameCollision, UnknownMountLink
from mobman.geometry import Pose3D, compose, quat_to_matrix

SHAPE_DIMS = {"sphere": 1, "box": 3, "cylinder": 2, "capsule": 2}
JOINT_KINDS = ("revolute", "continuous", "prismatic", "fixed")
UNIT_KINDS = ("base", "arm", "gripper", "composite")
# declared by the hardware decomposition but without an interface yet
UNIMPLEMENTED_UNIT_KINDS = ("leg", "hand")


@dataclass(frozen=True)
class CollisionShape:
    """Primitive collision volume.

    ``dimensions`` per kind: sphere (radius,), box (sx, sy, sz) full sizes,
    cylinder (radius, length), capsule (radius, length of the core segment).
    Cylinders and capsules are aligned with the shape frame's z axis.
    """

    kind: str
    dimensions: tuple[float, ...]
    offset: Pose3D = field(default_factory=Pose3D)

    def __post_init__(self):
        if self.kind not in SHAPE_DIMS:
            raise ValueError(f"unknown shape kind {self.kind!r}")
        dims = tuple(float(d) for d in self.dimensions)
        if len(dims) != SHAPE_DIMS[self.kind]:
            raise ValueError(f"{self.kind} needs {SHAPE_DIMS[self.kind]} dimensions")
        if any(not d > 0 for d in dims):
            raise ValueError("shape dimensions must be > 0")
        object.__setattr__(self, "dimensions", dims)

    def half_extents(self) -> np.ndarray:
        """Half extents of the shape's local bounding box."""
        d = self.dimensions
        if self.kind == "sphere":
            return np.array([d[0]] * 3)
        if self.kind == "box":
            return np.array(d) / 2.0
        if self.kind == "cylinder":
            return np.array([d[0], d[0], d[1] / 2.0])
        return np.array([d[0], d[0], d[1] / 2.0 + d[0]])

    def padded(self, margin: float) -> "CollisionShape":
        if margin == 0:
            return self
        d = self.dimensions
        if self.kind == "sphere":
            nd = (d[0] + margin,)
        elif self.kind == "box":
            nd = tuple(x + 2 * margin for x in d)
        elif self.kind == "cylinder":
            nd = (d[0] + margin, d[1] + 2 * margin)
        else:
            nd = (d[0] + margin, d[1])
        return replace(self, dimensions=nd)


@dataclass(frozen=True)
class LinkSpec:
    name: str
    collision: Optional[CollisionShape] = None
    visual_tag: Optional[str] = None


@dataclass(frozen=True)
class JointSpec:
    name: str
    kind: str
    parent: str
    child: str
    origin: Pose3D = field(default_factory=Pose3D)
    axis: tuple[float, float, float] = (1.0, 0.0, 0.0)
    limits: Optional[tuple[float, float]] = None
    max_velocity: float = 1.0

    @property
    def actuated(self) -> bool:
        return self.kind != "fixed"

    def sampling_limits(self) -> tuple[float, float]:
        """Bounds used by samplers; continuous joints get (-pi, pi]."""
        if self.kind == "continuous" or self.limits is None:
            return (-math.pi, math.pi)
        return self.limits


@dataclass(frozen=True)
class RobotModel:
    """Kinematic tree.

    ``groups`` records which actuated joints came from which hardware unit
    (``arm``, ``gripper``, ...), so composites still know their parts.
    """

    name: str
    links: tuple[LinkSpec, ...]
    joints: tuple[JointSpec, ...]
    root_link: str
    unit_kind: str = "composite"
    groups: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(self, "joints", tuple(self.joints))
        if self.unit_kind not in UNIT_KINDS:
            raise ValueError(f"unit_kind must be one of {UNIT_KINDS}")
        if not self.groups and self.unit_kind != "composite":
            object.__setattr__(self, "groups", {self.unit_kind: tuple(j.name for j in self.joints if j.actuated)})
        else:
            object.__setattr__(self, "groups", {k: tuple(v) for k, v in self.groups.items()})

    def link(self, name: str) -> LinkSpec:
        for ln in self.links:
            if ln.name == name:
                return ln
        raise KeyError(name)

    def joint(self, name: str) -> JointSpec:
        for j in self.joints:
            if j.name == name:
                return j
        raise KeyError(name)

    @property
    def link_names(self) -> tuple[str, ...]:
        return tuple(ln.name for ln in self.links)

    @property
    def actuated_joints(self) -> tuple[JointSpec, ...]:
        return tuple(j for j in self.joints if j.actuated)

    def group(self, kind: str) -> tuple[str, ...]:
        return self.groups.get(kind, ())

    def parent_joint(self, link: str) -> Optional[JointSpec]:
        for j in self.joints:
            if j.child == link:
                return j
        return None

    def chain(self, tip_link: str) -> list[JointSpec]:
        """Joints from the root down to ``tip_link``, in order."""
        out = []
        cur = tip_link
        seen = set()
        while cur != self.root_link:
            j = self.parent_joint(cur)
            if j is None or cur in seen:
                raise InvalidModel(f"link {tip_link!r} not connected to root")
            seen.add(cur)
            out.append(j)
            cur = j.parent
        return out[::-1]


@dataclass(frozen=True)
class SceneObject:
    id: str
    shape: CollisionShape
    pose: Pose3D = field(default_factory=Pose3D)
    movable: bool = False

    def world_shape_pose(self) -> Pose3D:
        return compose(self.pose, self.shape.offset)

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        """World axis-aligned bounds (lo, hi) of the (possibly rotated) shape."""
        sp = self.world_shape_pose()
        rot = quat_to_matrix(sp.rotation)
        if self.shape.kind == "sphere":
            ext = self.shape.half_extents()
        elif self.shape.kind == "box":
            ext = np.abs(rot) @ self.shape.half_extents()
        else:
            # round shapes: the z-aligned core segment plus a radius disc
            r, length = self.shape.dimensions
            ax = rot[:, 2]
            half = abs(ax) * (length / 2.0)
            disc = r * np.sqrt(np.clip(1.0 - ax * ax, 0.0, 1.0))
            ext = half + (r if self.shape.kind == "capsule" else disc)
        c = np.array(sp.translation)
        return c - ext, c + ext


def _rename(model: RobotModel, fn) -> RobotModel:
    links = tuple(replace(ln, name=fn(ln.name)) for ln in model.links)
    joints = tuple(replace(j, name=fn(j.name), parent=fn(j.parent), child=fn(j.child)) for j in model.joints)
    groups = {k: tuple(fn(n) for n in v) for k, v in model.groups.items()}
    return RobotModel(model.name, links, joints, fn(model.root_link), model.unit_kind, groups)


_PREFIX_RE = re.compile(r"[a-z0-9_]+")


def namespace(model: RobotModel, prefix: str) -> RobotModel:
    """Prepend ``prefix/`` to every link and joint name."""
    if not isinstance(prefix, str) or not _PREFIX_RE.fullmatch(prefix):
        raise BadPrefix(f"prefix must match [a-z0-9_]+, got {prefix!r}")
    return _rename(model, lambda n: f"{prefix}/{n}")


def compose_models(
    base: RobotModel,
    attachment: RobotModel,
    mount_link: str,
    mount_offset: Pose3D = Pose3D(),
    name: Optional[str] = None,
) -> RobotModel:
    """Mount ``attachment`` on ``base`` via a new fixed joint."""
    if mount_link not in base.link_names:
        raise UnknownMountLink(mount_link)
    base_names = set(base.link_names) | {j.name for j in base.joints}
    for n in list(attachment.link_names) + [j.name for j in attachment.joints]:
        if n in base_names:
            raise NameCollision(n)
    jname = f"{mount_link}__to__{attachment.root_link}"
    if jname in base_names or jname in {j.name for j in attachment.joints} or jname in attachment.link_names:
        raise NameCollision(jname)
    mount = JointSpec(jname, "fixed", mount_link, attachment.root_link, mount_offset)
    groups = {k: tuple(v) for k, v in base.groups.items()}
    for k, v in attachment.groups.items():
        groups[k] = groups.get(k, ()) + tuple(v)
    return RobotModel(
        name or f"{base.name}+{attachment.name}",
        base.links + attachment.links,
        base.joints + (mount,) + attachment.joints,
        base.root_link,
        "composite",
        groups,
    )


def validate(model: RobotModel) -> list[tuple[str, str]]:
    """List invariant violations as ``(kind, element)`` pairs; empty if valid."""
    out: list[tuple[str, str]] = []
    seen: set[str] = set()
    for ln in model.links:
        if not ln.name:
            out.append(("EmptyName", ""))
        elif ln.name in seen:
            out.append(("DuplicateName", ln.name))
        seen.add(ln.name)
    jseen: set[str] = set()
    for j in model.joints:
        if j.name in jseen:
            out.append(("DuplicateName", j.name))
        jseen.add(j.name)
        if j.kind not in JOINT_KINDS:
            out.append(("BadJointKind", j.name))
        for end in (j.parent, j.child):
            if end not in seen:
                out.append(("DanglingReference", end))
        if j.actuated and abs(math.sqrt(sum(a * a for a in j.axis)) - 1.0) > 1e-9:
            out.append(("BadAxis", j.name))
        if j.limits is not None and j.limits[0] > j.limits[1]:
            out.append(("BadLimits", j.name))
        if j.kind in ("revolute", "prismatic") and j.limits is None:
            out.append(("MissingLimits", j.name))
    if model.root_link not in seen:
        out.append(("DanglingReference", model.root_link))
    parents: dict[str, list[str]] = {}
    for j in model.joints:
        parents.setdefault(j.child, []).append(j.name)
    if model.root_link in parents:
        out.append(("RootHasParent", model.root_link))
    for ln in model.links:
        if ln.name == model.root_link:
            continue
        n = len(parents.get(ln.name, []))
        if n == 0:
            out.append(("Disconnected", ln.name))
        elif n > 1:
            out.append(("MultipleParents", ln.name))
    # cycle: following parent pointers from some link revisits it
    parent_of = {j.child: j.parent for j in model.joints}
    reported: set[str] = set()
    for ln in model.links:
        path: list[str] = []
        cur = ln.name
        while cur in parent_of and cur not in path:
            path.append(cur)
            cur = parent_of[cur]
        if cur in path:
            cyc = frozenset(path[path.index(cur):])
            if not cyc & reported:
                out.append(("CycleDetected", min(cyc)))
                reported |= cyc
    return out


def check_model(model: RobotModel) -> RobotModel:
    problems = validate(model)
    if problems:
        raise InvalidModel("; ".join(f"{k}({e})" for k, e in problems))
    return model
