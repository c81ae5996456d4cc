"""URDF subset reader and writer.

Accepted: ``robot``, ``link`` (with optional ``collision`` and ``visual``),
``joint`` with ``parent``, ``child``, ``origin``, ``axis`` and ``limit``.
Geometry is limited to box, sphere, cylinder and capsule. Anything else
(meshes, inertials, transmissions, gazebo/ros2_control blocks) raises
:class:`UnsupportedElement` instead of being dropped.
"""
from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from typing import Optional

from mobman.assets.model import CollisionShape, JointSpec, LinkSpec, RobotModel, check_model
from mobman.errors import (
    CycleDetected,
    DanglingReference,
    DuplicateName,
    InvalidModel,
    UnsupportedElement,
    XmlMalformed,
)
from mobman.geometry import Pose3D

_GEOMETRY = ("box", "sphere", "cylinder", "capsule")


def _floats(s: Optional[str], n: int, default) -> tuple[float, ...]:
    if s is None:
        return tuple(default)
    try:
        vals = tuple(float(v) for v in s.split())
    except ValueError as exc:
        raise XmlMalformed(f"bad number list {s!r}") from exc
    if len(vals) != n:
        raise XmlMalformed(f"expected {n} numbers, got {s!r}")
    return vals


def _origin(el: Optional[ET.Element]) -> Pose3D:
    if el is None:
        return Pose3D()
    _only(el, ())
    return Pose3D.from_xyz_rpy(_floats(el.get("xyz"), 3, (0, 0, 0)), _floats(el.get("rpy"), 3, (0, 0, 0)))


def _only(el: ET.Element, allowed):
    for child in el:
        if child.tag not in allowed:
            raise UnsupportedElement(child.tag)


def _float_attr(el, name, default=None) -> float:
    v = el.get(name)
    if v is None:
        if default is None:
            raise XmlMalformed(f"<{el.tag}> missing attribute {name!r}")
        return default
    try:
        return float(v)
    except ValueError as exc:
        raise XmlMalformed(f"<{el.tag} {name}={v!r}> is not a number") from exc


def _geometry(el: ET.Element) -> tuple[str, tuple[float, ...]]:
    kids = list(el)
    if len(kids) != 1:
        raise XmlMalformed("<geometry> must hold exactly one shape")
    g = kids[0]
    if g.tag not in _GEOMETRY:
        raise UnsupportedElement(g.tag)
    if g.tag == "box":
        return "box", _floats(g.get("size"), 3, ())
    if g.tag == "sphere":
        return "sphere", (_float_attr(g, "radius"),)
    return g.tag, (_float_attr(g, "radius"), _float_attr(g, "length"))


def _link(el: ET.Element) -> LinkSpec:
    _only(el, ("collision", "visual"))
    name = el.get("name")
    if not name:
        raise XmlMalformed("<link> without name")
    collision = None
    visual_tag = None
    cols = el.findall("collision")
    if len(cols) > 1:
        raise UnsupportedElement("collision (more than one per link)")
    if cols:
        c = cols[0]
        _only(c, ("origin", "geometry"))
        geo = c.find("geometry")
        if geo is None:
            raise XmlMalformed(f"collision of link {name!r} has no geometry")
        kind, dims = _geometry(geo)
        try:
            collision = CollisionShape(kind, dims, _origin(c.find("origin")))
        except ValueError as exc:
            raise XmlMalformed(f"link {name!r}: {exc}") from exc
    for v in el.findall("visual"):
        _only(v, ("origin", "geometry", "material"))
        geo = v.find("geometry")
        if geo is not None:
            _geometry(geo)
        mat = v.find("material")
        if mat is not None:
            _only(mat, ("color",))
        visual_tag = v.get("name") or (mat.get("name") if mat is not None else None) or visual_tag
    return LinkSpec(name, collision, visual_tag)


def _joint(el: ET.Element) -> JointSpec:
    _only(el, ("parent", "child", "origin", "axis", "limit"))
    name = el.get("name")
    kind = el.get("type")
    if not name or not kind:
        raise XmlMalformed("<joint> needs name and type")
    if kind not in ("revolute", "continuous", "prismatic", "fixed"):
        raise UnsupportedElement(f"joint type {kind}")
    parent, child = el.find("parent"), el.find("child")
    if parent is None or child is None or not parent.get("link") or not child.get("link"):
        raise XmlMalformed(f"joint {name!r} needs parent and child links")
    axis = _floats(el.find("axis").get("xyz") if el.find("axis") is not None else None, 3, (1, 0, 0))
    norm = math.sqrt(sum(a * a for a in axis))
    if kind != "fixed":
        if norm == 0:
            raise XmlMalformed(f"joint {name!r} has zero axis")
        axis = tuple(a / norm for a in axis)
    limits = None
    vmax = 1.0
    lim = el.find("limit")
    if lim is not None:
        vmax = _float_attr(lim, "velocity", 1.0)
        if kind in ("revolute", "prismatic"):
            limits = (_float_attr(lim, "lower", 0.0), _float_attr(lim, "upper", 0.0))
    elif kind in ("revolute", "prismatic"):
        raise XmlMalformed(f"joint {name!r} of type {kind} needs <limit>")
    return JointSpec(name, kind, parent.get("link"), child.get("link"), _origin(el.find("origin")), axis, limits, vmax)


def parse_urdf(text: str, unit_kind: str = "composite") -> RobotModel:
    """Parse URDF text into a validated :class:`RobotModel`."""
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise XmlMalformed(str(exc)) from exc
    if root.tag != "robot":
        raise XmlMalformed(f"root element must be <robot>, got <{root.tag}>")
    _only(root, ("link", "joint"))
    links = [_link(e) for e in root.findall("link")]
    joints = [_joint(e) for e in root.findall("joint")]
    names: set[str] = set()
    for ln in links:
        if ln.name in names:
            raise DuplicateName(ln.name)
        names.add(ln.name)
    jnames: set[str] = set()
    child_of: dict[str, str] = {}
    for j in joints:
        if j.name in jnames:
            raise DuplicateName(j.name)
        jnames.add(j.name)
        for end in (j.parent, j.child):
            if end not in names:
                raise DanglingReference(end)
        if j.child in child_of:
            raise InvalidModel(f"link {j.child!r} has more than one parent joint")
        child_of[j.child] = j.parent
    if not links:
        raise XmlMalformed("robot has no links")
    roots = [ln.name for ln in links if ln.name not in child_of]
    if not roots:
        raise CycleDetected("no root link: joints form a cycle")
    for start in child_of:
        seen = set()
        cur = start
        while cur in child_of:
            if cur in seen:
                raise CycleDetected(f"cycle through link {cur!r}")
            seen.add(cur)
            cur = child_of[cur]
    if len(roots) > 1:
        raise InvalidModel(f"multiple root links: {roots}")
    model = RobotModel(root.get("name") or "robot", tuple(links), tuple(joints), roots[0], unit_kind)
    return check_model(model)


def _fmt(v: float) -> str:
    return repr(float(v))


def _origin_el(parent: ET.Element, pose: Pose3D):
    if pose == Pose3D():
        return
    ET.SubElement(
        parent,
        "origin",
        xyz=" ".join(_fmt(v) for v in pose.translation),
        rpy=" ".join(_fmt(v) for v in pose.rpy()),
    )


def serialize_urdf(model: RobotModel) -> str:
    """Write a model back out as URDF text (supported subset only)."""
    root = ET.Element("robot", name=model.name)
    for ln in model.links:
        el = ET.SubElement(root, "link", name=ln.name)
        if ln.visual_tag is not None:
            ET.SubElement(el, "visual", name=ln.visual_tag)
        if ln.collision is not None:
            c = ET.SubElement(el, "collision")
            _origin_el(c, ln.collision.offset)
            g = ET.SubElement(ET.SubElement(c, "geometry"), ln.collision.kind)
            d = ln.collision.dimensions
            if ln.collision.kind == "box":
                g.set("size", " ".join(_fmt(v) for v in d))
            elif ln.collision.kind == "sphere":
                g.set("radius", _fmt(d[0]))
            else:
                g.set("radius", _fmt(d[0]))
                g.set("length", _fmt(d[1]))
    for j in model.joints:
        el = ET.SubElement(root, "joint", name=j.name, type=j.kind)
        ET.SubElement(el, "parent", link=j.parent)
        ET.SubElement(el, "child", link=j.child)
        _origin_el(el, j.origin)
        if j.actuated:
            ET.SubElement(el, "axis", xyz=" ".join(_fmt(v) for v in j.axis))
            lim = ET.SubElement(el, "limit", velocity=_fmt(j.max_velocity))
            if j.limits is not None:
                lim.set("lower", _fmt(j.limits[0]))
                lim.set("upper", _fmt(j.limits[1]))
    ET.indent(root)
    return ET.tostring(root, encoding="unicode") + "\n"
