import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mobman.assets.library import REFERENCE_ARM_MOUNT, AssetManifest, assemble, gripper_max_width, reference_robot
from mobman.assets.model import (CollisionShape, JointSpec, LinkSpec, RobotModel, SceneObject, compose_models,
                                 namespace, validate)
from mobman.assets.urdf import parse_urdf, serialize_urdf
from mobman.errors import (BadPrefix, CycleDetected, DanglingReference, DuplicateName, NameCollision,
                           UnknownMountLink, UnsupportedElement, XmlMalformed)
from mobman.geometry import Pose3D, compose, poses_close, quat_from_rpy
from mobman.kinematics import forward_kinematics

TWO_LINK = """<robot name="two">
  <link name="a"/>
  <link name="b"/>
  <joint name="j" type="revolute">
    <parent link="a"/><child link="b"/>
    <origin xyz="0 0 0.1" rpy="0 0 1.0"/>
    <axis xyz="0 0 2"/>
    <limit lower="-1.5" upper="1.25" velocity="2.0"/>
  </joint>
</robot>"""


def test_single_link():
    m = parse_urdf('<robot name="b"><link name="base"/></robot>')
    assert (len(m.links), len(m.joints), m.root_link) == (1, 0, "base")


def test_two_links_one_revolute():
    m = parse_urdf(TWO_LINK)
    assert (len(m.links), len(m.joints)) == (2, 1)
    j = m.joints[0]
    assert j.limits == (-1.5, 1.25) and j.max_velocity == 2.0
    assert j.axis == pytest.approx((0, 0, 1))
    assert poses_close(j.origin, Pose3D((0, 0, 0.1), quat_from_rpy(0, 0, 1.0)))


def test_dangling_child():
    with pytest.raises(DanglingReference):
        parse_urdf(TWO_LINK.replace('<link name="b"/>', ""))


@pytest.mark.parametrize("snippet,err", [
    ('<link name="a"><collision><geometry><mesh filename="x.stl"/></geometry></collision></link>',
     UnsupportedElement),
    ('<link name="a"><inertial/></link>', UnsupportedElement),
    ('<link name="a"/><transmission name="t"/>', UnsupportedElement),
    ('<link name="a"/><gazebo/>', UnsupportedElement),
    ('<link name="a"/><link name="a"/>', DuplicateName),
])
def test_rejections(snippet, err):
    with pytest.raises(err):
        parse_urdf(f'<robot name="r">{snippet}</robot>')


def test_malformed_xml():
    with pytest.raises(XmlMalformed):
        parse_urdf("<robot><link name='a'>")


def test_cycle():
    text = """<robot name="c"><link name="a"/><link name="b"/>
      <joint name="j1" type="fixed"><parent link="a"/><child link="b"/></joint>
      <joint name="j2" type="fixed"><parent link="b"/><child link="a"/></joint></robot>"""
    with pytest.raises(CycleDetected):
        parse_urdf(text)


# --- round trip ---------------------------------------------------------------------

nums = st.floats(-2.0, 2.0, allow_nan=False).map(lambda v: round(v, 6))
pos = st.floats(0.01, 1.0).map(lambda v: round(v, 6))


@st.composite
def urdf_texts(draw):
    n = draw(st.integers(1, 7))
    parts = []
    for i in range(n):
        geo = draw(st.sampled_from(["", "box", "sphere", "cylinder", "capsule"]))
        if not geo:
            parts.append(f'<link name="l{i}"/>')
            continue
        dims = {"box": f'size="{draw(pos)} {draw(pos)} {draw(pos)}"', "sphere": f'radius="{draw(pos)}"'}.get(
            geo, f'radius="{draw(pos)}" length="{draw(pos)}"')
        org = f'<origin xyz="{draw(nums)} {draw(nums)} {draw(nums)}" rpy="{draw(nums)} {draw(nums)} {draw(nums)}"/>'
        parts.append(f'<link name="l{i}"><collision>{org}<geometry><{geo} {dims}/></geometry></collision></link>')
    for i in range(1, n):
        parent = draw(st.integers(0, i - 1))
        kind = draw(st.sampled_from(["revolute", "continuous", "prismatic", "fixed"]))
        lo, hi = sorted((draw(nums), draw(nums)))
        axis = [draw(nums) for _ in range(3)]
        if kind != "fixed" and math.hypot(*axis) < 0.1:
            axis = [0.0, 0.0, 1.0]
        body = (f'<parent link="l{parent}"/><child link="l{i}"/>'
                f'<origin xyz="{draw(nums)} {draw(nums)} {draw(nums)}" rpy="{draw(nums)} {draw(nums)} {draw(nums)}"/>')
        if kind != "fixed":
            body += f'<axis xyz="{axis[0]} {axis[1]} {axis[2]}"/><limit lower="{lo}" upper="{hi}" velocity="1.5"/>'
        parts.append(f'<joint name="j{i}" type="{kind}">{body}</joint>')
    return f'<robot name="gen">{"".join(parts)}</robot>'


def models_close(a: RobotModel, b: RobotModel, tol=1e-9) -> bool:
    if (a.name, a.root_link, a.link_names) != (b.name, b.root_link, b.link_names) or len(a.joints) != len(b.joints):
        return False
    for la, lb in zip(a.links, b.links):
        if (la.collision is None) != (lb.collision is None):
            return False
        if la.collision is not None:
            ca, cb = la.collision, lb.collision
            if ca.kind != cb.kind or not np.allclose(ca.dimensions, cb.dimensions, atol=tol):
                return False
            if not np.allclose(ca.offset.as_matrix(), cb.offset.as_matrix(), atol=tol):
                return False
    for ja, jb in zip(a.joints, b.joints):
        if (ja.name, ja.kind, ja.parent, ja.child, ja.limits, ja.max_velocity) != (
                jb.name, jb.kind, jb.parent, jb.child, jb.limits, jb.max_velocity):
            return False
        if not np.allclose(ja.axis, jb.axis, atol=tol):
            return False
        if not np.allclose(ja.origin.as_matrix(), jb.origin.as_matrix(), atol=tol):
            return False
    return True


@given(urdf_texts())
def test_parse_serialize_parse_fixed_point(text):
    m1 = parse_urdf(text)
    m2 = parse_urdf(serialize_urdf(m1))
    assert models_close(m1, m2)
    assert models_close(m2, parse_urdf(serialize_urdf(m2)))


@given(urdf_texts())
def test_every_link_has_one_path_from_root(text):
    m = parse_urdf(text)
    assert validate(m) == []
    for ln in m.links:
        chain = m.chain(ln.name)
        assert len(chain) == len({j.name for j in chain})
        assert (chain[0].parent if chain else ln.name) == m.root_link


def test_reference_urdfs_parse():
    man = AssetManifest.load()
    for name in man.units:
        m = man.unit(name)
        assert validate(m) == []
        assert models_close(m, parse_urdf(serialize_urdf(m), m.unit_kind))


# --- validate -------------------------------------------------------------------------

def test_validate_examples():
    good = parse_urdf(TWO_LINK)
    assert validate(good) == []
    bad_axis = replace(good, joints=(replace(good.joints[0], axis=(0.5, 0.0, 0.0)),))
    assert ("BadAxis", "j") in validate(bad_axis)
    links = (LinkSpec("r"), LinkSpec("a"), LinkSpec("b"))
    joints = (JointSpec("x", "fixed", "r", "a"), JointSpec("y", "fixed", "a", "b"), JointSpec("z", "fixed", "b", "a"))
    probs = validate(RobotModel("cyc", links, joints, "r"))
    assert any(k == "CycleDetected" for k, _ in probs)


# --- namespace / compose -------------------------------------------------------------------

def test_namespace():
    m = parse_urdf(TWO_LINK)
    assert namespace(m, "arm").link_names == ("arm/a", "arm/b")
    assert namespace(namespace(m, "inner"), "outer").link_names[0] == "outer/inner/a"
    for bad in ("", "Arm", "a/b"):
        with pytest.raises(BadPrefix):
            namespace(m, bad)


@pytest.fixture(scope="module")
def units():
    man = AssetManifest.load()
    return namespace(man.unit("diffdrive_base"), "base"), namespace(man.unit("arm6"), "arm"), \
        namespace(man.unit("pj_gripper"), "gripper")


def test_compose_counts(units):
    base, arm, _ = units
    c = compose_models(base, arm, "base/base_link", Pose3D((0, 0, 0.32)))
    assert len(c.links) == len(base.links) + len(arm.links)
    assert len(c.joints) == len(base.joints) + len(arm.joints) + 1
    assert c.unit_kind == "composite"
    assert validate(c) == []


def test_compose_errors(units):
    base, arm, _ = units
    with pytest.raises(UnknownMountLink):
        compose_models(base, arm, "nope")
    with pytest.raises(NameCollision):
        compose_models(base, base, "base/base_link")


def test_compose_does_not_mutate_and_decomposes(units):
    base, arm, _ = units
    before = (serialize_urdf(base), serialize_urdf(arm))
    c = compose_models(base, arm, "base/base_link", Pose3D((0, 0, 0.32)))
    assert (serialize_urdf(base), serialize_urdf(arm)) == before
    mount = [j for j in c.joints if j.parent == "base/base_link" and j.child == arm.root_link]
    assert len(mount) == 1 and mount[0].kind == "fixed"
    # cut the mount joint: the two sides are exactly the original link sets
    rest = [j for j in c.joints if j is not mount[0]]
    side = {c.root_link}
    grew = True
    while grew:
        grew = False
        for j in rest:
            if j.parent in side and j.child not in side:
                side.add(j.child)
                grew = True
    assert side == set(base.link_names)
    assert set(c.link_names) - side == set(arm.link_names)


def test_composed_fk_equals_chained_fk(units):
    base, arm, grip = units
    off_arm, off_grip = Pose3D((0, 0, 0.32)), Pose3D((0, 0, 0.03), quat_from_rpy(0.0, 0.0, 0.4))
    c = compose_models(compose_models(base, arm, "base/base_link", off_arm), grip, "arm/wrist3", off_grip)
    rng = np.random.default_rng(5)
    for _ in range(20):
        q = {j.name: float(rng.uniform(*(j.limits or (-1, 1)))) for j in c.joints if j.actuated}
        fk = forward_kinematics(c, q)
        fb = forward_kinematics(base, {k: v for k, v in q.items() if k.startswith("base/")})
        fa = forward_kinematics(arm, {k: v for k, v in q.items() if k.startswith("arm/")})
        fg = forward_kinematics(grip, {k: v for k, v in q.items() if k.startswith("gripper/")})
        arm_root = compose(fb["base/base_link"], off_arm)
        for name, p in fa.items():
            assert np.abs(fk[name].as_matrix() - compose(arm_root, p).as_matrix()).max() <= 1e-9
        grip_root = compose(compose(arm_root, fa["arm/wrist3"]), off_grip)
        for name, p in fg.items():
            assert np.abs(fk[name].as_matrix() - compose(grip_root, p).as_matrix()).max() <= 1e-9


def test_reference_robot_assembly():
    r = reference_robot()
    assert len(r.group("arm")) == 6 and len(r.group("gripper")) == 2
    assert gripper_max_width(r) > 0.07
    man = AssetManifest.load()
    assert assemble(man, "diffdrive_base", [REFERENCE_ARM_MOUNT]).group("gripper") == ()


# --- scene objects ------------------------------------------------------------------------

def test_scene_object_aabb():
    o = SceneObject("cup", CollisionShape("cylinder", (0.03, 0.12)), Pose3D((1, 0, 0.8)), True)
    lo, hi = o.aabb()
    assert np.allclose(lo, (0.97, -0.03, 0.74)) and np.allclose(hi, (1.03, 0.03, 0.86))
    b = SceneObject("b", CollisionShape("box", (2, 1, 1)), Pose3D((0, 0, 0), quat_from_rpy(0, 0, math.pi / 2)))
    lo, hi = b.aabb()
    assert np.allclose(hi, (0.5, 1.0, 0.5))


def test_shape_dimensions_positive():
    with pytest.raises(ValueError):
        CollisionShape("sphere", (0.0,))
    with pytest.raises(ValueError):
        CollisionShape("box", (1.0, 1.0))


def test_scene_assets_load():
    man = AssetManifest.load()
    for name in man.scene:
        o = man.scene_object(name)
        assert o.id == name and o.shape.kind in ("box", "sphere", "cylinder", "capsule")
