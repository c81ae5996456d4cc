import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mobman.assets.library import tip_link
from mobman.errors import MissingJoint, NoConvergence, UnreachableTarget
from mobman.geometry import JointState, Pose3D
from mobman.kinematics import (IkOptions, chain_joint_names, forward_kinematics, ik_solve, jacobian, link_transforms,
                               tip_transform, within_limits)

from oracles import central_difference_jacobian, planar_arm, planar_tip_by_hand

ARM = planar_arm()


def tip(q1, q2):
    return forward_kinematics(ARM, {"j1": q1, "j2": q2})["tip"].position


def test_planar_straight():
    assert np.allclose(tip(0, 0), (2, 0, 0), atol=1e-12)


def test_planar_rigid_rotation():
    assert np.allclose(tip(math.pi / 2, 0), (0, 2, 0), atol=1e-12)


def test_planar_elbow_against_hand_chain():
    assert np.allclose(tip(0, math.pi / 2), planar_tip_by_hand(0, math.pi / 2), atol=1e-12)
    assert np.allclose(tip(0, math.pi / 2), (1, 1, 0), atol=1e-12)


@given(st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi))
def test_planar_fk_matches_hand_chain(q1, q2):
    assert np.allclose(tip(q1, q2), planar_tip_by_hand(q1, q2), atol=1e-12)


def test_missing_joint():
    with pytest.raises(MissingJoint):
        forward_kinematics(ARM, {"j1": 0.0})


def test_fk_deterministic(robot):
    q = {n: 0.1 * i for i, n in enumerate(j.name for j in robot.joints if j.actuated)}
    a = link_transforms(robot, q)
    b = link_transforms(robot, q)
    assert a.keys() == b.keys()
    assert all(np.array_equal(a[k], b[k]) for k in a)


def test_tip_transform_agrees_with_full_fk(robot):
    rng = np.random.default_rng(1)
    names = [j.name for j in robot.joints if j.actuated]
    q = dict(zip(names, rng.uniform(-1, 1, len(names))))
    t = tip_link(robot)
    assert np.allclose(tip_transform(robot, t, q), forward_kinematics(robot, q)[t].as_matrix(), atol=1e-12)


def test_ik_planar_elbow_target():
    q = ik_solve(ARM, "tip", Pose3D((1, 1, 0)), {"j1": 0.1, "j2": 1.3})
    assert np.linalg.norm(tip(*q.positions) - (1, 1, 0)) <= 1e-4
    # the seed basin picks the elbow-up branch
    assert q.as_dict()["j1"] == pytest.approx(0.0, abs=1e-2)
    assert q.as_dict()["j2"] == pytest.approx(math.pi / 2, abs=1e-2)


def test_ik_fixed_point():
    seed = JointState(("j1", "j2"), (0.4, -0.7))
    q = ik_solve(ARM, "tip", Pose3D(tuple(tip(0.4, -0.7))), seed)
    assert q == seed


def test_ik_outside_reach():
    with pytest.raises(UnreachableTarget):
        ik_solve(ARM, "tip", Pose3D((3, 0, 0)), {"j1": 0.0, "j2": 0.5})


def test_ik_iteration_budget():
    with pytest.raises((NoConvergence, UnreachableTarget)):
        ik_solve(ARM, "tip", Pose3D((0.2, 1.5, 0)), {"j1": 0.0, "j2": 0.1}, IkOptions(max_iters=1))


def test_ik_respects_limits():
    arm = planar_arm(lim=1.0)
    q = ik_solve(arm, "tip", Pose3D(tuple(planar_tip_by_hand(0.5, 0.9))), {"j1": 0.0, "j2": 0.2})
    assert within_limits(arm, q)


def test_ik_orientation_full(robot):
    t = tip_link(robot)
    names = [j.name for j in robot.joints if j.actuated]
    goal_q = dict.fromkeys(names, 0.0)
    goal_q.update(zip(robot.group("arm"), (0.3, 0.5, 1.0, 0.2, 1.2, -0.4)))
    target = Pose3D.from_matrix(tip_transform(robot, t, goal_q))
    seed = dict.fromkeys(names, 0.0)
    seed.update(zip(robot.group("arm"), (0.2, 0.6, 1.2, 0.0, 1.3, 0.0)))
    q = ik_solve(robot, t, target, seed, IkOptions(orientation="full"))
    got = tip_transform(robot, t, q)
    assert np.linalg.norm(got[:3, 3] - target.position) <= 1e-4
    cos = (np.trace(got[:3, :3].T @ target.as_matrix()[:3, :3]) - 1) / 2
    assert math.acos(min(1.0, cos)) <= 1e-3


def test_planar_jacobian_analytic():
    q1, q2 = 0.3, -0.8
    j = jacobian(ARM, "tip", {"j1": q1, "j2": q2})
    analytic = np.array([
        [-math.sin(q1) - math.sin(q1 + q2), -math.sin(q1 + q2)],
        [math.cos(q1) + math.cos(q1 + q2), math.cos(q1 + q2)],
    ])
    assert np.allclose(j[:2], analytic, atol=1e-8)
    assert np.allclose(j[5], (1, 1), atol=1e-8)


def test_reference_jacobian_against_full_fk_differences(robot):
    t = tip_link(robot)
    arm = list(robot.group("arm"))
    assert chain_joint_names(robot, t)[: len(arm)] == arm
    rng = np.random.default_rng(3)
    base = {j.name: 0.0 for j in robot.joints if j.actuated}
    for _ in range(10):
        q = rng.uniform(-1.5, 1.5, len(arm))

        def pos(v):
            m = dict(base)
            m.update(zip(arm, v))
            return forward_kinematics(robot, m)[t].position

        m = dict(base)
        m.update(zip(arm, q))
        assert np.abs(jacobian(robot, t, m, arm)[:3] - central_difference_jacobian(pos, q)).max() <= 1e-5
