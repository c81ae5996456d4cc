import math
from dataclasses import replace

import numpy as np
import pytest

from mobman.assets.library import tip_link
from mobman.assets.model import CollisionShape, SceneObject
from mobman.errors import NothingAttached, TooFarToGrasp, UnknownRobot
from mobman.geometry import Pose2D, Pose3D, Twist2D, quat_from_rpy
from mobman.kinematics import forward_kinematics
from mobman.sim.collision import Placed, base_transform, check_collision, gjk_distance, ray_distance, robot_shapes, \
    shapes_intersect
from mobman.sim.world import (LidarConfig, RobotCommand, SimConfig, WorldState, attach, detach, grasp_candidate,
                              raycast_lidar, read_odometry, robot_in_collision, spawn_robot, step,
                              tool_world_transform)

from oracles import contains, overlap_by_sampling, shape_tuple

WALL_X = 2.0


def box(oid, size, xyz, rpy=(0, 0, 0), movable=False):
    return SceneObject(oid, CollisionShape("box", size), Pose3D(xyz, quat_from_rpy(*rpy)), movable)


def world_with(robot, objects=(), base=Pose2D()):
    return WorldState({"r": spawn_robot(robot, base)}, tuple(objects), 0.0)


def sphere(r, c):
    return Placed("sphere", (r,), np.eye(3), np.asarray(c, dtype=float))


# --- primitive collision ----------------------------------------------------------------

def test_sphere_pairs():
    assert shapes_intersect(sphere(0.5, (0, 0, 0)), sphere(0.5, (0.6, 0, 0)))
    assert not shapes_intersect(sphere(0.5, (0, 0, 0)), sphere(0.5, (1.1, 0, 0)))


def test_gjk_box_distance_exact():
    a = Placed("box", (1.0, 1.0, 1.0), np.eye(3), np.zeros(3))
    b = Placed("box", (1.0, 1.0, 1.0), np.eye(3), np.array([1.5, 0.0, 0.0]))
    assert gjk_distance(a, b) == pytest.approx(0.5, abs=1e-9)
    c = Placed("capsule", (0.1, 1.0), np.eye(3), np.array([0.0, 0.0, 2.0]))
    # capsule tip 1.4 above the origin, box top at 0.5
    assert gjk_distance(a, c) == pytest.approx(0.9, abs=1e-9)


def _random_placed(rng):
    kind = rng.choice(["sphere", "box", "cylinder", "capsule"])
    dims = {"sphere": (rng.uniform(0.05, 0.4),), "box": tuple(rng.uniform(0.05, 0.6, 3))}.get(
        kind, (rng.uniform(0.05, 0.3), rng.uniform(0.1, 0.6)))
    q = rng.normal(size=4)
    rot = Pose3D((0, 0, 0), tuple(q / np.linalg.norm(q))).as_matrix()[:3, :3]
    return Placed(kind, dims, rot, rng.uniform(-0.5, 0.5, 3))


def test_primitive_pairs_against_sampling_oracle():
    rng = np.random.default_rng(11)
    checked = 0
    for _ in range(300):
        a, b = _random_placed(rng), _random_placed(rng)
        got = shapes_intersect(a, b)
        oracle = overlap_by_sampling(shape_tuple(a.kind, a.dims, a.rot, a.center),
                                     shape_tuple(b.kind, b.dims, b.rot, b.center), rng)
        if oracle:
            assert got  # sampled points really are inside both
        elif got:
            # the oracle can only miss shallow contact
            assert gjk_distance(a, b) == 0.0
            b_small = Placed(b.kind, tuple(d * 0.97 for d in b.dims), b.rot, b.center)
            a_small = Placed(a.kind, tuple(d * 0.97 for d in a.dims), a.rot, a.center)
            assert not shapes_intersect(a_small, b_small)
        checked += 1
    assert checked == 300


def test_ray_distance_box():
    b = Placed("box", (1.0, 2.0, 2.0), np.eye(3), np.array([2.5, 0.0, 0.0]))
    assert ray_distance(b, np.zeros(3), np.array([1.0, 0.0, 0.0])) == pytest.approx(2.0)
    assert ray_distance(b, np.zeros(3), np.array([-1.0, 0.0, 0.0])) is None


# --- robot collision against a dense containment oracle -----------------------------------

def test_arm_over_table_matches_containment_oracle(robot):
    rng = np.random.default_rng(7)
    arm = robot.group("arm")
    rest = {j.name: 0.0 for j in robot.joints if j.actuated}
    disagreements = 0
    for _ in range(100):
        table = box("table", (0.6, 0.8, 0.05), (rng.uniform(0.35, 0.7), rng.uniform(-0.3, 0.3), rng.uniform(0.3, 0.8)),
                    (0, 0, rng.uniform(-1, 1)))
        q = dict(rest)
        q.update(zip(arm, rng.uniform(-1.5, 1.5, 6)))
        got = check_collision(robot, Pose2D(), q, [table])
        tp = Placed.of(table.shape, table.pose.as_matrix())
        t = shape_tuple(tp.kind, tp.dims, tp.rot, tp.center)
        shapes = robot_shapes(robot, Pose2D(), q)
        oracle = any(overlap_by_sampling(shape_tuple(s.kind, s.dims, s.rot, s.center), t, rng, 1500)
                     for _, s in shapes)
        if got != oracle:
            # only shallow contacts may escape the sampler
            shrunk = replace(table, shape=CollisionShape("box", tuple(d - 0.01 for d in table.shape.dimensions)))
            assert got and not oracle and not check_collision(robot, Pose2D(), q, [shrunk])
            disagreements += 1
    assert disagreements <= 5


def test_ignore_set(robot):
    b = box("b", (0.2, 0.2, 0.2), (0, 0, 0.1))
    assert check_collision(robot, Pose2D(), {j.name: 0.0 for j in robot.actuated_joints}, [b])
    assert not check_collision(robot, Pose2D(), {j.name: 0.0 for j in robot.actuated_joints}, [b], ignore={"b"})


# --- stepping -----------------------------------------------------------------------------

def test_zero_command_only_advances_time(robot):
    w0 = world_with(robot)
    w1 = step(w0, {}, 0.02)
    assert w1.time == pytest.approx(0.02)
    assert w1.robots["r"].base == w0.robots["r"].base and w1.robots["r"].joints == w0.robots["r"].joints


def test_forward_step(robot):
    w = step(world_with(robot), {"r": RobotCommand(Twist2D(1.0, 0.0))}, 0.02)
    assert w.robots["r"].base.x == pytest.approx(0.02)


def test_wall_one_cm_ahead_cancels_motion(robot):
    # base cylinder radius 0.2: the wall face sits 0.01 m beyond the body
    wall = box("wall", (0.1, 2.0, 1.0), (0.2 + 0.01 + 0.05, 0, 0.5))
    w0 = world_with(robot, [wall])
    assert not robot_in_collision(w0, "r")
    w1 = step(w0, {"r": RobotCommand(Twist2D(1.0, 0.0))}, 0.02)
    assert w1.robots["r"].base == w0.robots["r"].base and w1.robots["r"].collided
    # the oracle: the swept pose does overlap the wall
    assert check_collision(robot, Pose2D(0.02, 0, 0), w0.robots["r"].full_joint_map(), [wall])


def test_unknown_robot(robot):
    with pytest.raises(UnknownRobot):
        step(world_with(robot), {"x": RobotCommand()}, 0.02)


def test_joint_rate_limit(robot):
    j = robot.group("arm")[1]
    vmax = robot.joint(j).max_velocity
    w = world_with(robot)
    target = {j: 0.5}
    n = 0
    while abs(w.robots["r"].joints.as_dict()[j] - 0.5) > 1e-12:
        w = step(w, {"r": RobotCommand(joint_targets=target)}, 0.02)
        n += 1
    assert n == math.ceil(0.5 / (vmax * 0.02) - 1e-9)


def _random_commands(robot, seed, n=60):
    rng = np.random.default_rng(seed)
    arm = robot.group("arm")
    return [{"r": RobotCommand(Twist2D(rng.uniform(-0.5, 0.5), rng.uniform(-1, 1)),
                               dict(zip(arm, rng.uniform(-1, 1, 6))))} for _ in range(n)]


def test_determinism_and_non_penetration(robot):
    objs = [box("a", (0.3, 0.3, 0.5), (0.6, 0.1, 0.25)), box("b", (0.2, 1.0, 0.5), (-0.5, 0.0, 0.25))]
    cmds = _random_commands(robot, 3)
    runs = []
    for _ in range(2):
        w = world_with(robot, objs)
        traj = []
        for c in cmds:
            w = step(w, c, 0.05)
            assert not robot_in_collision(w, "r")
            traj.append((w.robots["r"].base, w.robots["r"].joints.positions))
        runs.append(traj)
    assert runs[0] == runs[1]


# --- lidar --------------------------------------------------------------------------------

def test_lidar_wall_examples(robot):
    wall = box("wall", (0.2, 40.0, 2.0), (WALL_X + 0.1, 0, 1.0))
    cfg = LidarConfig(n_beams=8, fov=2 * math.pi, max_range=8.0)
    scan = raycast_lidar(world_with(robot, [wall]), Pose2D(), cfg)
    assert scan.angle_min == 0.0 and scan.angle_increment == pytest.approx(math.pi / 4)
    assert scan.ranges[0] == pytest.approx(2.0, abs=1e-9)
    assert scan.ranges[1] == pytest.approx(2.0 / math.cos(math.pi / 4), abs=1e-9)
    assert scan.ranges[4] == cfg.no_hit


def test_lidar_empty_world(robot):
    cfg = LidarConfig()
    scan = raycast_lidar(world_with(robot), Pose2D(), cfg)
    assert len(scan.ranges) == cfg.n_beams and all(r == cfg.no_hit for r in scan.ranges)


def test_lidar_consistency(robot):
    rng = np.random.default_rng(2)
    objs = [box(f"o{i}", tuple(rng.uniform(0.2, 1.0, 2)) + (1.0,), (*rng.uniform(-4, 4, 2), 0.5), (0, 0, rng.uniform(-3, 3)))
            for i in range(8)]
    objs = [o for o in objs if not o.shape.dimensions or np.linalg.norm(o.pose.translation[:2]) > 1.0]
    w = world_with(robot, objs)
    cfg = LidarConfig(n_beams=90)
    scan = raycast_lidar(w, Pose2D(0, 0, 0.3), cfg)
    placed = [Placed.of(o.shape, o.pose.as_matrix()) for o in objs]
    eps = 1e-6
    for i, r in enumerate(scan.ranges):
        assert 0 < r <= cfg.max_range or r == cfg.no_hit
        a = 0.3 + scan.angle_min + i * scan.angle_increment
        d = np.array([math.cos(a), math.sin(a), 0.0])
        o = np.array([0.0, 0.0, cfg.height])
        if r == cfg.no_hit:
            continue
        before, after = o + (r - eps) * d, o + (r + eps) * d
        assert not any(contains(p.kind, p.dims, p.rot, p.center, before) for p in placed)
        assert any(contains(p.kind, p.dims, p.rot, p.center, after) for p in placed)


# --- odometry -------------------------------------------------------------------------------

def test_odometry_exact_without_noise(robot):
    w = world_with(robot, base=Pose2D(1, 2, 0.5))
    pose, stamp = read_odometry(w, "r", np.random.default_rng(0))
    assert pose == Pose2D(1, 2, 0.5) and stamp == 0.0


def test_odometry_noise_statistics(robot):
    w = world_with(robot)
    rng = np.random.default_rng(4)
    xs = np.array([read_odometry(w, "r", rng, (0.01, 0.0))[0].x for _ in range(10_000)])
    assert abs(xs.std() - 0.01) < 0.001


def test_odometry_unknown_robot(robot):
    with pytest.raises(UnknownRobot):
        read_odometry(world_with(robot), "nope", np.random.default_rng(0))


# --- grasping ----------------------------------------------------------------------------------

def _cup_near_tool(robot, gap):
    w = world_with(robot)
    tool = tool_world_transform(w.robots["r"])[:3, 3]
    cup = SceneObject("cup", CollisionShape("cylinder", (0.03, 0.12)),
                      Pose3D((tool[0] + 0.03 + gap, tool[1], tool[2])), True)
    return replace(w, objects=(cup,))


def test_attach_and_fk_coupling(robot):
    w = _cup_near_tool(robot, 0.02)
    assert grasp_candidate(w, "r") == "cup"
    w = attach(w, "r", "cup")
    rel = w.robots["r"].grasp.relative.as_matrix()
    arm = robot.group("arm")
    for k in range(30):
        w = step(w, {"r": RobotCommand(joint_targets={arm[0]: 0.6, arm[2]: 0.4})}, 0.02)
    state = w.robots["r"]
    # independent chain: base transform, full-tree FK to the tool, then the held offset
    tool = base_transform(state.base) @ forward_kinematics(robot, state.full_joint_map())[tip_link(robot)].as_matrix()
    expected = tool @ rel
    got = w.object("cup").pose.as_matrix()
    assert np.abs(got - expected).max() <= 1e-9
    assert abs(state.joints.as_dict()[arm[0]] - 0.0) > 0.5  # the arm really moved
    w = detach(w, "r")
    assert w.robots["r"].grasp is None
    w2 = step(w, {"r": RobotCommand(joint_targets={arm[0]: 0.0})}, 0.02)
    assert np.array_equal(w2.object("cup").pose.as_matrix(), got)


def test_attached_rigidity_over_steps(robot):
    w = attach(_cup_near_tool(robot, 0.0), "r", "cup")
    rel0 = None
    for c in _random_commands(robot, 9, 40):
        w = step(w, c, 0.05)
        state = w.robots["r"]
        tool = tool_world_transform(state)
        rel = np.linalg.inv(tool) @ w.object("cup").pose.as_matrix()
        rel0 = rel if rel0 is None else rel0
        assert np.abs(rel - rel0).max() <= 1e-9


def test_too_far_to_grasp(robot):
    with pytest.raises(TooFarToGrasp):
        attach(_cup_near_tool(robot, 1.0), "r", "cup")


def test_detach_empty(robot):
    with pytest.raises(NothingAttached):
        detach(world_with(robot), "r")


def test_sim_config_validation():
    with pytest.raises(ValueError):
        SimConfig(dt=0.0)
    with pytest.raises(ValueError):
        SimConfig(odom_noise_std=(-1.0, 0.0))
