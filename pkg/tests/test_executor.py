import json
import math

import numpy as np
import pytest

from mobman import config as C
from mobman import runner
from mobman.assets.model import CollisionShape, SceneObject
from mobman.errors import UnboundSchema, UnknownSkill
from mobman.executor import (FETCH_BINDINGS, SUCCESS, SkillBinding, WorldKnowledge, execute_plan, execute_skill)
from mobman.geometry import Pose3D
from mobman.scenarios import KITCHEN_CONFIG
from mobman.sim.world import tool_world_transform
from mobman.tasks.strips import Problem, bind

from helpers import RecordingHandle, make_world
from mobman.hal.sim_backend import SimHandle


@pytest.fixture(scope="module")
def scenario():
    return runner.load_scenario(C.load_config(KITCHEN_CONFIG))


@pytest.fixture(scope="module")
def fetch_run(scenario):
    h = runner.sim_handle(scenario, 7)
    plan, report = runner.run(h, scenario, 7)
    return h, plan, report


def fresh(scenario):
    return RecordingHandle(runner.sim_handle(scenario, 7))


def test_empty_plan(scenario):
    h = fresh(scenario)
    rep = execute_plan(h, [], FETCH_BINDINGS, runner.knowledge(scenario))
    assert rep.status == SUCCESS and rep.steps == [] and h.log == []


def test_fetch_succeeds(fetch_run, scenario):
    h, plan, rep = fetch_run
    assert rep.status == SUCCESS
    assert [s.action for s in rep.steps] == [a.label for a in plan]
    assert [s.index for s in rep.steps] == [0, 1, 2]
    assert [s.skill for s in rep.steps] == ["pick_object", "navigate_to", "place_object"]
    cup = next(o for o in h.sensor.objects() if o.id == "cup").pose.translation
    goal = scenario.world.location("table").place
    assert math.dist(cup[:2], goal[:2]) < 0.05
    assert h.sensor.status().get("attached") is None


def test_report_jsonl(fetch_run):
    _, _, rep = fetch_run
    lines = [json.loads(l) for l in rep.to_jsonl().splitlines()]
    assert len(lines) == 4 and lines[-1]["summary"] and lines[-1]["status"] == "Success"
    assert all("wall_time" not in l for l in lines)
    assert "wall_time" in json.loads(rep.to_jsonl(include_wall_time=True).splitlines()[-1])


def test_navigate_into_wall_halts(scenario):
    d, p = scenario.domain, scenario.problem
    objs = {**p.objects, "wall": "location"}
    q = Problem(p.name, p.domain, objs, p.initial, p.goal)
    plan = [bind(d, q, "move", ("counter", "wall")), bind(d, q, "move", ("wall", "table")),
            bind(d, q, "pick", ("cup", "table"))]
    h = fresh(scenario)
    marks = []
    rep = execute_plan(h, plan, FETCH_BINDINGS, runner.knowledge(scenario), on_step=lambda s: marks.append(h.mark()))
    assert rep.status == "Failure" and len(rep.steps) == 1
    assert rep.steps[0].outcome.reason == "NoPath"
    assert h.commands_since(marks[0]) == []


def test_too_wide_object(scenario):
    h = fresh(scenario)
    out = execute_skill(h, "pick_object", ["wide_box"], runner.knowledge(scenario))
    assert out.status == "Failure" and out.reason == "ObjectTooWide"


def test_unknown_object_and_location(scenario):
    h = fresh(scenario)
    k = runner.knowledge(scenario)
    assert execute_skill(h, "pick_object", ["teapot"], k).reason == "UnknownObject"
    assert execute_skill(h, "navigate_to", ["attic"], k).reason == "UnknownEntity"
    with pytest.raises(UnknownSkill):
        execute_skill(h, "dance", [], k)


def test_navigate_to_current_pose(scenario):
    h = fresh(scenario)
    out = execute_skill(h, "navigate_to", ["counter"], runner.knowledge(scenario))
    assert out.status == SUCCESS
    assert sum(1 for op, _ in h.log if op == "sys.tick") <= 1


def test_unbound_schema(scenario):
    d, p = scenario.domain, scenario.problem
    plan = [bind(d, p, "pick", ("cup", "counter"))]
    with pytest.raises(UnboundSchema):
        execute_plan(fresh(scenario), plan, SkillBinding({"move": ("navigate_to", (1,))}), runner.knowledge(scenario))
    with pytest.raises(UnknownSkill):
        SkillBinding({"pick": ("teleport", ())}).check(["pick"])


def test_close_gripper_attaches_and_couples(robot):
    world = make_world(robot)
    tool = tool_world_transform(world.robots["r"])
    cup = SceneObject("cup", CollisionShape("cylinder", (0.03, 0.1)), Pose3D(tuple(tool[:3, 3])), movable=True)
    h = SimHandle.from_world(make_world(robot, [cup]))
    k = WorldKnowledge(robot, {}, (-2, -2, 2, 2))
    out = execute_skill(h, "close_gripper", [], k)
    assert out.status == SUCCESS and out.metrics["attached"] == "cup"
    assert out.metrics["width"] == pytest.approx(0.06, abs=1e-6)

    def rel():
        st = h.service.world.robots["r"]
        obj = next(o for o in h.sensor.objects() if o.id == "cup")
        return np.linalg.inv(tool_world_transform(st)) @ obj.pose.as_matrix()

    before, p0 = rel(), next(o for o in h.sensor.objects() if o.id == "cup").pose.translation
    h.arm.set_joint_targets((0.5, 0.2, 0.3, 0.0, 0.4, 0.0))
    for _ in range(100):
        h.tick()
    p1 = next(o for o in h.sensor.objects() if o.id == "cup").pose.translation
    assert np.linalg.norm(np.subtract(p1, p0)) > 0.05
    assert np.allclose(rel(), before, atol=1e-9)
    out = execute_skill(h, "open_gripper", [], k)
    assert out.status == SUCCESS and h.sensor.status().get("attached") is None


def test_plan_runs_identically_twice(scenario, fetch_run):
    h = runner.sim_handle(scenario, 7)
    _, rep = runner.run(h, scenario, 7)
    assert rep.to_jsonl() == fetch_run[2].to_jsonl()
