"""Config-driven scenario plumbing shared by the CLI, scripts and tests."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

from mobman import config as C
from mobman.assets.library import AssetManifest
from mobman.executor import (FETCH_BINDINGS, REFERENCE_IK_SEEDS, ExecutionReport, SkillBinding,
                             StepReport, WorldKnowledge, execute_plan)
from mobman.hal.api import RobotHandle
from mobman.hal.service import HalService
from mobman.hal.sim_backend import SimHandle
from mobman.tasks import parser, strips
from mobman.worldfile import WorldFile, load_world


@dataclass(frozen=True)
class Scenario:
    tree: C.ConfigTree
    world: WorldFile
    domain: strips.Domain
    problem: strips.Problem
    robot_id: str


def load_scenario(tree: C.ConfigTree) -> Scenario:
    manifest = tree["assets"]["manifest"]
    man = AssetManifest.load(manifest) if manifest else None
    world = load_world(tree["world"]["file"], man)
    world.robot(tree["robot"]["id"])
    task = tree["task"]
    domain = parser.load_domain(task["domain"]) if task["domain"] else parser.fetch_domain()
    problem = parser.load_problem(task["problem"]) if task["problem"] else parser.fetch_problem()
    return Scenario(tree, world, domain, problem, tree["robot"]["id"])


def make_service(sc: Scenario, seed: Optional[int] = None, lockstep: Optional[bool] = None) -> HalService:
    lock = sc.tree["hal"]["lockstep"] if lockstep is None else lockstep
    return HalService(sc.world.build(), C.sim_config(sc.tree, seed), lockstep=lock, settings=C.hal_settings(sc.tree))


def sim_handle(sc: Scenario, seed: Optional[int] = None) -> SimHandle:
    return SimHandle(make_service(sc, seed, lockstep=True), sc.robot_id)


def knowledge(sc: Scenario) -> WorldKnowledge:
    spawn = sc.world.robot(sc.robot_id)
    return WorldKnowledge(spawn.model, sc.world.locations, sc.world.bounds, ik_seeds=REFERENCE_IK_SEEDS)


def bindings(sc: Scenario) -> SkillBinding:
    return FETCH_BINDINGS


def task_plan(sc: Scenario) -> list:
    return strips.plan(sc.domain, sc.problem, mode=sc.tree["task"]["mode"])


def run(handle: RobotHandle, sc: Scenario, seed: Optional[int] = None,
        on_step: Optional[Callable[[StepReport], None]] = None, plan: Optional[Sequence] = None
        ) -> tuple[list, ExecutionReport]:
    """Plan the task and execute it through ``handle``."""
    plan = task_plan(sc) if plan is None else list(plan)
    report = execute_plan(handle, plan, bindings(sc), knowledge(sc), C.exec_config(sc.tree, seed), on_step)
    return plan, report


def write_logs(log_dir, plan, report: ExecutionReport) -> tuple[Path, Path]:
    d = Path(log_dir)
    d.mkdir(parents=True, exist_ok=True)
    p, r = d / "plan.jsonl", d / "report.jsonl"
    p.write_text(strips.plan_to_jsonl(plan))
    r.write_text(report.to_jsonl())
    return p, r


def final_state(handle: RobotHandle) -> dict:
    """Base pose and arm joints at the end of a run, for cross-backend comparison."""
    pose = handle.sensor.odometry().pose
    joints = handle.arm.get_joint_state()
    objects = {o.id: o.pose.translation for o in handle.sensor.objects()}
    return {"pose": pose, "joints": joints.positions, "objects": objects}
