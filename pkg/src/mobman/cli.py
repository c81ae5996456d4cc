"""Command-line entry points.

Machine-readable artifacts go to files (or standard output when ``--out -``);
every diagnostic goes to standard error. Exit codes are listed in EXIT_CODES.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from mobman import config as C
from mobman.errors import ConfigError, ManipulationError, MobmanError, NavigationError, TaskPlanningError
from mobman.hal.api import HalError

log = logging.getLogger("mobman")

EXIT_OK = 0
EXIT_FAILURE = 1  # scenario ran, some step failed
EXIT_USAGE = 2  # bad arguments, unreadable or invalid configuration / inputs
EXIT_HAL = {"Disconnected": 3, "Timeout": 4, "Refused": 5, "ProtocolError": 6, "Unsupported": 7, "HardwareFault": 7}
EXIT_PLANNING = 8  # a standalone planner found no solution
EXIT_INTERNAL = 10

EXIT_CODES = {
    0: "success",
    1: "scenario completed with a failed step",
    2: "usage or configuration error",
    3: "HAL Disconnected (no server, connection lost)",
    4: "HAL Timeout",
    5: "HAL Refused",
    6: "HAL ProtocolError",
    7: "other HAL error (Unsupported, HardwareFault)",
    8: "planning failure (no path, no plan, no motion)",
    10: "internal error",
}


def _write(out: str, text: str) -> None:
    if out == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)


def _tree(paths: Sequence[str], seed: Optional[int] = None) -> C.ConfigTree:
    overrides = {"world": {"seed": seed}} if seed is not None else None
    tree = C.load_config(paths, overrides)
    for w in tree.warnings:
        log.warning("%s", w)
    return tree


# --- subcommands ------------------------------------------------------------------

def cmd_run_scenario(a) -> int:
    from mobman import runner

    tree = _tree(a.config, a.seed)
    sc = runner.load_scenario(tree)
    if a.backend == "sim":
        handle = runner.sim_handle(sc, a.seed)
    else:
        from mobman.hal.remote import RemoteHandle

        host = a.host or tree["hal"]["host"]
        port = a.port if a.port is not None else C.hal_port(tree)
        handle = RemoteHandle(host, port, timeout=tree["hal"]["timeout"], robot_id=sc.robot_id)
    wall0 = time.perf_counter()

    def on_step(s):
        o = s.outcome
        why = f" ({o.reason}: {o.detail})" if not o.ok else ""
        log.info("step %d %s -> %s%s [%.2f s wall]", s.index, s.action, o.status, why, s.wall_time)

    with handle:
        plan, report = runner.run(handle, sc, a.seed, on_step)
    plan_path, report_path = runner.write_logs(a.log_dir, plan, report)
    log.info("%s: %d steps, %.2f s sim, %.2f s wall; logs in %s", report.status, len(report.steps),
             report.sim_time, time.perf_counter() - wall0, report_path.parent)
    return EXIT_OK if report.status == "Success" else EXIT_FAILURE


def cmd_serve_hal(a) -> int:
    from mobman import runner
    from mobman.hal.server import HalServer

    tree = _tree(a.config)
    sc = runner.load_scenario(tree)
    lockstep = tree["hal"]["lockstep"] if a.lockstep is None else a.lockstep
    port = a.port if a.port is not None else C.hal_port(tree)
    srv = HalServer(runner.make_service(sc, lockstep=lockstep), a.host or tree["hal"]["host"], port)
    log.info("serving robot %r on %s:%d (%s)", sc.robot_id, *srv.address, "lockstep" if lockstep else "live")
    try:
        srv.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        srv.shutdown()
    return EXIT_OK


def _empty_map(tree, world):
    from mobman.geometry import Pose2D
    from mobman.navigation.grid import OccupancyGrid

    x0, y0, x1, y1 = world.bounds
    res = tree["navigation"]["resolution"]
    w = int(math.ceil((x1 - x0) / res - 1e-9))
    h = int(math.ceil((y1 - y0) / res - 1e-9))
    return OccupancyGrid.empty(w, h, res, Pose2D(x0, y0), C.map_params(tree))


def read_scans(text: str):
    """Scan log lines: {"pose": {"x","y","theta"}, "scan": <LidarScan dict>}."""
    from mobman.geometry import Pose2D
    from mobman.sensors import LidarScan

    out = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            out.append((Pose2D.from_dict(d["pose"]), LidarScan.from_dict(d["scan"])))
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"scan log line {n}: {exc}") from None
    return out


def cmd_export_map(a) -> int:
    from mobman.navigation.grid import save_map, update_map
    from mobman.worldfile import load_world

    tree = _tree(a.config)
    world = load_world(tree["world"]["file"])
    grid = _empty_map(tree, world)
    scans = read_scans(Path(a.scans).read_text())
    for pose, scan in scans:
        grid = update_map(grid, scan, pose)
    pgm, side = save_map(grid, a.out)
    log.info("integrated %d scans into a %dx%d map: %s (+ %s)", len(scans), grid.width, grid.height, pgm, side.name)
    return EXIT_OK


def _joint_vector(v, names, where):
    if isinstance(v, dict):
        missing = [n for n in names if n not in v]
        if missing:
            raise ConfigError(f"{where}: missing joints {missing}")
        return tuple(float(v[n]) for n in names)
    if not isinstance(v, list) or len(v) != len(names):
        raise ConfigError(f"{where}: expected {len(names)} joint values")
    return tuple(float(x) for x in v)


def parse_arm_request(req: dict, tree):
    """Build a motion-plan request from a YAML/JSON request file.

    Keys: ``start`` (joint list or name map, default zeros), ``goal`` with either
    ``joints`` or ``pose: {xyz, rpy}`` (world frame), optional ``base``
    {x, y, theta} (default: the robot spawn), ``gripper_width`` (default fully
    open), ``obstacles``: ``world`` (default) or ``none``, ``orientation``
    (none|axis|full).
    """
    from mobman.assets.library import gripper_joint_positions, gripper_max_width
    from mobman.geometry import JointState, Pose2D, Pose3D
    from mobman.manipulation.rrt import MotionPlanRequest
    from mobman.worldfile import load_world

    world = load_world(tree["world"]["file"])
    spawn = world.robot(tree["robot"]["id"])
    model = spawn.model
    names = model.group("arm")
    start = JointState(names, _joint_vector(req.get("start", [0.0] * len(names)), names, "start"))
    goal = req.get("goal")
    if not isinstance(goal, dict) or ("joints" in goal) == ("pose" in goal):
        raise ConfigError("goal needs exactly one of 'joints' or 'pose'")
    if "joints" in goal:
        target = JointState(names, _joint_vector(goal["joints"], names, "goal.joints"))
    else:
        p = goal["pose"]
        target = Pose3D.from_xyz_rpy(p.get("xyz", (0, 0, 0)), p.get("rpy", (0, 0, 0)))
    base = Pose2D.from_dict(req["base"]) if "base" in req else spawn.pose
    width = float(req.get("gripper_width", gripper_max_width(model)))
    obstacles = world.objects if req.get("obstacles", "world") == "world" else ()
    return MotionPlanRequest(model, base, start, target, tuple(obstacles), params=C.rrt_params(tree),
                             fixed=gripper_joint_positions(model, width), orientation=req.get("orientation", "axis"))


def cmd_plan_arm(a) -> int:
    from mobman.manipulation.rrt import plan_arm, trajectory_to_jsonl

    tree = _tree(a.config, a.seed)
    req = C.read_yaml(a.request)
    traj = plan_arm(parse_arm_request(req, tree))
    _write(a.out, trajectory_to_jsonl(traj))
    log.info("%d waypoints, %.3f s", len(traj.points), traj.duration)
    return EXIT_OK


def cmd_plan_task(a) -> int:
    from mobman.tasks import parser, strips

    domain = parser.load_domain(a.domain)
    problem = parser.load_problem(a.problem)
    plan = strips.plan(domain, problem, mode=a.mode)
    _write(a.out, strips.plan_to_jsonl(plan))
    log.info("%d-step plan: %s", len(plan), " ".join(x.label for x in plan))
    return EXIT_OK


def render_svg(grid, poses, scale: float = 4.0) -> str:
    """Map cells as rects (occupied dark, unknown grey) with the path as a polyline."""
    from mobman.navigation.grid import OCCUPIED, UNKNOWN

    cls = grid.classify()
    w, h = grid.width, grid.height
    W, H = w * scale, h * scale
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:g}" height="{H:g}" viewBox="0 0 {W:g} {H:g}">',
             f'<rect width="{W:g}" height="{H:g}" fill="#ffffff"/>']
    for kind, colour in ((UNKNOWN, "#cdcdcd"), (OCCUPIED, "#000000")):
        rows, cols = np.nonzero(cls == kind)
        for r, c in zip(rows, cols):
            parts.append(f'<rect x="{c * scale:g}" y="{(h - 1 - r) * scale:g}" width="{scale:g}" '
                         f'height="{scale:g}" fill="{colour}"/>')

    def px(p):
        return ((p.x - grid.origin.x) / grid.resolution * scale,
                (h - (p.y - grid.origin.y) / grid.resolution) * scale)

    if poses:
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in map(px, poses))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="#d62728" stroke-width="{scale / 2:g}"/>')
        for p, colour in ((poses[0], "#2ca02c"), (poses[-1], "#1f77b4")):
            x, y = px(p)
            parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{scale:g}" fill="{colour}"/>')
    parts.append("</svg>\n")
    return "\n".join(parts)


def cmd_render_path(a) -> int:
    from mobman.navigation.astar import Path2D
    from mobman.navigation.grid import load_map

    grid = load_map(a.map)
    path = Path2D.from_jsonl(Path(a.path).read_text())
    _write(a.out, render_svg(grid, path.poses, a.scale))
    return EXIT_OK


# --- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mobman", description="Mobile-manipulation middleware tools.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug diagnostics on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("run-scenario", help="plan the configured task and execute it on a backend")
    s.add_argument("--config", nargs="+", required=True, help="config files, later ones override earlier ones")
    s.add_argument("--backend", choices=("sim", "remote"), default="sim")
    s.add_argument("--host")
    s.add_argument("--port", type=int)
    s.add_argument("--log-dir", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(fn=cmd_run_scenario)

    s = sub.add_parser("serve-hal", help="host the robot emulator over TCP")
    s.add_argument("--config", nargs="+", required=True)
    s.add_argument("--host")
    s.add_argument("--port", type=int)
    s.add_argument("--lockstep", dest="lockstep", action="store_true", default=None,
                   help="advance time only on sys.tick (default from hal.lockstep)")
    s.add_argument("--live", dest="lockstep", action="store_false", help="free-running clock")
    s.set_defaults(fn=cmd_serve_hal)

    s = sub.add_parser("export-map", help="integrate a scan log into an occupancy grid (PGM + YAML)")
    s.add_argument("--config", nargs="+", required=True)
    s.add_argument("--scans", required=True, help='JSONL, one {"pose":…, "scan":…} per line')
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_export_map)

    s = sub.add_parser("plan-arm", help="standalone arm motion planning")
    s.add_argument("--config", nargs="+", required=True)
    s.add_argument("--request", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(fn=cmd_plan_arm)

    s = sub.add_parser("plan-task", help="symbolic task planning")
    s.add_argument("--domain", required=True)
    s.add_argument("--problem", required=True)
    s.add_argument("--mode", choices=("optimal", "greedy"), default="optimal")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_plan_task)

    s = sub.add_parser("render-path", help="SVG overlay of a path on a saved map")
    s.add_argument("--map", required=True)
    s.add_argument("--path", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--scale", type=float, default=4.0, help="pixels per cell")
    s.set_defaults(fn=cmd_render_path)
    return p


def exit_code_for(exc: BaseException) -> int:
    from mobman.errors import DomainSyntaxError, Ungroundable

    if isinstance(exc, HalError):
        return EXIT_HAL.get(exc.code, 7)
    if isinstance(exc, (DomainSyntaxError, Ungroundable)):
        return EXIT_USAGE  # malformed planning inputs
    if isinstance(exc, (TaskPlanningError, ManipulationError, NavigationError)):
        return EXIT_PLANNING
    if isinstance(exc, (MobmanError, OSError)):
        return EXIT_USAGE
    return EXIT_INTERNAL


def main(argv: Optional[Sequence[str]] = None) -> int:
    p = build_parser()
    a = p.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if a.verbose else logging.INFO, stream=sys.stderr,
                        format="mobman: %(levelname)s: %(message)s")
    try:
        return a.fn(a)
    except Exception as exc:  # noqa: BLE001 - mapped to documented exit codes
        code = exit_code_for(exc)
        log.error("%s: %s", type(exc).__name__, exc)
        if code == EXIT_INTERNAL:
            log.debug("traceback", exc_info=True)
        return code


if __name__ == "__main__":
    sys.exit(main())
