import json
import os
import socket
import subprocess
import sys
import time

import numpy as np

from mobman.cli import EXIT_CODES, main, read_scans
from mobman.navigation.astar import Path2D
from mobman.navigation.grid import load_map
from mobman.scenarios import BOX_ROOM_WORLD, KITCHEN_CONFIG, box_room, traversal_poses, traversal_scans
from mobman.tasks.parser import DATA_DIR as TASK_DIR

DOMAIN, PROBLEM = str(TASK_DIR / "fetch_domain.txt"), str(TASK_DIR / "fetch_problem.txt")


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_plan_task(tmp_path):
    out = tmp_path / "plan.jsonl"
    assert main(["plan-task", "--domain", DOMAIN, "--problem", PROBLEM, "--out", str(out)]) == 0
    rows = [json.loads(l) for l in out.read_text().splitlines()]
    assert [(r["step"], r["action"], r["kind"]) for r in rows] == [(0, "pick", "manip"), (1, "move", "nav"),
                                                                 (2, "place", "manip")]


def test_plan_task_stdout(capsys):
    assert main(["plan-task", "--domain", DOMAIN, "--problem", PROBLEM, "--mode", "greedy", "--out", "-"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 3


def test_plan_task_bad_input(tmp_path):
    bad = tmp_path / "d.txt"
    bad.write_text("(define (domain d)")
    assert main(["plan-task", "--domain", str(bad), "--problem", PROBLEM, "--out", "-"]) == 2
    bad.write_text("(define (problem p) (:domain fetch) (:init) (:goal (at cup attic)))")
    assert main(["plan-task", "--domain", DOMAIN, "--problem", str(bad), "--out", "-"]) == 2
    bad.write_text("(define (problem p) (:domain fetch) (:objects a b - location c - item) (:init (at c a))"
                   " (:goal (at c b)))")
    assert main(["plan-task", "--domain", DOMAIN, "--problem", str(bad), "--out", "-"]) == 8


def test_run_scenario_sim(tmp_path):
    assert main(["run-scenario", "--config", str(KITCHEN_CONFIG), "--log-dir", str(tmp_path), "--seed", "7"]) == 0
    lines = (tmp_path / "report.jsonl").read_text().splitlines()
    assert json.loads(lines[-1])["status"] == "Success"
    assert len((tmp_path / "plan.jsonl").read_text().splitlines()) == 3


def test_run_scenario_remote_without_server(tmp_path):
    port = free_port()
    r = subprocess.run([sys.executable, "-m", "mobman.cli", "run-scenario", "--config", str(KITCHEN_CONFIG),
                        "--backend", "remote", "--port", str(port), "--log-dir", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 3 == [c for c, d in EXIT_CODES.items() if "Disconnected" in d][0]
    assert r.stdout == ""
    assert "Disconnected" in r.stderr and str(port) in r.stderr


def test_missing_config_key(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("hal: {port: 1}\n")
    assert main(["run-scenario", "--config", str(cfg), "--log-dir", str(tmp_path)]) == 2


def test_serve_and_run_remote(tmp_path):
    port = free_port()
    env = dict(os.environ)
    srv = subprocess.Popen([sys.executable, "-m", "mobman.cli", "serve-hal", "--config", str(KITCHEN_CONFIG),
                            "--port", str(port), "--lockstep"], stderr=subprocess.PIPE, env=env)
    try:
        deadline = time.time() + 20
        while time.time() < deadline:
            try:
                socket.create_connection(("127.0.0.1", port), timeout=0.2).close()
                break
            except OSError:
                time.sleep(0.1)
        rc = main(["run-scenario", "--config", str(KITCHEN_CONFIG), "--backend", "remote", "--port", str(port),
                   "--log-dir", str(tmp_path / "remote"), "--seed", "7"])
        assert rc == 0
        assert main(["run-scenario", "--config", str(KITCHEN_CONFIG), "--log-dir", str(tmp_path / "sim"),
                     "--seed", "7"]) == 0
        a = [json.loads(l)["outcome"] for l in (tmp_path / "remote" / "report.jsonl").read_text().splitlines()[:-1]]
        b = [json.loads(l)["outcome"] for l in (tmp_path / "sim" / "report.jsonl").read_text().splitlines()[:-1]]
        assert a == b == ["Success"] * 3
    finally:
        srv.terminate()
        srv.wait(10)


def write_scan_log(path, n=20):
    wf = box_room()
    with open(path, "w") as f:
        for pose, scan in traversal_scans(wf.build(), traversal_poses(n)):
            f.write(json.dumps({"pose": pose.to_dict(), "scan": scan.to_dict()}) + "\n")


def test_export_map(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(f"world: {{file: {BOX_ROOM_WORLD}}}\n")
    scans = tmp_path / "scans.jsonl"
    write_scan_log(scans)
    out = tmp_path / "map.pgm"
    assert main(["export-map", "--config", str(cfg), "--scans", str(scans), "--out", str(out)]) == 0
    assert out.read_bytes().startswith(b"P5\n100 80\n255\n")
    g = load_map(out)
    assert g.resolution == 0.05 and (g.origin.x, g.origin.y) == (-0.5, -0.5)
    # the east wall shows up
    assert g.occupied()[:, g.world_to_cell(4.02, 1.5)[1]].sum() > 20
    assert len(read_scans(scans.read_text())) == 20


def test_export_map_bad_log(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(f"world: {{file: {BOX_ROOM_WORLD}}}\n")
    scans = tmp_path / "scans.jsonl"
    scans.write_text('{"pose": {"x": 0}}\n')
    assert main(["export-map", "--config", str(cfg), "--scans", str(scans), "--out", str(tmp_path / "m.pgm")]) == 2


def test_plan_arm(tmp_path):
    req = tmp_path / "req.yaml"
    req.write_text("start: [-1.0, 0.9, 0.9, 0.0, 0.9, 0.0]\ngoal: {joints: [1.0, 0.9, 0.9, 0.0, 0.9, 0.0]}\n"
                   "base: {x: 2.5, y: 0.8, theta: 0.0}\n")
    out = tmp_path / "traj.jsonl"
    assert main(["plan-arm", "--config", str(KITCHEN_CONFIG), "--request", str(req), "--out", str(out),
                 "--seed", "3"]) == 0
    rows = [json.loads(l) for l in out.read_text().splitlines()]
    assert rows[0]["t"] == 0.0 and rows[0]["positions"] == [-1.0, 0.9, 0.9, 0.0, 0.9, 0.0]
    assert rows[-1]["positions"] == [1.0, 0.9, 0.9, 0.0, 0.9, 0.0]


def test_plan_arm_goal_in_collision(tmp_path):
    # reaching straight down into the counter from beside it
    req = tmp_path / "req.yaml"
    req.write_text("goal: {joints: [0.0, 1.6, 0.5, 0.0, 0.0, 0.0]}\nbase: {x: 1.0, y: 2.0, theta: 3.14159}\n")
    assert main(["plan-arm", "--config", str(KITCHEN_CONFIG), "--request", str(req), "--out", "-"]) == 8
    req.write_text("goal: {}\n")
    assert main(["plan-arm", "--config", str(KITCHEN_CONFIG), "--request", str(req), "--out", "-"]) == 2


def test_render_path(tmp_path):
    from mobman.geometry import Pose2D
    from mobman.navigation.grid import OccupancyGrid, save_map

    occ = np.zeros((10, 12), dtype=bool)
    occ[4, 3:9] = True
    save_map(OccupancyGrid.from_occupancy(occ, 0.1), tmp_path / "m.pgm")
    (tmp_path / "p.jsonl").write_text(Path2D.through([Pose2D(0.05, 0.05), Pose2D(1.15, 0.95)]).to_jsonl())
    out = tmp_path / "p.svg"
    assert main(["render-path", "--map", str(tmp_path / "m.pgm"), "--path", str(tmp_path / "p.jsonl"),
                 "--out", str(out)]) == 0
    svg = out.read_text()
    assert svg.startswith("<svg") and svg.count('fill="#000000"') == 6 and "<polyline" in svg


def test_console_script_help():
    r = subprocess.run([sys.executable, "-m", "mobman.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in ("run-scenario", "serve-hal", "export-map", "plan-arm", "plan-task", "render-path"):
        assert cmd in r.stdout
