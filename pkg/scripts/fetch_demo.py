"""Run the kitchen fetch scenario on the in-process simulator and print each step."""
import argparse
import sys
import time

from mobman import config as C
from mobman import runner
from mobman.scenarios import KITCHEN_CONFIG


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", nargs="+", default=[str(KITCHEN_CONFIG)])
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--log-dir", help="write plan.jsonl and report.jsonl here")
    a = ap.parse_args(argv)

    sc = runner.load_scenario(C.load_config(a.config))
    handle = runner.sim_handle(sc, a.seed)
    t0 = time.perf_counter()
    plan, report = runner.run(handle, sc, a.seed)
    wall = time.perf_counter() - t0
    for s in report.steps:
        print(f"{s.index}  {s.action:<24} {s.skill:<10} {s.outcome.status:<8} {s.outcome.reason or ''}")
    end = runner.final_state(handle)
    print(f"status {report.status}, sim time {report.sim_time:.2f} s")
    print(f"base {end['pose']}")
    for oid, p in sorted(end["objects"].items()):
        print(f"object {oid} at ({p[0]:.3f}, {p[1]:.3f}, {p[2]:.3f})")
    print(f"wall time {wall:.2f} s", file=sys.stderr)
    if a.log_dir:
        for p in runner.write_logs(a.log_dir, plan, report):
            print(f"wrote {p}")
    return 0 if report.status == "Success" else 1


if __name__ == "__main__":
    sys.exit(main())
