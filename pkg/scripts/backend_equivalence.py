"""Run the fetch scenario on the sim backend and on the remote backend (emulator in lockstep) and compare."""
import argparse
import math
import sys

import numpy as np

from mobman import config as C
from mobman import runner
from mobman.hal.remote import RemoteHandle
from mobman.hal.server import HalServer
from mobman.scenarios import KITCHEN_CONFIG


def outcomes(report):
    return [(s.action, s.outcome.status, s.outcome.reason) for s in report.steps]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", nargs="+", default=[str(KITCHEN_CONFIG)])
    ap.add_argument("--seeds", type=int, nargs="+", default=[7])
    a = ap.parse_args(argv)
    sc = runner.load_scenario(C.load_config(a.config))
    worst = 0
    for seed in a.seeds:
        sim = runner.sim_handle(sc, seed)
        _, rep_a = runner.run(sim, sc, seed)
        end_a = runner.final_state(sim)
        with HalServer(runner.make_service(sc, seed=seed, lockstep=True), port=0) as srv:
            with RemoteHandle(*srv.address, robot_id=sc.robot_id) as remote:
                _, rep_b = runner.run(remote, sc, seed)
                end_b = runner.final_state(remote)
        pa, pb = end_a["pose"], end_b["pose"]
        dpos = math.hypot(pa.x - pb.x, pa.y - pb.y)
        dth = abs(math.remainder(pa.theta - pb.theta, 2 * math.pi))
        dq = float(np.abs(np.subtract(end_a["joints"], end_b["joints"])).max())
        same = outcomes(rep_a) == outcomes(rep_b)
        ok = same and dpos < 0.01 and dth < 0.01 and dq < 1e-3
        worst |= not ok
        print(f"seed {seed}: sim {rep_a.status} / remote {rep_b.status}, outcomes identical {same}, "
              f"pose diff {dpos:.2e} m {dth:.2e} rad, joint diff {dq:.2e} rad -> {'ok' if ok else 'MISMATCH'}")
    return int(worst)


if __name__ == "__main__":
    sys.exit(main())
