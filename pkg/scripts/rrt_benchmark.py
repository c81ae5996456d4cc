"""RRT-Connect over many seeds in the single-obstacle arm scene: success rate, path length, shortcut gain."""
import argparse
import sys
import time

import numpy as np

from mobman.assets.library import reference_robot
from mobman.errors import ManipulationError
from mobman.manipulation.rrt import MotionPlanRequest, RrtParams, joint_path_length, make_checker, plan_arm, shortcut
from mobman.scenarios import single_obstacle_scene


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--passes", type=int, default=50)
    a = ap.parse_args(argv)
    sc = single_obstacle_scene(reference_robot())
    raw_len, short_len, fails = [], [], 0
    t0 = time.perf_counter()
    for seed in range(a.seeds):
        req = MotionPlanRequest(sc.model, sc.base, sc.start, sc.goal, sc.obstacles, fixed=sc.fixed,
                                params=RrtParams(rng_seed=seed, shortcut_passes=0))
        try:
            raw = plan_arm(req)
        except ManipulationError:
            fails += 1
            continue
        short = shortcut(raw, make_checker(req), a.passes, rng_seed=seed)
        raw_len.append(joint_path_length(raw.points))
        short_len.append(joint_path_length(short.points))
    wall = time.perf_counter() - t0
    raw_len, short_len = np.array(raw_len), np.array(short_len)
    print(f"success {len(raw_len)}/{a.seeds}")
    if len(raw_len):
        print(f"raw length      mean {raw_len.mean():.3f} rad, median {np.median(raw_len):.3f}")
        print(f"shortcut length mean {short_len.mean():.3f} rad, median {np.median(short_len):.3f}")
        print(f"mean reduction {100 * (1 - short_len / raw_len).mean():.1f} %")
    print(f"wall time {wall:.1f} s", file=sys.stderr)
    return 0 if fails == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
