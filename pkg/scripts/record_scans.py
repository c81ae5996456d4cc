"""Record lidar scans along the box-room traversal as JSONL and report map fidelity.

The log is the input format of ``mobman export-map --scans``.
"""
import argparse
import json
import sys

from mobman.geometry import Pose2D
from mobman.navigation.grid import UNKNOWN, OCCUPIED, OccupancyGrid, update_map
from mobman.scenarios import box_room, rasterize, traversal_poses, traversal_scans


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="box_room_scans.jsonl")
    ap.add_argument("-n", "--scans", type=int, default=50)
    ap.add_argument("--resolution", type=float, default=0.05)
    a = ap.parse_args(argv)

    wf = box_room()
    x0, y0, x1, y1 = wf.bounds
    w, h = round((x1 - x0) / a.resolution), round((y1 - y0) / a.resolution)
    grid = OccupancyGrid.empty(w, h, a.resolution, Pose2D(x0, y0))
    with open(a.out, "w") as f:
        for pose, scan in traversal_scans(wf.build(), traversal_poses(a.scans)):
            f.write(json.dumps({"pose": pose.to_dict(), "scan": scan.to_dict()}) + "\n")
            grid = update_map(grid, scan, pose)
    truth = rasterize(wf.objects, w, h, a.resolution, Pose2D(x0, y0), 0.2)
    c = grid.classify()
    known = c != UNKNOWN
    frac = float(((c == OCCUPIED) == truth)[known].mean())
    print(f"wrote {a.scans} scans to {a.out}")
    print(f"{int(known.sum())} of {w * h} cells known, {frac:.4f} match ground truth")
    return 0


if __name__ == "__main__":
    sys.exit(main())
