"""Log-odds occupancy grids: mapping from lidar with known poses, inflation, I/O."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator

import numpy as np
import yaml
from scipy import ndimage

from mobman.geometry import Pose2D

OCCUPIED, FREE, UNKNOWN = 1, 0, -1
PGM_OCCUPIED, PGM_FREE, PGM_UNKNOWN = 0, 254, 205


@dataclass(frozen=True)
class MapParams:
    l_occ: float = 0.85
    l_free: float = -0.4
    l_min: float = -4.0
    l_max: float = 4.0
    p_occupied: float = 0.65
    p_free: float = 0.25
    # the hit cell is looked up this far past the measured range
    hit_epsilon: float = 1e-4


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    """Row-major grid; cell (row, col) covers [ox + col*res, ox + (col+1)*res) in x.

    ``origin`` is the world pose of the (0, 0) cell corner; its heading must
    be 0 (grids are axis-aligned).
    """

    resolution: float
    origin: Pose2D
    width: int
    height: int
    cells: np.ndarray = field(repr=False)
    params: MapParams = MapParams()

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError("resolution must be > 0")
        if self.origin.theta != 0.0:
            raise ValueError("rotated grid origins are not supported")
        cells = np.asarray(self.cells, dtype=float)
        if cells.shape != (self.height, self.width):
            raise ValueError(f"cells shape {cells.shape} != ({self.height}, {self.width})")
        cells = np.clip(cells, self.params.l_min, self.params.l_max)
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def empty(cls, width: int, height: int, resolution: float, origin: Pose2D = Pose2D(),
              params: MapParams = MapParams()) -> "OccupancyGrid":
        return cls(resolution, origin, width, height, np.zeros((height, width)), params)

    @classmethod
    def from_occupancy(cls, occupied, resolution: float = 1.0, origin: Pose2D = Pose2D(),
                       params: MapParams = MapParams()) -> "OccupancyGrid":
        """Fully known grid from a boolean mask (True = occupied)."""
        occ = np.asarray(occupied, dtype=bool)
        cells = np.where(occ, params.l_max, params.l_min)
        return cls(resolution, origin, occ.shape[1], occ.shape[0], cells, params)

    def __eq__(self, other):
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return (self.resolution == other.resolution and self.origin == other.origin
                and self.params == other.params and np.array_equal(self.cells, other.cells))

    def with_cells(self, cells) -> "OccupancyGrid":
        return replace(self, cells=np.asarray(cells, dtype=float))

    # --- coordinates --------------------------------------------------------
    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        col = math.floor((x - self.origin.x) / self.resolution)
        row = math.floor((y - self.origin.y) / self.resolution)
        return row, col

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        return (self.origin.x + (col + 0.5) * self.resolution,
                self.origin.y + (row + 0.5) * self.resolution)

    def in_bounds(self, row: int, col: int) -> bool:
        return 0 <= row < self.height and 0 <= col < self.width

    # --- classification -----------------------------------------------------------
    @property
    def probabilities(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.cells))

    def classify(self) -> np.ndarray:
        p = self.probabilities
        out = np.full(self.cells.shape, UNKNOWN, dtype=np.int8)
        out[p > self.params.p_occupied] = OCCUPIED
        out[p < self.params.p_free] = FREE
        return out

    def occupied(self) -> np.ndarray:
        return self.classify() == OCCUPIED

    def blocked(self, allow_unknown: bool = False) -> np.ndarray:
        """Cells a planner may not enter."""
        c = self.classify()
        return (c == OCCUPIED) if allow_unknown else (c != FREE)


# --- ray traversal ---------------------------------------------------------------

def traverse(grid: OccupancyGrid, x0: float, y0: float, x1: float, y1: float,
             supercover: bool = False) -> Iterator[tuple[int, int]]:
    """Cells crossed by the segment (x0,y0)-(x1,y1), in order (Amanatides-Woo).

    With ``supercover`` a segment passing exactly through a cell corner also
    yields both side-neighbours of that corner. Cells may be out of bounds.
    """
    res = grid.resolution
    gx0, gy0 = (x0 - grid.origin.x) / res, (y0 - grid.origin.y) / res
    gx1, gy1 = (x1 - grid.origin.x) / res, (y1 - grid.origin.y) / res
    col, row = math.floor(gx0), math.floor(gy0)
    end_col, end_row = math.floor(gx1), math.floor(gy1)
    dx, dy = gx1 - gx0, gy1 - gy0
    step_c = 1 if dx > 0 else -1
    step_r = 1 if dy > 0 else -1
    t_dc = abs(1.0 / dx) if dx != 0 else math.inf
    t_dr = abs(1.0 / dy) if dy != 0 else math.inf
    t_c = ((col + 1 - gx0) if dx > 0 else (gx0 - col)) * t_dc if dx != 0 else math.inf
    t_r = ((row + 1 - gy0) if dy > 0 else (gy0 - row)) * t_dr if dy != 0 else math.inf
    yield row, col
    n = abs(end_col - col) + abs(end_row - row)
    while n > 0:
        if abs(t_c - t_r) < 1e-12:
            if supercover:
                yield row, col + step_c
                yield row + step_r, col
            col += step_c
            row += step_r
            t_c += t_dc
            t_r += t_dr
            n -= 2
        elif t_c < t_r:
            col += step_c
            t_c += t_dc
            n -= 1
        else:
            row += step_r
            t_r += t_dr
            n -= 1
        if n < 0:
            break
        yield row, col


def beam_cells(grid: OccupancyGrid, sensor: Pose2D, angle: float, rng: float, max_range: float):
    """(free cells, hit cell or None) for one beam, both restricted to the grid."""
    c, s = math.cos(angle), math.sin(angle)
    hit = rng <= max_range
    reach = rng if hit else max_range
    free = [cell for cell in traverse(grid, sensor.x, sensor.y, sensor.x + reach * c, sensor.y + reach * s)
            if grid.in_bounds(*cell)]
    hit_cell = None
    if hit:
        r = rng + grid.params.hit_epsilon
        cell = grid.world_to_cell(sensor.x + r * c, sensor.y + r * s)
        if grid.in_bounds(*cell):
            hit_cell = cell
    return free, hit_cell


def update_map(grid: OccupancyGrid, scan, sensor_pose: Pose2D) -> OccupancyGrid:
    """Inverse-sensor-model update from one scan.

    Within a scan each cell is updated at most once: l_occ if any beam ends
    in it, otherwise l_free if any beam passes through it.
    """
    free_set, hit_set = set(), set()
    for i, r in enumerate(scan.ranges):
        a = sensor_pose.theta + scan.angle_min + i * scan.angle_increment
        free, hit = beam_cells(grid, sensor_pose, a, float(r), scan.max_range)
        free_set.update(free)
        if hit is not None:
            hit_set.add(hit)
    free_set -= hit_set
    cells = np.array(grid.cells)
    if free_set:
        rr, cc = zip(*free_set)
        cells[rr, cc] += grid.params.l_free
    if hit_set:
        rr, cc = zip(*hit_set)
        cells[rr, cc] += grid.params.l_occ
    return grid.with_cells(cells)


def inflate(grid: OccupancyGrid, radius: float) -> OccupancyGrid:
    """Mark every cell whose centre is within ``radius`` of an occupied centre."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    occ = grid.occupied()
    if radius == 0 or not occ.any():
        return grid
    dist = ndimage.distance_transform_edt(~occ, sampling=grid.resolution)
    grow = (dist <= radius + 1e-9) & ~occ
    cells = np.array(grid.cells)
    cells[grow] = grid.params.l_max
    return grid.with_cells(cells)


def clearance_map(blocked: np.ndarray, resolution: float) -> np.ndarray:
    """Distance from each cell centre to the nearest blocked cell centre (inf if none)."""
    if not blocked.any():
        return np.full(blocked.shape, math.inf)
    return ndimage.distance_transform_edt(~blocked, sampling=resolution)


# --- export -----------------------------------------------------------------------

def to_pgm_bytes(grid: OccupancyGrid) -> bytes:
    """P5 image, top row = highest y."""
    c = grid.classify()
    img = np.full(c.shape, PGM_UNKNOWN, dtype=np.uint8)
    img[c == OCCUPIED] = PGM_OCCUPIED
    img[c == FREE] = PGM_FREE
    header = f"P5\n{grid.width} {grid.height}\n255\n".encode("ascii")
    return header + np.flipud(img).tobytes()


def map_metadata(grid: OccupancyGrid, image: str) -> dict:
    return {
        "image": image,
        "resolution": grid.resolution,
        "origin": [grid.origin.x, grid.origin.y, 0.0],
        "occupied_thresh": grid.params.p_occupied,
        "free_thresh": grid.params.p_free,
        "negate": 0,
    }


def save_map(grid: OccupancyGrid, path) -> tuple[Path, Path]:
    """Write ``path`` (PGM) and its YAML sidecar; returns both paths."""
    path = Path(path)
    path.write_bytes(to_pgm_bytes(grid))
    side = path.with_suffix(".yaml")
    side.write_text(yaml.safe_dump(map_metadata(grid, path.name), sort_keys=True))
    return path, side


def read_pgm(data: bytes) -> np.ndarray:
    """Decode a binary PGM into rows (first row = top of image)."""
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval > 255:
        raise ValueError("16-bit PGM not supported")
    pos += 1
    return np.frombuffer(data[pos:pos + w * h], dtype=np.uint8).reshape(h, w)


def load_map(path, params: MapParams = MapParams()) -> OccupancyGrid:
    """Inverse of :func:`save_map` up to classification (log-odds saturate)."""
    path = Path(path)
    meta = yaml.safe_load(path.with_suffix(".yaml").read_text())
    img = np.flipud(read_pgm(path.read_bytes()))
    cells = np.zeros(img.shape)
    cells[img == PGM_OCCUPIED] = params.l_max
    cells[img == PGM_FREE] = params.l_min
    ox, oy = meta["origin"][:2]
    return OccupancyGrid(float(meta["resolution"]), Pose2D(ox, oy), img.shape[1], img.shape[0], cells, params)
