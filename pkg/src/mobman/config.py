"""YAML configuration: deep merge, defaults, validation, and typed views."""
from __future__ import annotations

import copy
import logging
import math
import os
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Union

import yaml

from mobman.errors import ConfigError, MissingRequiredKey, ParseError, TypeMismatch

log = logging.getLogger("mobman.config")

REQUIRED = object()  # marker for keys without a default

# Every known key with its default. ``None`` means "optional, string when set".
DEFAULTS: dict = {
    "world": {
        "file": REQUIRED,
        "seed": 0,
        "dt": 0.02,
        "odom_noise_std": [0.0, 0.0],
        "grasp_reach": 0.05,
        "gripper_speed": 0.1,
        "lidar": {"n_beams": 180, "fov": 2 * math.pi, "max_range": 8.0, "height": 0.2},
    },
    "assets": {"manifest": None},
    "robot": {"id": "robot"},
    "navigation": {
        "resolution": 0.05,
        "inflation_radius": 0.35,
        "l_occ": 0.85,
        "l_free": -0.4,
        "l_clamp": 4.0,
        "p_occupied": 0.65,
        "p_free": 0.25,
        "allow_unknown": True,
        "rescan_every": 25,
        "max_replans": 5,
        "stall_ticks": 25,
        "guard_horizon": 0.3,
        "align_tol": math.pi / 8,
        "dwa": {
            "v_max": 0.5, "w_max": 1.5, "n_v": 6, "n_w": 21, "horizon": 1.5, "dt": 0.1,
            "w_progress": 1.0, "w_clearance": 0.2, "w_heading": 0.5, "robot_radius": 0.2,
        },
    },
    "manipulation": {
        "step_size": 0.1,
        "goal_bias": 0.1,
        "max_iters": 5000,
        "shortcut_passes": 50,
        "padding": 0.01,
        "standoff": 0.10,
        "place_clearance": 0.001,
    },
    "controller": {
        "move_forward": {"kp": 1.5, "ki": 0.0, "kd": 0.1, "out_clamp": 0.5},
        "heading_gain": 2.0,
        "forward_tolerance": 0.001,
        "move_timeout": 30.0,
        "tick": 0.02,
        "track": {"lookahead": 0.3, "v_max": 0.5, "k_v": 1.0, "w_max": 1.5, "goal_tol": 0.05, "timeout": 60.0},
        "trajectory": {"settle_time": 0.5, "settle_tol": 0.001, "diverge_tol": 0.5},
        "heading_tol": 0.05,
    },
    "task": {"domain": None, "problem": None, "mode": "optimal"},
    "hal": {"host": "127.0.0.1", "port": 7447, "lockstep": True, "timeout": 120.0},
}

# keys holding file paths, resolved against the directory of the file that set them
PATH_KEYS = (("world", "file"), ("assets", "manifest"), ("task", "domain"), ("task", "problem"))
PORT_ENV = "BESTMAN_HAL_PORT"


class ConfigTree(dict):
    """Nested mapping with dotted-path access; ``warnings`` lists unknown keys."""

    def __init__(self, *args, warnings: Iterable[str] = (), **kw):
        super().__init__(*args, **kw)
        self.warnings = list(warnings)

    def get_path(self, path: str, default: Any = None) -> Any:
        node: Any = self
        for part in path.split("."):
            if not isinstance(node, Mapping) or part not in node:
                return default
            node = node[part]
        return node

    def __getitem__(self, key):
        if isinstance(key, str) and "." in key:
            sentinel = object()
            v = self.get_path(key, sentinel)
            if v is sentinel:
                raise KeyError(key)
            return v
        return super().__getitem__(key)


def deep_merge(a: Mapping, b: Mapping, _prefix: str = "") -> dict:
    """``b`` over ``a``: mappings merge recursively, scalars and lists are replaced.

    A key that holds a mapping on one side and a non-mapping on the other is a
    TypeMismatch. Letting either side win would make the merge depend on how
    a chain of files is grouped.
    """
    out = {k: copy.deepcopy(v) for k, v in a.items()}
    for k, v in b.items():
        if k in out and isinstance(v, Mapping) != isinstance(out[k], Mapping):
            raise TypeMismatch(f"{_prefix}{k}", "mapping" if isinstance(out[k], Mapping) else "non-mapping", v)
        if isinstance(v, Mapping):
            out[k] = deep_merge(out[k], v, f"{_prefix}{k}.") if k in out else copy.deepcopy(dict(v))
        else:
            out[k] = copy.deepcopy(v)
    return out


def read_yaml(path: Union[str, Path]) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 0
        raise ParseError(str(path), line, getattr(exc, "problem", None) or str(exc)) from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ParseError(str(path), 1, "top level must be a mapping")
    return data


def _resolve_paths(data: dict, base: Path) -> dict:
    data = copy.deepcopy(data)
    for sec, key in PATH_KEYS:
        node = data.get(sec)
        if isinstance(node, dict) and isinstance(node.get(key), str):
            p = Path(node[key])
            if not p.is_absolute():
                node[key] = str((base / p).resolve())
    return data


def _fill(defaults: Mapping, tree: Mapping, prefix: str, warnings: list) -> dict:
    out = {}
    for k, d in defaults.items():
        path = f"{prefix}{k}"
        if k not in tree:
            if d is REQUIRED:
                raise MissingRequiredKey(path)
            out[k] = copy.deepcopy(d) if not isinstance(d, Mapping) else _fill(d, {}, path + ".", warnings)
            continue
        v = tree[k]
        if isinstance(d, Mapping):
            if not isinstance(v, Mapping):
                raise TypeMismatch(path, "mapping", v)
            out[k] = _fill(d, v, path + ".", warnings)
        else:
            out[k] = _check(path, d, v)
    for k in tree:
        if k not in defaults:
            warnings.append(f"{prefix}{k}")
            out[k] = copy.deepcopy(tree[k])
    return out


def _check(path: str, default, value):
    if default is REQUIRED or default is None:
        if value is not None and not isinstance(value, str):
            raise TypeMismatch(path, "string", value)
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise TypeMismatch(path, "bool", value)
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeMismatch(path, "int", value)
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeMismatch(path, "number", value)
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise TypeMismatch(path, "string", value)
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise TypeMismatch(path, "list", value)
        if default and all(isinstance(x, float) for x in default):
            if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value):
                raise TypeMismatch(path, "list of numbers", value)
            return [float(x) for x in value]
        return value
    return value


def validate(tree: Mapping) -> ConfigTree:
    """Fill defaults, check scalar kinds, collect unknown keys as warnings."""
    warnings: list = []
    filled = _fill(DEFAULTS, tree, "", warnings)
    for w in warnings:
        log.warning("unknown config key %r (ignored)", w)
    return ConfigTree(filled, warnings=warnings)


def load_config(paths: Union[str, Path, Iterable[Union[str, Path]]], overrides: Optional[Mapping] = None) -> ConfigTree:
    """Merge YAML files left to right, apply ``overrides``, then defaults.

    Relative paths for world.file, assets.manifest, task.domain and
    task.problem are taken relative to the file that sets them.
    """
    if isinstance(paths, (str, Path)):
        paths = [paths]
    merged: dict = {}
    for p in paths:
        p = Path(p)
        merged = deep_merge(merged, _resolve_paths(read_yaml(p), p.parent))
    if overrides:
        merged = deep_merge(merged, overrides)
    return validate(merged)


def default_tree(world_file: str = "world.yaml") -> ConfigTree:
    """The documented default table with ``world.file`` set."""
    return validate({"world": {"file": world_file}})


def hal_port(tree: Optional[Mapping] = None) -> int:
    env = os.environ.get(PORT_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{PORT_ENV}={env!r} is not a port number") from None
    if tree is not None:
        return int(ConfigTree(tree).get_path("hal.port", 7447))
    return 7447


# --- typed views -----------------------------------------------------------------

def sim_config(tree: ConfigTree, seed: Optional[int] = None):
    from mobman.sim.world import LidarConfig, SimConfig

    w = tree["world"]
    lid = w["lidar"]
    return SimConfig(
        dt=w["dt"], odom_noise_std=tuple(w["odom_noise_std"]),
        lidar=LidarConfig(lid["n_beams"], lid["fov"], lid["max_range"], lid["height"]),
        rng_seed=w["seed"] if seed is None else seed, grasp_reach=w["grasp_reach"], gripper_speed=w["gripper_speed"],
    )


def map_params(tree: ConfigTree):
    from mobman.navigation.grid import MapParams

    n = tree["navigation"]
    return MapParams(n["l_occ"], n["l_free"], -n["l_clamp"], n["l_clamp"], n["p_occupied"], n["p_free"])


def dwa_params(tree: ConfigTree):
    from mobman.navigation.dwa import DwaParams

    d = tree["navigation"]["dwa"]
    return DwaParams(v_max=d["v_max"], w_min=-d["w_max"], w_max=d["w_max"], n_v=d["n_v"], n_w=d["n_w"],
                     horizon=d["horizon"], dt=d["dt"], w_progress=d["w_progress"], w_clearance=d["w_clearance"],
                     w_heading=d["w_heading"], robot_radius=d["robot_radius"])


def rrt_params(tree: ConfigTree, seed: Optional[int] = None):
    from mobman.manipulation.rrt import RrtParams

    m = tree["manipulation"]
    return RrtParams(m["step_size"], m["goal_bias"], m["max_iters"], m["shortcut_passes"],
                     tree["world"]["seed"] if seed is None else seed, m["padding"])


def track_params(tree: ConfigTree):
    from mobman.control.trajectory import TrackParams

    c = tree["controller"]
    t = c["track"]
    return TrackParams(lookahead=t["lookahead"], v_max=t["v_max"], k_v=t["k_v"], w_max=t["w_max"],
                       goal_tol=t["goal_tol"], timeout=t["timeout"], tick=c["tick"])


def exec_config(tree: ConfigTree, seed: Optional[int] = None):
    """Skill-executor settings gathered from the navigation, manipulation and controller sections."""
    from mobman.executor import ExecConfig

    n, m, c = tree["navigation"], tree["manipulation"], tree["controller"]
    t = c["trajectory"]
    return ExecConfig(map_params=map_params(tree), resolution=n["resolution"], inflation_radius=n["inflation_radius"],
                      allow_unknown=n["allow_unknown"], rescan_every=n["rescan_every"], max_replans=n["max_replans"],
                      stall_ticks=n["stall_ticks"], guard_horizon=n["guard_horizon"], align_tol=n["align_tol"],
                      dwa=dwa_params(tree), track=track_params(tree), heading_tol=c["heading_tol"],
                      rrt=rrt_params(tree, seed), standoff=m["standoff"], place_clearance=m["place_clearance"],
                      settle_time=t["settle_time"], settle_tol=t["settle_tol"], diverge_tol=t["diverge_tol"])


def hal_settings(tree: ConfigTree):
    from mobman.control.pid import PidGains
    from mobman.hal.service import HalSettings

    c = tree["controller"]
    mf = c["move_forward"]
    return HalSettings(PidGains(mf["kp"], mf["ki"], mf["kd"], out_clamp=mf["out_clamp"]), c["heading_gain"],
                       c["forward_tolerance"], c["move_timeout"])
