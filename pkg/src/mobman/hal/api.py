"""The unified robot API: op registry, error codes, and the handle contract.

Every backend implements a single method, :meth:`RobotHandle.call`, that
executes one registry op. The typed facade (``handle.base.move_forward`` and
friends) lives here, once, so both backends expose the same surface.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Optional, Sequence, Union

from mobman.errors import MobmanError
from mobman.geometry import JointState, Pose2D, Twist2D

PROTOCOL_VERSION = "1"
ERROR_CODES = ("Unsupported", "Timeout", "Disconnected", "Refused", "ProtocolError", "HardwareFault")
CAPABILITIES = ("base", "arm", "gripper", "lidar", "odom")


class HalError(MobmanError):
    def __init__(self, code: str, message: str = ""):
        if code not in ERROR_CODES:
            raise ValueError(f"unknown HAL error code {code!r}")
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code
        self.message = message

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message}

    @classmethod
    def from_dict(cls, d) -> "HalError":
        code = d.get("code") if isinstance(d, dict) else None
        if code not in ERROR_CODES:
            return cls("ProtocolError", f"malformed error payload {d!r}")
        return cls(code, d.get("message", ""))


@dataclass(frozen=True)
class OpSpec:
    name: str
    kind: str  # "command" (needs control), "sensor" (observers allowed), "system"
    capability: Optional[str]
    args: tuple[tuple[str, str, bool], ...]  # (name, type, required)


def _op(name, kind, cap, *args):
    return name, OpSpec(name, kind, cap, tuple(args))


OPS: dict[str, OpSpec] = dict(
    [
        _op("sys.hello", "system", None, ("version", "string", True), ("robot", "string", False),
            ("role", "string", False)),
        _op("sys.capabilities", "system", None),
        _op("sys.time", "sensor", None),
        _op("sys.tick", "command", None, ("dt", "number", False)),
        _op("base.set_velocity", "command", "base", ("v", "number", True), ("w", "number", True)),
        _op("base.move_forward", "command", "base", ("distance", "number", True), ("timeout", "number", False)),
        _op("base.get_odometry", "sensor", "odom"),
        _op("arm.set_joint_targets", "command", "arm", ("positions", "number_list", True)),
        _op("arm.get_joint_state", "sensor", "arm"),
        _op("gripper.command", "command", "gripper", ("action", "action", True)),
        _op("gripper.get_width", "sensor", "gripper"),
        _op("sensor.lidar", "sensor", "lidar"),
        _op("sensor.odometry", "sensor", "odom"),
        _op("sensor.objects", "sensor", None),
        _op("sensor.status", "sensor", None),
    ]
)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def validate_args(op: str, args: Any) -> dict:
    """Check an op's arguments against the registry; raise ProtocolError."""
    spec = OPS.get(op)
    if spec is None:
        raise HalError("Unsupported", f"unknown op {op!r}")
    if not isinstance(args, dict):
        raise HalError("ProtocolError", f"{op}: args must be an object")
    known = {a[0] for a in spec.args}
    extra = set(args) - known
    if extra:
        raise HalError("ProtocolError", f"{op}: unexpected arguments {sorted(extra)}")
    for name, kind, required in spec.args:
        if name not in args:
            if required:
                raise HalError("ProtocolError", f"{op}: missing argument {name!r}")
            continue
        v = args[name]
        ok = (
            (kind == "number" and _is_number(v))
            or (kind == "string" and isinstance(v, str))
            or (kind == "number_list" and isinstance(v, list) and all(_is_number(x) for x in v))
            or (kind == "action" and (v in ("open", "close") or (_is_number(v) and v >= 0)))
        )
        if not ok:
            raise HalError("ProtocolError", f"{op}: bad value for {name!r}: {v!r}")
    return args


# --- typed facade -------------------------------------------------------------

@dataclass(frozen=True)
class Odometry:
    pose: Pose2D
    stamp: float


def _odom(d) -> Odometry:
    return Odometry(Pose2D(d["x"], d["y"], d["theta"]), d["stamp"])


class _Facet:
    def __init__(self, handle: "RobotHandle"):
        self._h = handle


class BaseFacet(_Facet):
    def set_velocity(self, t: Union[Twist2D, Sequence[float]]) -> None:
        t = t if isinstance(t, Twist2D) else Twist2D(*t)
        self._h.call("base.set_velocity", {"v": t.v, "w": t.w})

    def move_forward(self, distance: float, timeout: Optional[float] = None) -> dict:
        args = {"distance": float(distance)}
        if timeout is not None:
            args["timeout"] = float(timeout)
        return self._h.call("base.move_forward", args)

    def get_odometry(self) -> Odometry:
        return _odom(self._h.call("base.get_odometry", {}))


class ArmFacet(_Facet):
    def set_joint_targets(self, positions: Sequence[float]) -> None:
        self._h.call("arm.set_joint_targets", {"positions": [float(p) for p in positions]})

    def get_joint_state(self) -> JointState:
        d = self._h.call("arm.get_joint_state", {})
        return JointState(tuple(d["names"]), tuple(d["positions"]), tuple(d["velocities"]))


class GripperFacet(_Facet):
    def command(self, action: Union[str, float]) -> dict:
        return self._h.call("gripper.command", {"action": action if isinstance(action, str) else float(action)})

    def open(self) -> dict:
        return self.command("open")

    def close(self) -> dict:
        return self.command("close")

    def width(self) -> float:
        return self._h.call("gripper.get_width", {})["width"]


class SensorFacet(_Facet):
    def lidar(self):
        from mobman.sensors import LidarScan

        return LidarScan.from_dict(self._h.call("sensor.lidar", {}))

    def odometry(self) -> Odometry:
        return _odom(self._h.call("sensor.odometry", {}))

    def objects(self) -> list:
        from mobman.hal.codec import object_from_dict

        return [object_from_dict(o) for o in self._h.call("sensor.objects", {})["objects"]]

    def status(self) -> dict:
        return self._h.call("sensor.status", {})


class RobotHandle(ABC):
    """Backend-neutral robot contract.

    Planners and skills talk only to this class; concrete backends differ in
    :meth:`call` alone.
    """

    identity: str = ""

    def __init__(self):
        self.base = BaseFacet(self)
        self.arm = ArmFacet(self)
        self.gripper = GripperFacet(self)
        self.sensor = SensorFacet(self)
        self._caps: Optional[frozenset] = None

    @abstractmethod
    def call(self, op: str, args: dict) -> Any:
        """Execute one registry op and return its JSON-shaped result."""

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    @property
    def capabilities(self) -> frozenset:
        if self._caps is None:
            self._caps = frozenset(self.call("sys.capabilities", {})["capabilities"])
        return self._caps

    def tick(self, dt: Optional[float] = None) -> float:
        """Advance (lockstep) or wait out (live) one control period; returns sim time."""
        return self.call("sys.tick", {} if dt is None else {"dt": float(dt)})["time"]

    def time(self) -> float:
        return self.call("sys.time", {})["time"]
