"""The emulated robot: owns a world, applies API ops, advances time.

Both backends run ops through a :class:`HalService`; the simulation backend
does so in-process, the remote backend over a socket to a server that hosts
one. Sessions model connections: at most one controlling session per robot,
any number of observers.
"""
from __future__ import annotations

import itertools
import math
import threading
import time as _time
from dataclasses import dataclass, replace
from typing import Any, Optional

import numpy as np

from mobman.assets.library import gripper_max_width
from mobman.control.pid import MOVE_FORWARD_GAINS, PidGains, PidState, pid_step
from mobman.errors import MobmanError, NothingAttached, TooFarToGrasp, UnknownRobot
from mobman.geometry import Twist2D, normalize_angle
from mobman.hal.api import CAPABILITIES, OPS, PROTOCOL_VERSION, HalError, validate_args
from mobman.hal.codec import object_to_dict
from mobman.sim import world as simw


def capabilities_of(model) -> frozenset:
    caps = set()
    if "base" in model.groups:
        caps.update(("base", "lidar", "odom"))
    if model.group("arm"):
        caps.add("arm")
    if model.group("gripper"):
        caps.add("gripper")
    return frozenset(c for c in CAPABILITIES if c in caps)


@dataclass
class Session:
    id: int
    robot_id: str
    greeted: bool = False
    observer: bool = False


@dataclass(frozen=True)
class HalSettings:
    pid: PidGains = MOVE_FORWARD_GAINS
    heading_gain: float = 2.0
    forward_tolerance: float = 0.001
    move_timeout: float = 30.0
    gripper_timeout: float = 5.0


class HalService:
    def __init__(self, world: simw.WorldState, cfg: simw.SimConfig = simw.SimConfig(), lockstep: bool = True,
                 settings: HalSettings = HalSettings()):
        if not world.robots:
            raise ValueError("world has no robots")
        self.world = world
        self.cfg = cfg
        self.lockstep = lockstep
        self.settings = settings
        self.rng = np.random.default_rng(cfg.rng_seed)
        self._commands: dict[str, simw.RobotCommand] = {rid: simw.RobotCommand() for rid in world.robots}
        self._controllers: dict[str, int] = {}
        self._ids = itertools.count(1)
        self._lock = threading.RLock()
        self._ticked = threading.Condition(self._lock)
        self._loop: Optional[threading.Thread] = None
        self._running = False

    # --- sessions -------------------------------------------------------------
    def open_session(self, robot_id: Optional[str] = None) -> Session:
        rid = robot_id or sorted(self.world.robots)[0]
        if rid not in self.world.robots:
            raise HalError("Refused", f"unknown robot {rid!r}")
        return Session(next(self._ids), rid)

    def close_session(self, session: Session) -> None:
        with self._lock:
            if self._controllers.get(session.robot_id) == session.id:
                del self._controllers[session.robot_id]
                # a vanished controller must not leave the robot driving
                self._commands[session.robot_id] = replace(
                    self._commands[session.robot_id], twist=Twist2D())

    # --- time -------------------------------------------------------------------
    def _advance(self, dt: float) -> None:
        self.world = simw.step(self.world, self._commands, dt, self.cfg)
        self._ticked.notify_all()

    def _wait_tick(self) -> None:
        """Let one tick elapse: step ourselves in lockstep, else wait for the loop."""
        if self.lockstep:
            self._advance(self.cfg.dt)
            # give observer connections a chance at the lock between ticks
            self._ticked.wait(timeout=0)
        else:
            now = self.world.time
            while self.world.time == now and self._running:
                self._ticked.wait(timeout=1.0)

    def start_loop(self, rate_hz: float = 50.0) -> None:
        """Free-running clock for live mode."""
        if self.lockstep or self._loop is not None:
            return
        self._running = True

        def run():
            period = 1.0 / rate_hz
            nxt = _time.monotonic()
            while self._running:
                with self._lock:
                    self._advance(self.cfg.dt)
                nxt += period
                _time.sleep(max(0.0, nxt - _time.monotonic()))

        self._loop = threading.Thread(target=run, name="hal-clock", daemon=True)
        self._loop.start()

    def stop_loop(self) -> None:
        self._running = False
        if self._loop is not None:
            self._loop.join(timeout=2.0)
            self._loop = None
        with self._lock:
            self._ticked.notify_all()

    # --- dispatch -----------------------------------------------------------------
    def handle(self, session: Session, op: str, args: Any) -> Any:
        args = validate_args(op, args)
        spec = OPS[op]
        with self._lock:
            state = self.world.robot(session.robot_id)
            if spec.capability is not None and spec.capability not in capabilities_of(state.model):
                raise HalError("Unsupported", f"robot {session.robot_id!r} has no {spec.capability} capability")
            if spec.kind == "command":
                if session.observer:
                    raise HalError("Refused", "observer sessions cannot command")
                owner = self._controllers.get(session.robot_id)
                if owner is None:
                    self._controllers[session.robot_id] = session.id
                elif owner != session.id:
                    raise HalError("Refused", f"robot {session.robot_id!r} already has a controller")
            try:
                return getattr(self, "_op_" + op.replace(".", "_"))(session, **args)
            except HalError:
                raise
            except (UnknownRobot, TooFarToGrasp, NothingAttached) as exc:
                raise HalError("Refused", str(exc)) from exc
            except MobmanError as exc:
                raise HalError("HardwareFault", f"{type(exc).__name__}: {exc}") from exc

    # --- ops ------------------------------------------------------------------------
    def _op_sys_hello(self, s: Session, version: str, robot: Optional[str] = None, role: Optional[str] = None):
        if version != PROTOCOL_VERSION:
            raise HalError("Refused", f"protocol version {version!r} not supported (want {PROTOCOL_VERSION!r})")
        if robot is not None and robot != s.robot_id:
            if robot not in self.world.robots:
                raise HalError("Refused", f"unknown robot {robot!r}")
            if self._controllers.get(s.robot_id) == s.id:
                del self._controllers[s.robot_id]
            s.robot_id = robot
        if role is not None:
            if role not in ("controller", "observer"):
                raise HalError("ProtocolError", f"bad role {role!r}")
            s.observer = role == "observer"
        s.greeted = True
        return {"version": PROTOCOL_VERSION, "robot": s.robot_id, "lockstep": self.lockstep,
                "capabilities": sorted(capabilities_of(self.world.robot(s.robot_id).model))}

    def _op_sys_capabilities(self, s: Session):
        return {"capabilities": sorted(capabilities_of(self.world.robot(s.robot_id).model))}

    def _op_sys_time(self, s: Session):
        return {"time": self.world.time}

    def _op_sys_tick(self, s: Session, dt: Optional[float] = None):
        dt = self.cfg.dt if dt is None else dt
        if not dt > 0:
            raise HalError("Refused", "dt must be > 0")
        if self.lockstep:
            self._advance(dt)
        else:
            target = self.world.time + dt - 1e-9
            while self.world.time < target and self._running:
                self._ticked.wait(timeout=1.0)
        return {"time": self.world.time}

    def _latch(self, rid: str, **kw) -> None:
        self._commands[rid] = replace(self._commands[rid], **kw)

    def _op_base_set_velocity(self, s: Session, v: float, w: float):
        self._latch(s.robot_id, twist=Twist2D(v, w))
        return {}

    def _odom(self, rid: str) -> dict:
        pose, stamp = simw.read_odometry(self.world, rid, self.rng, self.cfg.odom_noise_std)
        return {"x": pose.x, "y": pose.y, "theta": pose.theta, "stamp": stamp}

    def _op_base_get_odometry(self, s: Session):
        return self._odom(s.robot_id)

    def _op_sensor_odometry(self, s: Session):
        return self._odom(s.robot_id)

    def _op_base_move_forward(self, s: Session, distance: float, timeout: Optional[float] = None):
        if abs(distance) > 100.0:
            raise HalError("Refused", "|distance| must be <= 100 m")
        cfg = self.settings
        timeout = cfg.move_timeout if timeout is None else timeout
        rid = s.robot_id
        start = self._odom(rid)
        x0, y0, th0 = start["x"], start["y"], start["theta"]
        hx, hy = math.cos(th0), math.sin(th0)
        t0 = self.world.time
        pid = PidState()
        traveled = 0.0
        try:
            while True:
                o = self._odom(rid)
                traveled = (o["x"] - x0) * hx + (o["y"] - y0) * hy
                err = distance - traveled
                if abs(err) < cfg.forward_tolerance:
                    break
                if self.world.time - t0 >= timeout:
                    raise HalError("Timeout", f"move_forward stopped {err:.3f} m short after {timeout} s")
                v, pid = pid_step(cfg.pid, pid, err, self.cfg.dt)
                w = cfg.heading_gain * normalize_angle(th0 - o["theta"])
                self._latch(rid, twist=Twist2D(v, w))
                self._wait_tick()
        finally:
            self._latch(rid, twist=Twist2D())
        return {"traveled": traveled, "time": self.world.time}

    def _arm_names(self, rid: str) -> tuple[str, ...]:
        state = self.world.robot(rid)
        return tuple(n for n in state.joints.names if n in state.model.group("arm"))

    def _op_arm_set_joint_targets(self, s: Session, positions: list):
        state = self.world.robot(s.robot_id)
        names = self._arm_names(s.robot_id)
        if len(positions) != len(names):
            raise HalError("Refused", f"expected {len(names)} joint targets, got {len(positions)}")
        for n, p in zip(names, positions):
            j = state.model.joint(n)
            if j.limits is not None and j.kind != "continuous" and not (j.limits[0] - 1e-9 <= p <= j.limits[1] + 1e-9):
                raise HalError("Refused", f"target {p:.4f} outside limits of {n!r}")
        self._latch(s.robot_id, joint_targets=dict(zip(names, positions)))
        return {}

    def _op_arm_get_joint_state(self, s: Session):
        state = self.world.robot(s.robot_id)
        names = self._arm_names(s.robot_id)
        js = state.joints.as_dict()
        vel = dict(zip(state.joints.names, state.joints.velocities))
        return {"names": list(names), "positions": [js[n] for n in names], "velocities": [vel[n] for n in names],
                "stamp": self.world.time}

    def _op_gripper_command(self, s: Session, action):
        rid = s.robot_id
        state = self.world.robot(rid)
        wmax = gripper_max_width(state.model)
        if action == "open":
            if state.grasp is not None:
                self.world = simw.detach(self.world, rid)
            target = wmax
        elif action == "close":
            if state.grasp is None:
                cand = simw.grasp_candidate(self.world, rid, self.cfg)
                if cand is not None:
                    self.world = simw.attach(self.world, rid, cand, self.cfg)
            target = 0.0
        else:
            target = min(float(action), wmax)
        self._latch(rid, gripper_width=target)
        held = self.world.robot(rid).grasp
        goal = target if held is None else max(target, simw.object_width(self.world.object(held.object_id)))
        t0 = self.world.time
        while abs(self.world.robot(rid).gripper_width - goal) > 1e-9:
            if self.world.time - t0 > self.settings.gripper_timeout:
                raise HalError("Timeout", "gripper did not reach its target width")
            self._wait_tick()
        state = self.world.robot(rid)
        return {"width": state.gripper_width, "attached": state.grasp.object_id if state.grasp else None}

    def _op_gripper_get_width(self, s: Session):
        state = self.world.robot(s.robot_id)
        return {"width": state.gripper_width, "attached": state.grasp.object_id if state.grasp else None}

    def _op_sensor_lidar(self, s: Session):
        state = self.world.robot(s.robot_id)
        return simw.raycast_lidar(self.world, state.base, self.cfg.lidar).to_dict()

    def _op_sensor_objects(self, s: Session):
        return {"objects": [object_to_dict(o) for o in self.world.objects], "stamp": self.world.time}

    def _op_sensor_status(self, s: Session):
        state = self.world.robot(s.robot_id)
        return {"collided": state.collided, "time": self.world.time,
                "attached": state.grasp.object_id if state.grasp else None}
