"""Shared test plumbing: small worlds and a handle that records every call."""
from __future__ import annotations

from mobman.geometry import Pose2D
from mobman.hal.api import RobotHandle
from mobman.hal.sim_backend import SimHandle
from mobman.sim.world import SimConfig, WorldState, spawn_robot


def make_world(model, objects=(), base=Pose2D(), joints=None) -> WorldState:
    return WorldState({"r": spawn_robot(model, base, joints)}, tuple(objects), 0.0)


def sim_handle(model, objects=(), base=Pose2D(), joints=None, cfg=SimConfig()) -> SimHandle:
    return SimHandle.from_world(make_world(model, objects, base, joints), cfg)


class RecordingHandle(RobotHandle):
    """Forwards to another handle and logs (op, args) for every call."""

    def __init__(self, inner: RobotHandle):
        super().__init__()
        self.inner = inner
        self.identity = inner.identity
        self.log: list[tuple[str, dict]] = []

    def call(self, op, args):
        self.log.append((op, dict(args)))
        return self.inner.call(op, args)

    def mark(self) -> int:
        return len(self.log)

    def commands_since(self, mark: int) -> list:
        from mobman.hal.api import OPS

        return [(op, a) for op, a in self.log[mark:] if OPS[op].kind == "command"]


# criterion number -> one-line verdict, printed in the terminal summary
ACCEPTANCE: dict[int, str] = {}


def record(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {n:2d}. {title}: {detail}"
    ACCEPTANCE[n] = line
    print(line)
    assert ok, line
