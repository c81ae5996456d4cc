"""In-process backend: a handle bound directly to a :class:`HalService`."""
from __future__ import annotations

import json
from typing import Any, Optional

from mobman.hal.api import PROTOCOL_VERSION, HalError, RobotHandle
from mobman.hal.service import HalService
from mobman.sim.world import SimConfig, WorldState


class SimHandle(RobotHandle):
    """Calls are JSON round-tripped so results match the wire exactly."""

    def __init__(self, service: HalService, robot_id: Optional[str] = None):
        super().__init__()
        self.service = service
        self.session = service.open_session(robot_id)
        self.identity = self.session.robot_id
        self._closed = False
        self.call("sys.hello", {"version": PROTOCOL_VERSION})

    @classmethod
    def from_world(cls, world: WorldState, cfg: SimConfig = SimConfig(), robot_id: Optional[str] = None,
                   **service_kw) -> "SimHandle":
        return cls(HalService(world, cfg, lockstep=True, **service_kw), robot_id)

    def call(self, op: str, args: dict) -> Any:
        if self._closed:
            raise HalError("Disconnected", "handle closed")
        args = json.loads(json.dumps(args))
        result = self.service.handle(self.session, op, args)
        return json.loads(json.dumps(result, allow_nan=False))

    def close(self) -> None:
        if not self._closed:
            self.service.close_session(self.session)
            self._closed = True
