"""Remote backend: a handle speaking the wire protocol to a HAL server."""
from __future__ import annotations

import itertools
import json
import socket
from typing import Any, Optional

from mobman.hal.api import PROTOCOL_VERSION, HalError, RobotHandle
from mobman.hal.codec import encode_line
from mobman.hal.server import default_port


class RemoteHandle(RobotHandle):
    def __init__(self, host: str = "127.0.0.1", port: Optional[int] = None, timeout: float = 120.0,
                 robot_id: Optional[str] = None, role: Optional[str] = None):
        super().__init__()
        port = default_port() if port is None else port
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except (ConnectionRefusedError, OSError) as exc:
            raise HalError("Disconnected", f"cannot reach HAL server at {host}:{port}: {exc}") from exc
        self._sock.settimeout(timeout)
        self._rfile = self._sock.makefile("rb")
        self._ids = itertools.count(1)
        args = {"version": PROTOCOL_VERSION}
        if robot_id is not None:
            args["robot"] = robot_id
        if role is not None:
            args["role"] = role
        hello = self.call("sys.hello", args)
        self.identity = hello["robot"]
        self.lockstep = hello["lockstep"]

    def call(self, op: str, args: dict) -> Any:
        if self._sock is None:
            raise HalError("Disconnected", "handle closed")
        rid = next(self._ids)
        try:
            self._sock.sendall(encode_line({"id": rid, "op": op, "args": args}))
            line = self._rfile.readline()
        except socket.timeout as exc:
            raise HalError("Timeout", f"no response to {op} within {self._sock.gettimeout()} s") from exc
        except OSError as exc:
            raise HalError("Disconnected", str(exc)) from exc
        if not line:
            raise HalError("Disconnected", "server closed the connection")
        try:
            resp = json.loads(line)
        except ValueError as exc:
            raise HalError("ProtocolError", f"undecodable response: {exc}") from exc
        if resp.get("id") != rid:
            raise HalError("ProtocolError", f"response id {resp.get('id')!r} does not echo request id {rid}")
        if resp.get("ok"):
            return resp.get("result")
        raise HalError.from_dict(resp.get("error"))

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._rfile.close()
                # half-close and wait for the server to hang up, so the session
                # (and any control it held) is released when close() returns
                try:
                    self._sock.shutdown(socket.SHUT_WR)
                    self._sock.settimeout(min(self._sock.gettimeout() or 5.0, 5.0))
                    while self._sock.recv(65536):
                        pass
                except OSError:
                    pass
                self._sock.close()
            finally:
                self._sock = None


def connect_remote(host: str = "127.0.0.1", port: Optional[int] = None, **kw) -> RemoteHandle:
    return RemoteHandle(host, port, **kw)
