"""Hardware-emulator server: newline-delimited JSON over TCP."""
from __future__ import annotations

import json
import logging
import os
import socket
import socketserver
import threading
from typing import Optional

from mobman.hal.api import HalError
from mobman.hal.codec import encode_line
from mobman.hal.service import HalService

log = logging.getLogger(__name__)

DEFAULT_PORT = 7447
PORT_ENV = "BESTMAN_HAL_PORT"
MAX_LINE = 1 << 20


def default_port() -> int:
    v = os.environ.get(PORT_ENV)
    return int(v) if v else DEFAULT_PORT


def _valid_id(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool) and 0 <= v < 2 ** 64


def process_line(service: HalService, session, line: bytes) -> dict:
    """Decode one request line and produce its response object."""
    try:
        req = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as exc:
        return {"id": None, "ok": False, "error": HalError("ProtocolError", f"invalid JSON: {exc}").to_dict()}
    rid = req.get("id") if isinstance(req, dict) else None
    if not isinstance(req, dict) or not _valid_id(rid) or not isinstance(req.get("op"), str):
        return {"id": rid if _valid_id(rid) else None, "ok": False,
                "error": HalError("ProtocolError", "request needs integer id, string op, object args").to_dict()}
    try:
        result = service.handle(session, req["op"], req.get("args", {}))
        return {"id": rid, "ok": True, "result": result}
    except HalError as exc:
        return {"id": rid, "ok": False, "error": exc.to_dict()}
    except Exception as exc:  # never let one request kill the connection
        log.exception("op %s failed", req.get("op"))
        return {"id": rid, "ok": False, "error": HalError("HardwareFault", repr(exc)).to_dict()}


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        service: HalService = self.server.service
        session = service.open_session()
        with self.server.conn_lock:
            self.server.connections.add(self.connection)
        log.info("client %s connected (session %d)", self.client_address, session.id)
        try:
            while True:
                line = self.rfile.readline(MAX_LINE)
                if not line:
                    break
                if not line.strip():
                    continue
                resp = process_line(service, session, line)
                self.wfile.write(encode_line(resp))
                self.wfile.flush()
        except (ConnectionError, OSError):
            pass
        finally:
            with self.server.conn_lock:
                self.server.connections.discard(self.connection)
            service.close_session(session)
            log.info("session %d closed", session.id)


class _Server(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class HalServer:
    """Hosts a :class:`HalService` on a TCP port."""

    def __init__(self, service: HalService, host: str = "127.0.0.1", port: Optional[int] = None):
        self.service = service
        self._srv = _Server((host, default_port() if port is None else port), _Handler)
        self._srv.service = service
        self._srv.connections = set()
        self._srv.conn_lock = threading.Lock()
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> tuple[str, int]:
        return self._srv.server_address[:2]

    def start(self) -> "HalServer":
        self.service.start_loop()
        self._thread = threading.Thread(target=self._srv.serve_forever, name="hal-server", daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self.service.start_loop()
        self._srv.serve_forever()

    def shutdown(self) -> None:
        self._srv.shutdown()
        self._srv.server_close()
        # drop live clients too, so they see Disconnected rather than a zombie robot
        with self._srv.conn_lock:
            conns = list(self._srv.connections)
        for c in conns:
            try:
                c.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
        self.service.stop_loop()
        if self._thread is not None:
            self._thread.join(timeout=2.0)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.shutdown()


def serve_hal(world, cfg, port: Optional[int] = None, lockstep: bool = True, host: str = "127.0.0.1",
              **service_kw) -> HalServer:
    """Build a service for ``world`` and start serving it in the background."""
    return HalServer(HalService(world, cfg, lockstep=lockstep, **service_kw), host, port).start()
