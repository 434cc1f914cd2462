"""Coordinator that collects machine-wise selections and aggregates them.

Wire format is newline-delimited JSON over TCP, one object per line, each
with a ``type`` field:

``open``    ``{"type": "open", "k": 3, "d": 50, "rule": "adages"}``
            -> ``{"type": "open", "session": ..., "k": ..., "d": ..., "rule": ...,
            "timeout": ...}``
``report``  ``{"type": "report", "session": ..., "machine_id": 0, "d": 50,
            "selected": [1, 4]}`` -> a pending ``report`` ack, or the ``result``
            once the k-th report lands
``poll``    ``{"type": "poll", "session": ...}`` -> pending ``poll`` status or
            the ``result``
``error``   ``{"type": "error", "code": ..., "message": ...}``

A ``result`` carries ``status`` ``"complete"`` (with the aggregate) or
``"timeout"`` for a session that expired before all reports arrived. Partial
sessions are never aggregated. Only index sets cross the wire.
"""

from __future__ import annotations

import json
import logging
import os
import secrets
import socket
import socketserver
import threading
import time
from dataclasses import dataclass, field

from .aggregation import AggregationError, SelectionSet, aggregate, parse_rule
from .selections import result_payload

log = logging.getLogger(__name__)

__all__ = [
    "DEFAULT_TIMEOUT",
    "BIND_ENV",
    "ServiceError",
    "Coordinator",
    "CoordinatorServer",
    "Client",
    "parse_addr",
    "serve",
]

DEFAULT_TIMEOUT = 60.0
DEFAULT_CAPACITY = 1024
# finished sessions stay pollable this long before being dropped
DEFAULT_RETAIN = 600.0
BIND_ENV = "ADAGES_BIND"


class ServiceError(Exception):
    """Rejected request. ``code`` is one of ``bad_request``, ``unknown_session``,
    ``duplicate``, ``dimension``, ``timeout``, ``complete``, ``capacity``."""

    def __init__(self, code, message):
        super().__init__(message)
        self.code = code

    def message(self) -> dict:
        return {"type": "error", "code": self.code, "message": str(self)}


@dataclass
class SessionState:
    session_id: str
    expected_k: int
    d: int
    rule: object
    deadline: float
    received: dict = field(default_factory=dict)
    result: dict | None = None
    finished_at: float | None = None
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def status(self, now) -> str:
        if self.result is not None:
            return "complete"
        if now >= self.deadline:
            return "timeout"
        return "pending"


class Coordinator:
    """In-memory session table. Safe to call from many threads.

    The table itself is guarded by one lock held only for lookups and
    inserts; each session has its own lock for report handling and the
    one-time aggregation.
    """

    def __init__(self, timeout=DEFAULT_TIMEOUT, capacity=DEFAULT_CAPACITY,
                 retain=DEFAULT_RETAIN, clock=time.monotonic):
        if timeout <= 0:
            raise ValueError("timeout must be positive")
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.timeout = float(timeout)
        self.capacity = int(capacity)
        self.retain = float(retain)
        self.clock = clock
        self._sessions: dict[str, SessionState] = {}
        self._lock = threading.Lock()
        self.aggregations = 0

    def _prune(self, now):
        stale = [sid for sid, s in self._sessions.items()
                 if s.status(now) != "pending"
                 and now - (s.finished_at if s.finished_at is not None else s.deadline) > self.retain]
        for sid in stale:
            del self._sessions[sid]

    def open_session(self, expected_k, d, rule="adages", timeout=None) -> str:
        try:
            expected_k, d = int(expected_k), int(d)
        except (TypeError, ValueError):
            raise ServiceError("bad_request", "k and d must be integers") from None
        if expected_k < 1:
            raise ServiceError("bad_request", f"expected k must be at least 1, got {expected_k}")
        if d < 1:
            raise ServiceError("bad_request", f"d must be at least 1, got {d}")
        try:
            rule = parse_rule(rule)
        except (AggregationError, ValueError) as exc:
            raise ServiceError("bad_request", str(exc)) from None
        if rule.name == "fixed" and rule.c > expected_k:
            raise ServiceError("bad_request", f"fixed threshold {rule.c} exceeds k={expected_k}")
        timeout = self.timeout if timeout is None else float(timeout)
        if timeout <= 0:
            raise ServiceError("bad_request", "timeout must be positive")
        now = self.clock()
        with self._lock:
            self._prune(now)
            pending = sum(1 for s in self._sessions.values() if s.status(now) == "pending")
            if pending >= self.capacity:
                raise ServiceError("capacity", f"{pending} sessions already open")
            sid = secrets.token_hex(8)
            while sid in self._sessions:
                sid = secrets.token_hex(8)
            self._sessions[sid] = SessionState(sid, expected_k, d, rule, now + timeout)
        return sid

    def _get(self, sid) -> SessionState:
        with self._lock:
            s = self._sessions.get(sid)
        if s is None:
            raise ServiceError("unknown_session", f"no session {sid!r}")
        return s

    def info(self, sid) -> dict:
        s = self._get(sid)
        return {"session": sid, "k": s.expected_k, "d": s.d, "rule": str(s.rule),
                "timeout": s.deadline - self.clock()}

    def _result(self, s: SessionState, now) -> dict:
        if s.result is not None:
            return s.result
        return {"type": "result", "session": s.session_id, "status": "timeout",
                "received": len(s.received), "expected": s.expected_k}

    def submit(self, sid, machine_id, d, selected) -> dict:
        """Store one report. Returns a pending ack or the final result.

        Resending a report identical to the stored one is acknowledged again
        without changing anything.
        """
        s = self._get(sid)
        try:
            machine_id, d = int(machine_id), int(d)
            idx = [int(j) for j in selected]
        except (TypeError, ValueError):
            raise ServiceError("bad_request", "machine_id, d and selected must be integers") from None
        with s.lock:
            now = self.clock()
            if d != s.d:
                raise ServiceError("dimension", f"report has d={d}, session expects d={s.d}")
            try:
                sel = SelectionSet(d, frozenset(idx))
            except AggregationError as exc:
                raise ServiceError("dimension", str(exc)) from None
            prior = s.received.get(machine_id)
            if prior is not None:
                if prior != sel:
                    raise ServiceError("duplicate", f"machine {machine_id} already reported a different set")
                if s.result is not None:
                    return s.result
                return self._ack(s)
            status = s.status(now)
            if status == "timeout":
                raise ServiceError("timeout", f"session {sid} expired")
            if status == "complete":
                raise ServiceError("complete", f"session {sid} already has all {s.expected_k} reports")
            s.received[machine_id] = sel
            if len(s.received) < s.expected_k:
                return self._ack(s)
            machines = dict(s.received)
            out = aggregate([machines[m] for m in sorted(machines)], s.rule)
            s.result = {"type": "result", "session": sid, "status": "complete",
                        **result_payload(out, machines)}
            s.finished_at = now
            self.aggregations += 1
            return s.result

    def _ack(self, s: SessionState) -> dict:
        return {"type": "report", "session": s.session_id, "status": "pending",
                "received": len(s.received), "expected": s.expected_k}

    def poll(self, sid) -> dict:
        s = self._get(sid)
        with s.lock:
            now = self.clock()
            if s.status(now) == "pending":
                return {"type": "poll", "session": sid, "status": "pending",
                        "received": len(s.received), "expected": s.expected_k}
            return self._result(s, now)

    def handle(self, msg) -> dict:
        """Dispatch one decoded wire message."""
        if not isinstance(msg, dict):
            raise ServiceError("bad_request", "message must be a JSON object")
        kind = msg.get("type")
        try:
            if kind == "open":
                sid = self.open_session(msg["k"], msg["d"], msg.get("rule", "adages"),
                                        msg.get("timeout"))
                return {"type": "open", **self.info(sid)}
            if kind == "report":
                return self.submit(msg["session"], msg["machine_id"], msg["d"], msg["selected"])
            if kind == "poll":
                return self.poll(msg["session"])
        except KeyError as exc:
            raise ServiceError("bad_request", f"missing field {exc.args[0]!r}") from None
        raise ServiceError("bad_request", f"unsupported message type {kind!r}")


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        coord = self.server.coordinator
        for raw in self.rfile:
            line = raw.strip()
            if not line:
                continue
            try:
                reply = coord.handle(json.loads(line))
            except json.JSONDecodeError as exc:
                reply = ServiceError("bad_request", f"invalid JSON: {exc}").message()
            except ServiceError as exc:
                reply = exc.message()
            try:
                self.wfile.write((json.dumps(reply) + "\n").encode())
            except OSError:
                return


class CoordinatorServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, addr, coordinator: Coordinator | None = None):
        self.coordinator = coordinator or Coordinator()
        super().__init__(addr, _Handler)

    @property
    def address(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def start(self) -> threading.Thread:
        """Serve in a daemon thread; handy for tests and notebooks."""
        t = threading.Thread(target=self.serve_forever, daemon=True)
        t.start()
        return t


def parse_addr(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"address must look like host:port, got {text!r}")
    return host or "127.0.0.1", int(port)


def serve(bind="127.0.0.1:7787", timeout=DEFAULT_TIMEOUT, capacity=DEFAULT_CAPACITY):
    """Run the coordinator until interrupted. ``$ADAGES_BIND`` overrides ``bind``."""
    bind = os.environ.get(BIND_ENV) or bind
    server = CoordinatorServer(parse_addr(bind), Coordinator(timeout, capacity))
    log.info("coordinator listening on %s", server.address)
    try:
        server.serve_forever()
    finally:
        server.server_close()


class Client:
    """Blocking JSON-lines client holding one connection."""

    def __init__(self, addr, timeout=30.0):
        if isinstance(addr, str):
            addr = parse_addr(addr)
        self.sock = socket.create_connection(addr, timeout=timeout)
        self._rfile = self.sock.makefile("rb")

    def close(self):
        self._rfile.close()
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def request(self, msg: dict) -> dict:
        self.sock.sendall((json.dumps(msg) + "\n").encode())
        line = self._rfile.readline()
        if not line:
            raise ConnectionError("coordinator closed the connection")
        return json.loads(line)

    def open(self, k, d, rule="adages", timeout=None) -> dict:
        msg = {"type": "open", "k": k, "d": d, "rule": str(rule)}
        if timeout is not None:
            msg["timeout"] = timeout
        return self.request(msg)

    def report(self, session, machine_id, d, selected) -> dict:
        return self.request({"type": "report", "session": session, "machine_id": int(machine_id),
                             "d": int(d), "selected": sorted(int(j) for j in selected)})

    def poll(self, session) -> dict:
        return self.request({"type": "poll", "session": session})

    def wait_result(self, session, timeout=30.0, interval=0.01) -> dict:
        end = time.monotonic() + timeout
        while True:
            reply = self.poll(session)
            if reply["type"] != "poll":
                return reply
            if time.monotonic() > end:
                raise TimeoutError(f"no result for session {session} after {timeout}s")
            time.sleep(interval)
