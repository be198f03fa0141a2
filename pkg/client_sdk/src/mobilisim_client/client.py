"""Blocking client session with a background reader caching the latest STATE.

The session connects, waits for the WELCOME scene description, then keeps a
thread draining the socket: STATE frames update a latest-wins cache (the
cached timestamp never decreases), everything else lands in a reply queue.
Commands are synchronous; the acknowledged timestamp of a command is the
first simulation timestamp observed after the server applied it.
"""

from __future__ import annotations

import socket
import statistics
import threading
import time
from dataclasses import dataclass, field

from .errors import (ConnectionLost, ConnectionRefused, HandshakeTimeout,
                     ProtocolError, ServerError, UnknownJoint)
from .framing import Message, Parser, encode

DEFAULT_PORT = 7511


@dataclass
class SceneInfo:
    """Parsed WELCOME payload."""

    raw: dict
    dt: float
    realtime_factor: float
    joints: dict[str, dict] = field(default_factory=dict)          # name -> info
    articulation_of: dict[str, str] = field(default_factory=dict)  # joint -> articulation

    @staticmethod
    def from_payload(payload: dict) -> "SceneInfo":
        info = SceneInfo(raw=payload, dt=float(payload["dt"]),
                         realtime_factor=float(payload.get("realtime_factor", 1.0)))
        for art in payload.get("articulations", []):
            for joint in art.get("joints", []):
                info.joints[joint["name"]] = joint
                info.articulation_of[joint["name"]] = art["name"]
        return info


class ClientSession:
    """One TCP connection to a simulation server."""

    def __init__(self, sock: socket.socket, scene: SceneInfo):
        self.sock = sock
        self.scene = scene
        self._parser = Parser()
        self._lock = threading.Condition()
        self._state: Message | None = None
        self._replies: list[Message] = []
        self._dead: Exception | None = None
        self._controller_count = 0
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    # -- lifecycle ---------------------------------------------------------

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()

    def __enter__(self) -> "ClientSession":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- reading ------------------------------------------------------------

    def _read_loop(self) -> None:
        while True:
            try:
                data = self.sock.recv(65536)
            except OSError as exc:
                self._fail(ConnectionLost(f"socket error: {exc}"))
                return
            if not data:
                self._fail(ConnectionLost("server closed the connection"))
                return
            try:
                messages = self._parser.feed(data)
            except ProtocolError as exc:
                self._fail(exc)
                return
            with self._lock:
                for msg in messages:
                    if msg.type == "STATE":
                        if self._state is None or msg.timestamp >= self._state.timestamp:
                            self._state = msg
                    else:
                        self._replies.append(msg)
                self._lock.notify_all()

    def _fail(self, exc: Exception) -> None:
        with self._lock:
            self._dead = exc
            self._lock.notify_all()

    def _check_alive(self) -> None:
        if self._dead is not None:
            raise self._dead

    # -- waiting -------------------------------------------------------------

    def latest_state(self) -> Message | None:
        with self._lock:
            self._check_alive()
            return self._state

    def wait_for_state(self, after: float | None = None, timeout: float = 10.0) -> Message:
        """Block until a STATE newer than `after` (or any STATE) is cached."""
        deadline = time.monotonic() + timeout
        with self._lock:
            while True:
                self._check_alive()
                if self._state is not None and (after is None
                                                or self._state.timestamp > after):
                    return self._state
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise TimeoutError(f"no STATE newer than {after} within {timeout}s")
                self._lock.wait(remaining)

    def wait_for_reply(self, types: tuple[str, ...], timeout: float = 10.0) -> Message:
        deadline = time.monotonic() + timeout
        with self._lock:
            while True:
                self._check_alive()
                for msg in self._replies:
                    if msg.type in types:
                        self._replies.remove(msg)
                        return msg
                    if msg.type == "ERROR":
                        self._replies.remove(msg)
                        raise ServerError(msg.payload.get("code", "unknown"),
                                          msg.payload.get("message", ""))
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise TimeoutError(f"no {types} reply within {timeout}s")
                self._lock.wait(remaining)

    # -- commands --------------------------------------------------------------

    def send(self, msg: Message) -> None:
        self._check_alive()
        try:
            self.sock.sendall(encode(msg))
        except OSError as exc:
            raise ConnectionLost(f"send failed: {exc}") from exc

    def set_velocity_target(self, joints: list[str], targets: list[float],
                            kv: float = 60.0, timeout: float = 10.0) -> float:
        """Install (or retarget) a velocity controller on named joints and
        return the server timestamp at which the command took effect.

        Unknown joint names fail locally before any bytes are sent.
        """
        for name in joints:
            if name not in self.scene.joints:
                raise UnknownJoint(f"no joint named {name!r} in the scene description")
        arts = {self.scene.articulation_of[j] for j in joints}
        if len(arts) != 1:
            raise UnknownJoint(f"joints span multiple articulations: {sorted(arts)}")
        before = self._state.timestamp if self._state is not None else None
        self._controller_count += 1
        name = f"sdk_velocity_{'_'.join(joints)}"
        now = self._state.timestamp if self._state is not None else 0.0
        self.send(Message("SET_CONTROLLER", now, {
            "articulation": arts.pop(), "name": name, "joints": list(joints),
            "mode": "velocity", "kv": kv}))
        self.send(Message("SET_TARGET", now, {"controller": name,
                                              "value": list(targets)}))
        state = self.wait_for_state(after=before, timeout=timeout)
        return state.timestamp

    def ping(self, count: int = 5, timeout: float = 5.0) -> list[tuple[float, float, float]]:
        """(send_wall, server_timestamp, recv_wall) samples from PING/PONG."""
        samples = []
        for i in range(count):
            send_wall = time.time()
            self.send(Message("PING", 0.0, {"nonce": i}))
            pong = self.wait_for_reply(("PONG",), timeout)
            samples.append((send_wall, pong.timestamp, time.time()))
        return samples

    def clock_offset(self, count: int = 5) -> float:
        """Median offset mapping wall time onto the simulation clock:
        sim ~= offset + realtime_factor * wall."""
        rtf = self.scene.realtime_factor
        samples = self.ping(count)
        return statistics.median(ts - rtf * 0.5 * (send + recv)
                                 for send, ts, recv in samples)

    # -- task driving -------------------------------------------------------------

    def run_drawer_episode(self, speed: float = 0.3, success_fraction: float = 0.9,
                           timeout: float = 60.0) -> dict:
        """Drive the scene's slider joint to success over the wire.

        Finds the first slider joint in the WELCOME description, installs a
        velocity controller, and polls STATE until the joint passes the
        success fraction of its motion range (or the timeout elapses).
        """
        slider = next((j for j in self.scene.joints.values()
                       if j.get("kind") == "slider"), None)
        if slider is None:
            raise UnknownJoint("scene has no slider joint to pull")
        art = self.scene.articulation_of[slider["name"]]
        lo, hi = float(slider["limit_lower"]), float(slider["limit_upper"])
        start = int(slider["dof_start"])
        t0 = self.set_velocity_target([slider["name"]], [speed])
        deadline = time.monotonic() + timeout
        fraction = 0.0
        stamps = []
        while time.monotonic() < deadline:
            state = self.wait_for_state(after=stamps[-1] if stamps else None,
                                        timeout=max(0.1, deadline - time.monotonic()))
            stamps.append(state.timestamp)
            q = state.payload["articulations"][art]["q"][start]
            fraction = (q - lo) / (hi - lo)
            if fraction >= success_fraction:
                steps = int(round((state.timestamp - t0) / self.scene.dt))
                return {"outcome": "success", "final_fraction": fraction,
                        "steps_used": steps, "timestamps": stamps}
        return {"outcome": "timeout", "final_fraction": fraction,
                "steps_used": int(round((stamps[-1] - t0) / self.scene.dt)) if stamps else 0,
                "timestamps": stamps}


def connect(address: str | None = None, timeout: float = 10.0) -> ClientSession:
    """Open a session: TCP connect, then block until the WELCOME handshake.

    Raises ConnectionRefused when nothing listens at the address and
    HandshakeTimeout when no valid WELCOME arrives in time.
    """
    host, _, port = (address or f"127.0.0.1:{DEFAULT_PORT}").rpartition(":")
    if not host:
        host, port = address, str(DEFAULT_PORT)
    try:
        sock = socket.create_connection((host, int(port)), timeout=timeout)
    except ConnectionRefusedError as exc:
        raise ConnectionRefused(f"nothing listening at {host}:{port}") from exc
    except OSError as exc:
        raise ConnectionRefused(f"cannot reach {host}:{port}: {exc}") from exc
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    parser = Parser()
    welcome = None
    deadline = time.monotonic() + timeout
    buffer_dead = False
    while welcome is None:
        remaining = deadline - time.monotonic()
        if remaining <= 0 or buffer_dead:
            sock.close()
            raise HandshakeTimeout(f"no WELCOME within {timeout}s")
        sock.settimeout(remaining)
        try:
            data = sock.recv(65536)
        except socket.timeout:
            continue
        except OSError:
            buffer_dead = True
            continue
        if not data:
            buffer_dead = True
            continue
        try:
            for msg in parser.feed(data):
                if msg.type == "WELCOME":
                    welcome = msg
                    break
        except ProtocolError:
            sock.close()
            raise HandshakeTimeout("handshake bytes were not a valid WELCOME frame")
    sock.settimeout(None)
    return ClientSession(sock, SceneInfo.from_payload(welcome.payload))
