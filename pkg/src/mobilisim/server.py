"""Asynchronous operation mode: the scene steps on its own clock while
clients command controllers and read sensors over framed TCP.

Wire format: a 4-byte big-endian unsigned payload length, then that many
bytes of UTF-8 JSON {"type", "timestamp", "payload"} in that key order with
no whitespace. Timestamps are simulation-clock seconds and never decrease on
a connection. Commands arriving mid-step queue and apply between steps, so a
STATE message never reflects a half-applied change. Slow clients have stale
STATE frames replaced (latest wins); stepping never waits for a client.
"""

from __future__ import annotations

import base64
import json
import os
import queue
import socket
import struct
import threading
import time as wall_clock
from dataclasses import dataclass, field

import numpy as np

from .control import ControlMode, Controller, ControllerSpec
from .dynamics.scene import Scene
from .errors import (BindError, FrameTooLarge, MalformedFrame, NoSamples,
                     UnknownType, ValidationError)
from .sensors.camera import CameraIntrinsics, render
from .sensors.imu import read_imu
from .sensors.msf import write_frame
from .spatial import Transform

DEFAULT_PORT = 7511
ADDR_ENV_VAR = "MOBILISIM_ADDR"
MAX_FRAME_BYTES = 64 * 1024 * 1024

MESSAGE_TYPES = ("HELLO", "WELCOME", "STATE", "SET_CONTROLLER", "SET_TARGET",
                 "ATTACH", "RENDER_REQUEST", "RENDER_RESPONSE", "IMU", "PING",
                 "PONG", "ERROR")


@dataclass(frozen=True)
class WireMessage:
    type: str
    timestamp: float
    payload: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.type not in MESSAGE_TYPES:
            raise UnknownType(f"unknown message type {self.type!r}")
        object.__setattr__(self, "timestamp", float(self.timestamp))


@dataclass(frozen=True)
class SessionConfig:
    sim_rate: float = 500.0              # simulation steps per sim second
    state_broadcast_rate: float = 50.0   # STATE frames per sim second
    realtime_factor: float = 1.0         # sim seconds per wall second

    def __post_init__(self):
        if self.sim_rate <= 0 or self.state_broadcast_rate <= 0 or self.realtime_factor <= 0:
            raise ValidationError("session rates must be positive")


# -- framing -------------------------------------------------------------------

def encode_frame(msg: WireMessage) -> bytes:
    body = json.dumps({"type": msg.type, "timestamp": msg.timestamp,
                       "payload": msg.payload}, separators=(",", ":")).encode("utf-8")
    if len(body) > MAX_FRAME_BYTES:
        raise FrameTooLarge(f"frame of {len(body)} bytes exceeds the 64 MiB limit")
    return struct.pack(">I", len(body)) + body


def decode_frame(data: bytes) -> WireMessage:
    """Decode exactly one frame (the inverse of encode_frame)."""
    if len(data) < 4:
        raise MalformedFrame("frame shorter than its length prefix")
    (n,) = struct.unpack_from(">I", data, 0)
    if n > MAX_FRAME_BYTES:
        raise FrameTooLarge(f"declared payload of {n} bytes exceeds the 64 MiB limit")
    if len(data) != 4 + n:
        raise MalformedFrame(f"expected {4 + n} bytes, got {len(data)}")
    return _parse_body(data[4:])


def _parse_body(body: bytes) -> WireMessage:
    try:
        doc = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedFrame(f"frame payload is not canonical JSON: {exc}") from exc
    if not isinstance(doc, dict) or not {"type", "timestamp", "payload"} <= set(doc):
        raise MalformedFrame("frame JSON missing type/timestamp/payload")
    if doc["type"] not in MESSAGE_TYPES:
        raise UnknownType(f"unknown message type {doc['type']!r}")
    return WireMessage(doc["type"], float(doc["timestamp"]), doc["payload"])


class FrameStream:
    """Incremental frame decoder with resynchronization.

    Feeding bytes yields decoded messages plus any framing errors hit along
    the way. A malformed or truncated frame is skipped by scanning forward to
    the next byte offset where a complete, valid frame parses.
    """

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> tuple[list[WireMessage], list[Exception]]:
        self._buf.extend(data)
        messages: list[WireMessage] = []
        errors: list[Exception] = []
        while True:
            if len(self._buf) < 4:
                break
            (n,) = struct.unpack_from(">I", self._buf, 0)
            if n > MAX_FRAME_BYTES:
                errors.append(FrameTooLarge(f"declared payload of {n} bytes"))
                self._resync()
                continue
            if len(self._buf) < 4 + n:
                break
            body = bytes(self._buf[4:4 + n])
            try:
                msg = _parse_body(body)
            except (MalformedFrame, UnknownType) as exc:
                errors.append(exc)
                self._resync()
                continue
            messages.append(msg)
            del self._buf[:4 + n]
        return messages, errors

    def _resync(self) -> None:
        """Drop bytes up to the next offset where a complete frame parses."""
        buf = self._buf
        for off in range(1, max(1, len(buf) - 3)):
            (n,) = struct.unpack_from(">I", buf, off)
            if n > MAX_FRAME_BYTES or off + 4 + n > len(buf):
                continue
            try:
                _parse_body(bytes(buf[off + 4:off + 4 + n]))
            except (MalformedFrame, UnknownType):
                continue
            del buf[:off]
            return
        buf.clear()


# -- clock synchronization ------------------------------------------------------

def sync_time(samples: list[tuple[float, float, float]],
              realtime_factor: float = 1.0) -> float:
    """Estimate the offset mapping wall time to the simulation clock.

    Each sample is (send_wall, server_timestamp, recv_wall). With symmetric
    latency the wall midpoint corresponds to the server timestamp, so
    sim_time ~= offset + realtime_factor * wall. Returns the median offset.
    """
    if not samples:
        raise NoSamples("clock sync needs at least one ping/pong sample")
    offsets = [server_ts - realtime_factor * 0.5 * (send + recv)
               for send, server_ts, recv in samples]
    return float(np.median(offsets))


# -- address handling ------------------------------------------------------------

def resolve_address(explicit: str | None = None) -> tuple[str, int]:
    """Bind address precedence: explicit argument, then the MOBILISIM_ADDR
    environment variable, then 127.0.0.1:7511."""
    addr = explicit or os.environ.get(ADDR_ENV_VAR) or f"127.0.0.1:{DEFAULT_PORT}"
    host, _, port = addr.rpartition(":")
    if not host:
        host, port = addr, str(DEFAULT_PORT)
    return host, int(port)


# -- server ----------------------------------------------------------------------

class _Client:
    def __init__(self, sock: socket.socket, server: "SimServer"):
        self.sock = sock
        self.server = server
        self.stream = FrameStream()
        self.alive = True
        self._queue: list[WireMessage] = []
        self._cond = threading.Condition()
        self.writer = threading.Thread(target=self._write_loop, daemon=True)
        self.reader = threading.Thread(target=self._read_loop, daemon=True)

    def start(self) -> None:
        self.writer.start()
        self.reader.start()

    def send(self, msg: WireMessage) -> None:
        with self._cond:
            if msg.type == "STATE":
                # latest wins: drop any stale queued STATE, append the new one
                self._queue = [m for m in self._queue if m.type != "STATE"]
            self._queue.append(msg)
            self._cond.notify()

    def close(self) -> None:
        self.alive = False
        with self._cond:
            self._cond.notify()
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()

    def _write_loop(self) -> None:
        while self.alive:
            with self._cond:
                while self.alive and not self._queue:
                    self._cond.wait(timeout=0.2)
                if not self.alive:
                    return
                msg = self._queue.pop(0)
            try:
                self.sock.sendall(encode_frame(msg))
            except OSError:
                self.server._drop_client(self)
                return

    def _read_loop(self) -> None:
        while self.alive:
            try:
                data = self.sock.recv(65536)
            except OSError:
                break
            if not data:
                break
            messages, errors = self.stream.feed(data)
            for exc in errors:
                self.send(self.server._error_message("malformed_frame", str(exc)))
            for msg in messages:
                self.server._handle(self, msg)
        self.server._drop_client(self)


class SimServer:
    """Owns the scene stepping thread and the client connections."""

    def __init__(self, scene: Scene, config: SessionConfig | None = None,
                 address: str | None = None):
        self.scene = scene
        self.config = config or SessionConfig()
        host, port = resolve_address(address)
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            self._listener.bind((host, port))
        except OSError as exc:
            raise BindError(f"cannot bind {host}:{port}: {exc}") from exc
        self._listener.listen(16)
        self.host, self.port = self._listener.getsockname()[:2]
        self._clients: list[_Client] = []
        self._clients_lock = threading.Lock()
        self._commands: "queue.Queue[tuple[_Client, WireMessage]]" = queue.Queue()
        self._render_jobs: "queue.Queue[tuple[_Client, WireMessage]]" = queue.Queue()
        self._controllers: dict[str, Controller] = {}
        self._scene_lock = threading.Lock()
        self._running = False
        self._threads: list[threading.Thread] = []
        self.last_error: Exception | None = None

    # -- lifecycle ------------------------------------------------------------

    def start(self) -> "SimServer":
        self._running = True
        for target in (self._accept_loop, self._step_loop, self._render_loop):
            t = threading.Thread(target=target, daemon=True)
            t.start()
            self._threads.append(t)
        return self

    def stop(self) -> None:
        self._running = False
        try:
            self._listener.close()
        except OSError:
            pass
        with self._clients_lock:
            clients = list(self._clients)
        for c in clients:
            c.close()
        for t in self._threads:
            t.join(timeout=2.0)

    # -- loops ------------------------------------------------------------------

    def _accept_loop(self) -> None:
        while self._running:
            try:
                sock, _ = self._listener.accept()
            except OSError:
                return
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            client = _Client(sock, self)
            with self._clients_lock:
                self._clients.append(client)
            client.start()
            client.send(WireMessage("WELCOME", self._now(), self._scene_description()))

    def _step_loop(self) -> None:
        dt = self.scene.config.dt
        broadcast_every = max(1, round(1.0 / (dt * self.config.state_broadcast_rate)))
        wall_per_step = dt / self.config.realtime_factor
        next_deadline = wall_clock.perf_counter()
        steps = 0
        while self._running:
            self._apply_commands()
            with self._scene_lock:
                try:
                    self.scene.step()
                except Exception as exc:  # noqa: BLE001 - stepping must survive
                    self.last_error = exc
                steps += 1
                if steps % broadcast_every == 0:
                    state = WireMessage("STATE", self._now(), self._state_payload())
                else:
                    state = None
            if state is not None:
                self._broadcast(state)
            next_deadline += wall_per_step
            delay = next_deadline - wall_clock.perf_counter()
            if delay > 0:
                wall_clock.sleep(delay)
            elif delay < -0.25:
                next_deadline = wall_clock.perf_counter()  # shed accumulated lag

    def _render_loop(self) -> None:
        while self._running:
            try:
                client, msg = self._render_jobs.get(timeout=0.2)
            except queue.Empty:
                continue
            try:
                payload = msg.payload
                intr = CameraIntrinsics(**payload.get("intrinsics", {}))
                pose = Transform.from_dict(payload["pose"])
                with self._scene_lock:
                    snapshot = _GeometrySnapshot(self.scene)
                frame = render(snapshot, pose, intr, timestamp=snapshot.time)
                data = base64.b64encode(write_frame(frame)).decode("ascii")
                client.send(WireMessage("RENDER_RESPONSE", self._now(),
                                        {"data": data, "width": intr.width,
                                         "height": intr.height}))
            except Exception as exc:  # noqa: BLE001 - protocol surface reports errors
                client.send(self._error_message("render_failed", str(exc)))

    # -- message handling ---------------------------------------------------------

    def _handle(self, client: _Client, msg: WireMessage) -> None:
        if msg.type == "PING":
            client.send(WireMessage("PONG", self._now(), msg.payload))
        elif msg.type == "RENDER_REQUEST":
            self._render_jobs.put((client, msg))
        elif msg.type in ("HELLO", "SET_CONTROLLER", "SET_TARGET", "ATTACH", "IMU"):
            self._commands.put((client, msg))
        else:
            client.send(self._error_message("unexpected_type",
                                            f"clients may not send {msg.type}"))

    def _apply_commands(self) -> None:
        while True:
            try:
                client, msg = self._commands.get_nowait()
            except queue.Empty:
                return
            try:
                with self._scene_lock:
                    self._apply_one(client, msg)
            except Exception as exc:  # noqa: BLE001 - protocol surface reports errors
                client.send(self._error_message(type(exc).__name__, str(exc)))

    def _apply_one(self, client: _Client, msg: WireMessage) -> None:
        p = msg.payload
        if msg.type == "HELLO":
            client.send(WireMessage("WELCOME", self._now(), self._scene_description()))
        elif msg.type == "SET_CONTROLLER":
            spec = ControllerSpec(
                joints=tuple(p["joints"]), mode=ControlMode(p["mode"]),
                kp=float(p.get("kp", 0.0)), kd=float(p.get("kd", 0.0)),
                kv=float(p.get("kv", 0.0)),
                gravity_compensation=bool(p.get("gravity_compensation", False)))
            art = self.scene._art(p["articulation"])
            ctrl = Controller(art.spec, spec)
            old = self._controllers.get(p["name"])
            if old is not None and old in art.controllers:
                art.controllers.remove(old)
            art.controllers.append(ctrl)
            self._controllers[p["name"]] = ctrl
            client.send(WireMessage("STATE", self._now(), self._state_payload()))
        elif msg.type == "SET_TARGET":
            name = p["controller"]
            if name not in self._controllers:
                raise ValidationError(f"no controller named {name!r}")
            self._controllers[name].set_target(np.asarray(p["value"], dtype=float))
            client.send(WireMessage("STATE", self._now(), self._state_payload()))
        elif msg.type == "ATTACH":
            if p.get("detach"):
                target = p["attached"]["articulation"]
                for c in self.scene.constraints:
                    if c.active and c.attached_art == target:
                        self.scene.detach(c)
            else:
                self.scene.attach(p["holder"]["articulation"], p["holder"]["link"],
                                  p["attached"]["articulation"], p["attached"]["link"],
                                  break_threshold=float(p.get("break_threshold", 500.0)))
            client.send(WireMessage("STATE", self._now(), self._state_payload()))
        elif msg.type == "IMU":
            reading = read_imu(self.scene, p["articulation"], p["link"])
            client.send(WireMessage("IMU", self._now(), {
                "articulation": p["articulation"], "link": p["link"],
                "orientation": [float(v) for v in reading.orientation],
                "angular_velocity": [float(v) for v in reading.angular_velocity],
                "linear_acceleration": [float(v) for v in reading.linear_acceleration]}))

    # -- payload builders -----------------------------------------------------------

    def _now(self) -> float:
        return self.scene.time

    def _scene_description(self) -> dict:
        arts = []
        for name, art in self.scene.arts.items():
            index = art.spec.dof_index()
            joints = []
            for j in art.spec.joints:
                start, n = index[j.name]
                joints.append({"name": j.name, "kind": j.kind.value,
                               "limit_lower": j.limit_lower, "limit_upper": j.limit_upper,
                               "dof_start": start, "dof_count": n,
                               "parent": j.parent_link, "child": j.child_link})
            links = [{"name": l.name, "id": self.scene.link_id(name, l.name),
                      "semantic": l.semantic_label} for l in art.spec.links]
            arts.append({"name": name, "mode": art.mode.value, "dof": art.spec.dof,
                         "links": links, "joints": joints})
        return {"articulations": arts, "dt": self.scene.config.dt,
                "realtime_factor": self.config.realtime_factor,
                "state_broadcast_rate": self.config.state_broadcast_rate,
                "gravity": list(self.scene.config.gravity)}

    def _state_payload(self) -> dict:
        return {"clock": self.scene.time,
                "articulations": {name: {"q": art.q.tolist(), "qd": art.qd.tolist()}
                                  for name, art in self.scene.arts.items()},
                "events": list(self.scene.events)}

    def _error_message(self, code: str, message: str) -> WireMessage:
        return WireMessage("ERROR", self._now(), {"code": code, "message": message})

    def _broadcast(self, msg: WireMessage) -> None:
        with self._clients_lock:
            clients = list(self._clients)
        for c in clients:
            c.send(msg)

    def _drop_client(self, client: _Client) -> None:
        with self._clients_lock:
            if client in self._clients:
                self._clients.remove(client)
        client.alive = False


class _GeometrySnapshot:
    """Frozen copy of the scene's collision geometry for lock-free rendering."""

    def __init__(self, scene: Scene):
        self._geometry = list(scene.collision_geometry())
        self.time = scene.time

    def collision_geometry(self):
        return iter(self._geometry)


def serve(scene: Scene, config: SessionConfig | None = None,
          address: str | None = None) -> SimServer:
    """Start serving a scene; returns the running server handle."""
    return SimServer(scene, config, address).start()
