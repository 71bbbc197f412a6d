"""Live session service: snapshots out, operator/console commands in.

Messages are JSON objects with a version field ``v`` (currently 1).
Server -> client: ``snapshot`` (30 Hz), ``ack``, ``error``.
Client -> server: ``hello`` {role: observer|operator}, then commands:
``stylus-move``, ``set-scale``, ``set-netem``, ``place-object``,
``remove-object``, ``episode`` {action: start|pause|reset}.

Snapshots are read-only views assembled from latest-value state; publishing
never blocks the control loops, and any number of observers may watch while
exactly one commander steers.  The live server maps wall time onto the
session's virtual clock.
"""

from __future__ import annotations

import asyncio
import json
import math

import numpy as np

from .kinematics import Pose, forward_kinematics
from .scenario import NetemConfig, Scenario
from .scene import Box, Cylinder, SceneObject, Sphere
from .session import Session
from .twinsync import SCALE_MODES, HapticSample

PROTOCOL_VERSION = 1
SNAPSHOT_RATE_HZ = 30.0
CLOUD_SNAPSHOT_LIMIT = 2000


class CommandError(ValueError):
    """Invalid command; message names the offending field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _shape_dict(shape) -> dict:
    if isinstance(shape, Sphere):
        return {"shape": "sphere", "center": list(shape.center), "radius": shape.radius}
    if isinstance(shape, Box):
        return {"shape": "box", "center": list(shape.center), "half_extents": list(shape.half_extents)}
    return {
        "shape": "cylinder",
        "base": list(shape.base),
        "radius": shape.radius,
        "height": shape.height,
    }


def _objects_dict(objects: dict[int, SceneObject]) -> list[dict]:
    return [
        {"id": o.instance_id, "class": o.class_id, "color": list(o.color), **_shape_dict(o.shape)}
        for o in objects.values()
    ]


def _decimate_cloud(points: np.ndarray, limit: int = CLOUD_SNAPSHOT_LIMIT) -> list[list[float]]:
    n = len(points)
    if n == 0:
        return []
    if n > limit:  # deterministic uniform decimation
        idx = np.linspace(0, n - 1, limit).astype(int)
        points = points[idx]
    return [[float(x), float(y), float(z)] for x, y, z in points]


class Gateway:
    """Snapshot builder and command validator around a Session."""

    def __init__(self, session: Session):
        self.session = session
        self.paused = False
        self._stylus_index = 0

    # -- snapshots -------------------------------------------------------

    def snapshot(self) -> dict:
        s = self.session
        real_pose = forward_kinematics(s.model, s.real_joints)
        dt1_cloud = s.dt1.clouds[-1].points if s.dt1.clouds else np.zeros((0, 3))
        return {
            "v": PROTOCOL_VERSION,
            "type": "snapshot",
            "tick": s.now,
            "paused": self.paused,
            "dt1": {"pose": list(s.dt1.pose.position()), "joints": list(s.dt1.joints.as_tuple())},
            "dt2": {"pose": list(s.dt2.pose.position()), "joints": list(s.dt2.joints.as_tuple())},
            "robot": {
                "pose": [real_pose.x, real_pose.y, real_pose.z],
                "joints": list(s.real_joints.as_tuple()),
            },
            "force": {"vector": list(s.force.force), "magnitude": s.force.magnitude},
            "scale": {"mode": s.scale_mode.name, "factor": s.scale_mode.factor},
            "netem": {
                "rtt_ms": s.cfg.netem.rtt * 1000.0,
                "jitter_ms": s.cfg.netem.jitter * 1000.0,
                "loss": s.cfg.netem.loss,
            },
            "fence": {"lo": list(s.fence.lo), "hi": list(s.fence.hi)},
            "home": {
                "robot": list(s.home_pose.position()),
                "operator": list(s.cfg.operator_home),
            },
            "scene": {
                "dt1": _objects_dict(s.dt1.objects),
                "dt2": _objects_dict(s.dt2.objects),
            },
            "cloud": _decimate_cloud(dt1_cloud),
            "metrics": {
                "bytes_pose": s.link_d12.bytes_submitted,
                "bytes_return": s.link_d21.bytes_submitted,
                "packets_pose": s.link_d12.submitted,
                "packets_return": s.link_d21.submitted,
            },
        }

    # -- commands ---------------------------------------------------------

    def _require(self, cmd: dict, field: str, kind, path: str):
        if field not in cmd:
            raise CommandError(f"{path}.{field}", "required field missing")
        value = cmd[field]
        if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if not isinstance(value, kind):
            raise CommandError(f"{path}.{field}", f"expected {kind.__name__}")
        return value

    def _vec3(self, cmd: dict, field: str, path: str) -> tuple[float, float, float]:
        v = self._require(cmd, field, list, path)
        if len(v) != 3 or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
            raise CommandError(f"{path}.{field}", "expected [x, y, z] numbers")
        if not all(math.isfinite(float(x)) for x in v):
            raise CommandError(f"{path}.{field}", "values must be finite")
        return (float(v[0]), float(v[1]), float(v[2]))

    def handle_command(self, cmd: dict) -> dict:
        """Validate and apply one command; full application or clean rejection."""
        try:
            return self._dispatch(cmd)
        except CommandError as err:
            return {"v": PROTOCOL_VERSION, "type": "error", "field": err.field, "message": str(err)}

    def _dispatch(self, cmd: dict) -> dict:
        if not isinstance(cmd, dict):
            raise CommandError("command", "expected a JSON object")
        ctype = cmd.get("type")
        s = self.session
        if ctype == "stylus-move":
            pos = self._vec3(cmd, "position", "stylus-move")
            close = bool(cmd.get("close", False))
            self._stylus_index += 1
            s.set_stylus(HapticSample(pos, 0.0 if close else 1.0, close, s.now, self._stylus_index))
        elif ctype == "set-scale":
            mode = self._require(cmd, "mode", str, "set-scale")
            if mode not in SCALE_MODES:
                raise CommandError("set-scale.mode", f"unknown mode {mode!r}")
            s.queue(s.set_scale, SCALE_MODES[mode])
        elif ctype == "set-netem":
            rtt = self._require(cmd, "rtt_ms", float, "set-netem")
            loss = float(cmd.get("loss", 0.0))
            jitter = float(cmd.get("jitter_ms", 0.0))
            if rtt < 0 or jitter < 0:
                raise CommandError("set-netem.rtt_ms", "must be nonnegative")
            if not 0.0 <= loss <= 1.0:
                raise CommandError("set-netem.loss", "must be in [0, 1]")
            s.queue(s.set_netem, NetemConfig(rtt / 1000.0, jitter / 1000.0, loss, False))
        elif ctype == "place-object":
            obj = self._parse_object(cmd)
            s.queue(s.place_object, obj)
        elif ctype == "remove-object":
            iid = self._require(cmd, "id", int, "remove-object")
            s.queue(s.remove_object, iid)
        elif ctype == "episode":
            action = self._require(cmd, "action", str, "episode")
            if action == "start":
                self.paused = False
            elif action == "pause":
                self.paused = True
            elif action == "reset":
                raise CommandError("episode.action", "rejected-busy: reset a session by restarting it")
            else:
                raise CommandError("episode.action", f"unknown action {action!r}")
        else:
            raise CommandError("type", f"unknown command type {ctype!r}")
        return {"v": PROTOCOL_VERSION, "type": "ack", "command": ctype}

    def _parse_object(self, cmd: dict) -> SceneObject:
        iid = self._require(cmd, "id", int, "place-object")
        shape_kind = self._require(cmd, "shape", str, "place-object")
        try:
            if shape_kind == "sphere":
                shape = Sphere(
                    self._vec3(cmd, "center", "place-object"),
                    self._require(cmd, "radius", float, "place-object"),
                )
            elif shape_kind == "box":
                shape = Box(
                    self._vec3(cmd, "center", "place-object"),
                    self._vec3(cmd, "half_extents", "place-object"),
                )
            elif shape_kind == "cylinder":
                shape = Cylinder(
                    self._vec3(cmd, "base", "place-object"),
                    self._require(cmd, "radius", float, "place-object"),
                    self._require(cmd, "height", float, "place-object"),
                )
            else:
                raise CommandError("place-object.shape", f"unknown shape {shape_kind!r}")
        except ValueError as err:
            if isinstance(err, CommandError):
                raise
            raise CommandError("place-object", str(err)) from None
        color = cmd.get("color", [200, 120, 40])
        if not (isinstance(color, list) and len(color) == 3):
            raise CommandError("place-object.color", "expected [r, g, b]")
        return SceneObject(iid, int(cmd.get("class", 0)), shape, tuple(int(c) for c in color))


async def serve(scenario: Scenario, host: str = "127.0.0.1", port: int = 8765, *, speed: float = 1.0):
    """Run a live session over WebSocket; wall clock drives virtual time."""
    import websockets

    session = Session(scenario)
    gw = Gateway(session)
    observers: set = set()
    commander: list = []  # at most one

    async def handler(ws):
        role = "observer"
        try:
            hello = json.loads(await ws.recv())
            role = hello.get("role", "observer")
            if role == "operator":
                if commander:
                    await ws.send(
                        json.dumps(
                            {"v": PROTOCOL_VERSION, "type": "error", "field": "role",
                             "message": "busy: a commander is already connected"}
                        )
                    )
                    return
                commander.append(ws)
            observers.add(ws)
            await ws.send(json.dumps({"v": PROTOCOL_VERSION, "type": "ack", "command": "hello"}))
            async for raw in ws:
                try:
                    cmd = json.loads(raw)
                except json.JSONDecodeError:
                    await ws.send(
                        json.dumps({"v": PROTOCOL_VERSION, "type": "error", "field": "json",
                                    "message": "not valid JSON"})
                    )
                    continue
                if role != "operator":
                    await ws.send(
                        json.dumps({"v": PROTOCOL_VERSION, "type": "error", "field": "role",
                                    "message": "observers cannot command"})
                    )
                    continue
                await ws.send(json.dumps(gw.handle_command(cmd)))
        except Exception:
            pass
        finally:
            observers.discard(ws)
            if ws in commander:
                commander.remove(ws)

    async def pump():
        loop = asyncio.get_running_loop()
        start = loop.time()
        period = 1.0 / SNAPSHOT_RATE_HZ
        while True:
            await asyncio.sleep(period)
            if not gw.paused:
                target = (loop.time() - start) * speed
                behind = int((target - session.now) / session.tick_dt)
                session.run_ticks(min(max(behind, 0), 200))
            if observers:
                msg = json.dumps(gw.snapshot())
                for ws in list(observers):
                    try:
                        await ws.send(msg)
                    except Exception:
                        observers.discard(ws)

    async with websockets.serve(handler, host, port):
        await pump()
