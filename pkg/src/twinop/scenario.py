"""Scenario files: one YAML document wires an entire episode.

Sections: run, arm, fence, scale, netem, camera, robot_home, operator,
spiral, scene (environment / real_only / registry), sensing, video.  Every
field has a default; validation errors name the offending field path.
The same scene block syntax also describes standalone scene files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .discrepancy import DiscrepancyParams
from .kinematics import ArmModel, Pose
from .netem import LinkConfig
from .scene import Box, CameraIntrinsics, Cylinder, Registry, RegistryEntry, SceneObject, Shape, Sphere
from .twinsync import Geofence, ScaleMode, SCALE_MODES


class ConfigError(ValueError):
    """Invalid scenario content; message carries the field path."""


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    duration: float = 60.0  # max virtual seconds
    drain: float = 0.3  # extra settling time after completion
    tick_hz: int = 1000
    pose_rate_hz: int = 100
    command_rate_hz: int = 100


@dataclass(frozen=True)
class NetemConfig:
    rtt: float = 0.001  # seconds
    jitter: float = 0.0
    loss: float = 0.0
    reorder: bool = False


@dataclass(frozen=True)
class OperatorConfig:
    kind: str = "idle"  # idle | spiral | poke | sweep | external
    mode: str = "twin"  # twin | video (what the operator watches)
    gain: float = 40.0  # pursuit gain, 1/s
    speed: float = 0.05  # stylus speed cap, m/s
    lookahead: float = 0.006  # pursuit lead distance along the path, m
    tremor_amplitude: float = 0.0
    tremor_frequency: float = 10.0


@dataclass(frozen=True)
class SpiralConfig:
    center: tuple[float, float] = (0.29, 0.0)
    z: float = 0.0205
    max_radius: float = 0.08
    turns: float = 3.0
    samples_per_turn: int = 200
    width: float = 0.004  # printed-path half-width


@dataclass(frozen=True)
class SensingConfig:
    enabled: bool = False
    rate_hz: float = 10.0
    discrepancy: bool = True
    depth_sigma_coeff: float = 0.004  # stddev = coeff * depth^2
    depth_dropout: float = 0.0
    params: DiscrepancyParams = DiscrepancyParams()


@dataclass(frozen=True)
class VideoConfig:
    emulate: bool = False
    frame_rate: float = 25.0
    packets_per_frame: int = 10
    packet_size: int = 1500
    total_packets: int | None = None  # cap; None = unlimited (rate-based)


@dataclass
class Scenario:
    run: RunConfig = RunConfig()
    arm: ArmModel = ArmModel()
    fence: Geofence = Geofence((0.17, -0.14, 0.0), (0.40, 0.14, 0.26))
    scale: ScaleMode = SCALE_MODES["normal"]
    netem: NetemConfig = NetemConfig()
    camera: CameraIntrinsics = field(
        default_factory=lambda: CameraIntrinsics.look_at((0.75, 0.0, 0.5), (0.29, 0.0, 0.05))
    )
    robot_home: tuple[float, float, float] = (0.29, 0.0, 0.05)
    operator_home: tuple[float, float, float] = (0.0, 0.0, 0.0)
    operator: OperatorConfig = OperatorConfig()
    spiral: SpiralConfig = SpiralConfig()
    environment: list[SceneObject] = field(default_factory=list)
    real_objects: list[SceneObject] = field(default_factory=list)
    registry: Registry = field(default_factory=Registry)
    sensing: SensingConfig = SensingConfig()
    video: VideoConfig = VideoConfig()


def _get(d: dict, key: str, path: str, default=None):
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected a mapping")
    return d.get(key, default)


def _vec(value, n: int, path: str) -> tuple:
    if not isinstance(value, (list, tuple)) or len(value) != n:
        raise ConfigError(f"{path}: expected a list of {n} numbers")
    try:
        return tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: expected numbers") from None


def _parse_shape(d: dict, path: str, centered: bool = False) -> Shape:
    kind = _get(d, "shape", path)
    if kind == "sphere":
        center = (0.0, 0.0, 0.0) if centered else _vec(_get(d, "center", path), 3, f"{path}.center")
        return Sphere(center, float(_require(d, "radius", path)))
    if kind == "box":
        center = (0.0, 0.0, 0.0) if centered else _vec(_get(d, "center", path), 3, f"{path}.center")
        return Box(center, _vec(_require(d, "half_extents", path), 3, f"{path}.half_extents"))
    if kind == "cylinder":
        height = float(_require(d, "height", path))
        base = (0.0, 0.0, -height / 2.0) if centered else _vec(_get(d, "base", path), 3, f"{path}.base")
        return Cylinder(base, float(_require(d, "radius", path)), height)
    raise ConfigError(f"{path}.shape: unknown shape {kind!r}")


def _require(d: dict, key: str, path: str):
    if key not in d:
        raise ConfigError(f"{path}.{key}: required field missing")
    return d[key]


def _parse_object(d: dict, path: str) -> SceneObject:
    color = d.get("color", (200, 200, 200))
    if len(color) != 3:
        raise ConfigError(f"{path}.color: expected [r, g, b]")
    try:
        return SceneObject(
            instance_id=int(_require(d, "id", path)),
            class_id=int(d.get("class", 0)),
            shape=_parse_shape(d, path),
            color=tuple(int(c) for c in color),
        )
    except ValueError as err:
        raise ConfigError(f"{path}: {err}") from None


def _parse_registry(items, path: str) -> Registry:
    reg = Registry()
    for i, d in enumerate(items or []):
        p = f"{path}[{i}]"
        try:
            reg.add(
                RegistryEntry(
                    class_id=int(_require(d, "class", p)),
                    name=str(d.get("name", f"class{d.get('class')}")),
                    base_confidence=float(d.get("base_confidence", 0.97)),
                    template=_parse_shape(_require(d, "template", p), f"{p}.template", centered=True),
                    color=tuple(int(c) for c in d.get("color", (180, 180, 180))),
                )
            )
        except ValueError as err:
            raise ConfigError(f"{p}: {err}") from None
    return reg


def _parse_camera(d: dict, path: str) -> CameraIntrinsics:
    kwargs = {}
    for k in ("width", "height"):
        if k in d:
            kwargs[k] = int(d[k])
    for k in ("fx", "fy", "cx", "cy", "depth_min", "depth_max"):
        if k in d:
            kwargs[k] = float(d[k])
    try:
        if "look_at" in d:
            return CameraIntrinsics.look_at(
                _vec(_require(d, "position", path), 3, f"{path}.position"),
                _vec(d["look_at"], 3, f"{path}.look_at"),
                **kwargs,
            )
        if "position" in d:
            kwargs["position"] = _vec(d["position"], 3, f"{path}.position")
        if "rotation" in d:
            kwargs["rotation"] = tuple(tuple(float(x) for x in row) for row in d["rotation"])
        return CameraIntrinsics(**kwargs)
    except ValueError as err:
        raise ConfigError(f"{path}: {err}") from None


def from_dict(doc: dict) -> Scenario:
    """Build a validated Scenario from a parsed YAML mapping."""
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("scenario: top level must be a mapping")
    sc = Scenario()
    if "run" in doc:
        r = doc["run"]
        sc.run = RunConfig(
            seed=int(r.get("seed", 0)),
            duration=float(r.get("duration", 60.0)),
            drain=float(r.get("drain", 0.3)),
            tick_hz=int(r.get("tick_hz", 1000)),
            pose_rate_hz=int(r.get("pose_rate_hz", 100)),
            command_rate_hz=int(r.get("command_rate_hz", 100)),
        )
        if sc.run.duration <= 0:
            raise ConfigError("run.duration: must be positive")
    if "arm" in doc:
        a = doc["arm"]
        try:
            sc.arm = ArmModel(
                d1=float(a.get("d1", 0.1519)),
                l2=float(a.get("l2", 0.2435)),
                l3=float(a.get("l3", 0.2132)),
                velocity_limit=float(a.get("velocity_limit", 3.14)),
            )
        except ValueError as err:
            raise ConfigError(f"arm: {err}") from None
    if "fence" in doc:
        f = doc["fence"]
        try:
            sc.fence = Geofence(
                _vec(_require(f, "lo", "fence"), 3, "fence.lo"),
                _vec(_require(f, "hi", "fence"), 3, "fence.hi"),
                margin=float(f.get("margin", 0.05)),
            )
        except ValueError as err:
            raise ConfigError(f"fence: {err}") from None
    if "scale" in doc:
        name = doc["scale"]
        if name not in SCALE_MODES:
            raise ConfigError(f"scale: unknown mode {name!r} (macro|normal|micro)")
        sc.scale = SCALE_MODES[name]
    if "netem" in doc:
        n = doc["netem"]
        sc.netem = NetemConfig(
            rtt=float(n.get("rtt_ms", 1.0)) / 1000.0,
            jitter=float(n.get("jitter_ms", 0.0)) / 1000.0,
            loss=float(n.get("loss", 0.0)),
            reorder=bool(n.get("reorder", False)),
        )
        if not 0.0 <= sc.netem.loss <= 1.0:
            raise ConfigError("netem.loss: must be in [0, 1]")
        if sc.netem.rtt < 0 or sc.netem.jitter < 0:
            raise ConfigError("netem: rtt_ms and jitter_ms must be nonnegative")
    if "camera" in doc:
        sc.camera = _parse_camera(doc["camera"], "camera")
    if "robot_home" in doc:
        sc.robot_home = _vec(doc["robot_home"], 3, "robot_home")
    if "operator_home" in doc:
        sc.operator_home = _vec(doc["operator_home"], 3, "operator_home")
    if "operator" in doc:
        o = doc["operator"]
        kind = o.get("kind", "idle")
        if kind not in ("idle", "spiral", "poke", "sweep", "external"):
            raise ConfigError(f"operator.kind: unknown kind {kind!r}")
        mode = o.get("mode", "twin")
        if mode not in ("twin", "video"):
            raise ConfigError(f"operator.mode: must be twin or video, got {mode!r}")
        sc.operator = OperatorConfig(
            kind=kind,
            mode=mode,
            gain=float(o.get("gain", 40.0)),
            speed=float(o.get("speed", 0.05)),
            lookahead=float(o.get("lookahead", 0.006)),
            tremor_amplitude=float(o.get("tremor_amplitude", 0.0)),
            tremor_frequency=float(o.get("tremor_frequency", 10.0)),
        )
        if sc.operator.gain <= 0 or sc.operator.speed <= 0:
            raise ConfigError("operator: gain and speed must be positive")
    if "spiral" in doc:
        s = doc["spiral"]
        sc.spiral = SpiralConfig(
            center=tuple(_vec(s.get("center", (0.29, 0.0)), 2, "spiral.center")),
            z=float(s.get("z", 0.0205)),
            max_radius=float(s.get("max_radius", 0.08)),
            turns=float(s.get("turns", 3.0)),
            samples_per_turn=int(s.get("samples_per_turn", 200)),
            width=float(s.get("width", 0.004)),
        )
        if sc.spiral.max_radius <= 0 or sc.spiral.turns <= 0:
            raise ConfigError("spiral: max_radius and turns must be positive")
    if "scene" in doc:
        s = doc["scene"]
        sc.environment = [
            _parse_object(d, f"scene.environment[{i}]") for i, d in enumerate(s.get("environment") or [])
        ]
        sc.real_objects = [
            _parse_object(d, f"scene.real_only[{i}]") for i, d in enumerate(s.get("real_only") or [])
        ]
        sc.registry = _parse_registry(s.get("registry"), "scene.registry")
        ids = [o.instance_id for o in sc.environment + sc.real_objects]
        if len(ids) != len(set(ids)):
            raise ConfigError("scene: duplicate object ids")
    if "sensing" in doc:
        s = doc["sensing"]
        params = DiscrepancyParams(
            window=int(s.get("window", 7)),
            tau=float(s.get("tau", 0.6)),
            erode_kernel=int(s.get("erode", 3)),
            dilate_kernel=int(s.get("dilate", 5)),
        )
        sc.sensing = SensingConfig(
            enabled=bool(s.get("enabled", False)),
            rate_hz=float(s.get("rate_hz", 10.0)),
            discrepancy=bool(s.get("discrepancy", True)),
            depth_sigma_coeff=float(s.get("depth_sigma_coeff", 0.004)),
            depth_dropout=float(s.get("depth_dropout", 0.0)),
            params=params,
        )
        if sc.sensing.rate_hz <= 0:
            raise ConfigError("sensing.rate_hz: must be positive")
    if "video" in doc:
        v = doc["video"]
        total = v.get("total_packets")
        sc.video = VideoConfig(
            emulate=bool(v.get("emulate", False)),
            frame_rate=float(v.get("frame_rate", 25.0)),
            packets_per_frame=int(v.get("packets_per_frame", 10)),
            packet_size=int(v.get("packet_size", 1500)),
            total_packets=None if total is None else int(total),
        )
        if sc.video.frame_rate <= 0 or sc.video.packets_per_frame <= 0 or sc.video.packet_size <= 0:
            raise ConfigError("video: rates and sizes must be positive")
    _validate_geometry(sc)
    return sc


def _validate_geometry(sc: Scenario) -> None:
    """Fence must sit inside the reachable annulus; spiral inside the fence."""
    model, fence = sc.arm, sc.fence
    corners = [
        (x, y, z)
        for x in (fence.lo[0], fence.hi[0])
        for y in (fence.lo[1], fence.hi[1])
        for z in (fence.lo[2], fence.hi[2])
    ]
    for cx, cy, cz in corners:
        if math.hypot(math.hypot(cx, cy), cz - model.d1) > model.reach + 1e-9:
            raise ConfigError(f"fence: corner {(cx, cy, cz)} beyond arm reach {model.reach:.4f}")
    shoulder = (0.0, 0.0, model.d1)
    nearest = [min(max(s, lo), hi) for s, lo, hi in zip(shoulder, fence.lo, fence.hi)]
    near_r = math.hypot(math.hypot(nearest[0], nearest[1]), nearest[2] - model.d1)
    if near_r < model.inner_reach - 1e-9:
        raise ConfigError("fence: overlaps the arm's unreachable inner region")
    sp = sc.spiral
    for dx, dy in ((sp.max_radius, 0), (-sp.max_radius, 0), (0, sp.max_radius), (0, -sp.max_radius)):
        p = Pose(sp.center[0] + dx, sp.center[1] + dy, sp.z)
        if not fence.contains(p):
            raise ConfigError("spiral: reference exceeds the geofence")


def load(path: str | Path) -> Scenario:
    """Load and validate a scenario YAML file."""
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"scenario file not found: {path}") from None
    except yaml.YAMLError as err:
        raise ConfigError(f"scenario file is not valid YAML: {err}") from None
    return from_dict(doc)
