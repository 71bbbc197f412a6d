"""Twin-loop state machines.

Loop 1 couples the operator to the local twin (DT1): every haptic sample is
scaled, calibrated, geofence-clamped, solved to joints, and answered with an
immediate contact force — no network hop anywhere on that path.  Loop 2
carries DT1's pose to the remote twin (DT2) as 46-byte datagrams; DT2
re-clamps (protective layer), resolves joints, and republishes commands to
the real robot at a fixed cadence, while environment sync sends cataloged
detections back as coordinates and everything else as discrepancy clouds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import wire
from .discrepancy import DiscrepancyCloud
from .kinematics import (
    ArmModel,
    CalibrationTransform,
    JointVector,
    Pose,
    ReachabilityError,
    forward_kinematics,
    interpolate_step,
    inverse_kinematics,
)
from .scene import Box, Cylinder, Detection, Registry, SceneObject, Shape, Sphere

CONFIDENCE_GATE = 0.9  # >= gate: known-object path; below: discrepancy cloud path
DEFAULT_STIFFNESS = 300.0  # N/m
DEFAULT_FORCE_CAP = 3.3  # N, operator-device class maximum


@dataclass(frozen=True)
class ScaleMode:
    """Haptic-to-robot displacement ratio: `factor` haptic mm per robot mm."""

    name: str
    factor: float

    def __post_init__(self):
        if self.factor <= 0:
            raise ValueError("scale factor must be positive")


MACRO = ScaleMode("macro", 0.7)
NORMAL = ScaleMode("normal", 1.0)
MICRO = ScaleMode("micro", 1.3)
SCALE_MODES = {m.name: m for m in (MACRO, NORMAL, MICRO)}


@dataclass(frozen=True)
class HapticSample:
    position: tuple[float, float, float]  # stylus, operator frame, meters
    open_fraction: float = 1.0
    close: bool = False
    t: float = 0.0
    index: int = 0


@dataclass(frozen=True)
class Geofence:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    margin: float = 0.05

    def __post_init__(self):
        if not all(l < h for l, h in zip(self.lo, self.hi)):
            raise ValueError("fence min must be below max per axis")

    def contains(self, pose: Pose, eps: float = 1e-9) -> bool:
        return all(
            l - eps <= v <= h + eps for v, l, h in zip(pose.position(), self.lo, self.hi)
        )


@dataclass(frozen=True)
class ForceFeedback:
    force: tuple[float, float, float]
    magnitude: float
    cap: float


ZERO_FORCE = ForceFeedback((0.0, 0.0, 0.0), 0.0, DEFAULT_FORCE_CAP)


@dataclass
class TwinState:
    """One twin's live state; pose is kept equal to FK(joints) at all times."""

    joints: JointVector
    pose: Pose
    objects: dict[int, SceneObject] = field(default_factory=dict)
    clouds: list[DiscrepancyCloud] = field(default_factory=list)
    last_update: dict[str, float] = field(default_factory=dict)
    ik_clamped: bool = False

    def set_joints(self, model: ArmModel, joints: JointVector, o: float, c: bool) -> None:
        self.joints = joints
        self.pose = forward_kinematics(model, joints, o, c)


def apply_motion_scale(delta: tuple[float, float, float], mode: ScaleMode) -> tuple[float, float, float]:
    """Haptic displacement -> robot displacement (divide by the mode factor)."""
    return (delta[0] / mode.factor, delta[1] / mode.factor, delta[2] / mode.factor)


def safety_clamp(target: Pose, fence: Geofence) -> tuple[Pose, bool]:
    """Clamp a pose into the fence; veto when the violation exceeds the margin.

    veto=True means the pose must not be forwarded at all.
    """
    clamped = []
    violation = 0.0
    for v, lo, hi in zip(target.position(), fence.lo, fence.hi):
        c = min(max(v, lo), hi)
        clamped.append(c)
        violation = max(violation, abs(v - c))
    pose = replace(target, x=clamped[0], y=clamped[1], z=clamped[2])
    # epsilon keeps a violation of exactly one margin on the clamp side
    return pose, violation > fence.margin + 1e-12


def _penetration(shape: Shape, p: np.ndarray):
    """Depth and outward unit normal for a point inside a shape, else None."""
    if isinstance(shape, Sphere):
        d = p - np.asarray(shape.center)
        dist = float(np.linalg.norm(d))
        if dist >= shape.radius:
            return None
        n = d / dist if dist > 0 else np.array([0.0, 0.0, 1.0])
        return shape.radius - dist, n
    if isinstance(shape, Box):
        local = p - np.asarray(shape.center)
        he = np.asarray(shape.half_extents)
        gaps = he - np.abs(local)
        if np.any(gaps <= 0):
            return None
        axis = int(np.argmin(gaps))
        n = np.zeros(3)
        n[axis] = 1.0 if local[axis] >= 0 else -1.0
        return float(gaps[axis]), n
    if isinstance(shape, Cylinder):
        base = np.asarray(shape.base)
        dz_low = p[2] - base[2]
        dz_high = base[2] + shape.height - p[2]
        radial = p[:2] - base[:2]
        rho = float(np.linalg.norm(radial))
        gap_side = shape.radius - rho
        if dz_low <= 0 or dz_high <= 0 or gap_side <= 0:
            return None
        best = min(gap_side, dz_low, dz_high)
        if best == gap_side:
            n2 = radial / rho if rho > 0 else np.array([1.0, 0.0])
            n = np.array([n2[0], n2[1], 0.0])
        elif best == dz_high:
            n = np.array([0.0, 0.0, 1.0])
        else:
            n = np.array([0.0, 0.0, -1.0])
        return best, n
    return None


def contact_force(
    objects,
    tool_tip: tuple[float, float, float],
    stiffness: float = DEFAULT_STIFFNESS,
    cap: float = DEFAULT_FORCE_CAP,
) -> ForceFeedback:
    """Spring force opposing the deepest penetration of the tool tip.

    F = k * d along the outward surface normal, magnitude capped; zero in
    free space.  Mirrors a contact sensor at the tool tip.
    """
    p = np.asarray(tool_tip, dtype=float)
    best = None
    for obj in objects:
        hit = _penetration(obj.shape, p)
        if hit is not None and (best is None or hit[0] > best[0]):
            best = hit
    if best is None:
        return ForceFeedback((0.0, 0.0, 0.0), 0.0, cap)
    depth, normal = best
    mag = min(stiffness * depth, cap)
    f = normal * mag
    return ForceFeedback((float(f[0]), float(f[1]), float(f[2])), mag, cap)


class Dt1Controller:
    """Operator-side twin: haptic sample in, force + pose datagram out.

    Keeps the scale-anchor pair so switching modes mid-run never jumps the
    target, and owns the outgoing pose sequence counter.
    """

    def __init__(
        self,
        model: ArmModel,
        calib: CalibrationTransform,
        fence: Geofence,
        mode: ScaleMode = NORMAL,
        *,
        stiffness: float = DEFAULT_STIFFNESS,
        force_cap: float = DEFAULT_FORCE_CAP,
        anchor_stylus: tuple[float, float, float] | None = None,
        anchor_robot: tuple[float, float, float] | None = None,
    ):
        self.model = model
        self.calib = calib
        self.fence = fence
        self.mode = mode
        self.stiffness = stiffness
        self.force_cap = force_cap
        self.seq = 0
        self._anchor_stylus = anchor_stylus
        self._anchor_robot = anchor_robot
        self._last_target = anchor_robot

    def set_mode(self, mode: ScaleMode, current_stylus=None) -> None:
        """Switch scale; rebases anchors so the current pose is a fixed point."""
        if current_stylus is not None and self._anchor_robot is not None:
            self._anchor_stylus = tuple(current_stylus)
            self._anchor_robot = self._last_target
        self.mode = mode

    def step(
        self, state: TwinState, sample: HapticSample, *, emit: bool, t_us: int
    ) -> tuple[ForceFeedback, bytes | None, bool]:
        """One haptic tick. Returns (force, datagram or None, vetoed)."""
        if self._anchor_stylus is None:
            self._anchor_stylus = tuple(sample.position)
            self._anchor_robot = (state.pose.x, state.pose.y, state.pose.z)
        delta = tuple(s - a for s, a in zip(sample.position, self._anchor_stylus))
        scaled = apply_motion_scale(delta, self.mode)
        dx, dy, dz = self.calib.apply_delta(*scaled)
        ax, ay, az = self._anchor_robot
        target = Pose(ax + dx, ay + dy, az + dz, sample.open_fraction, sample.close)
        self._last_target = (target.x, target.y, target.z)
        clamped, veto = safety_clamp(target, self.fence)
        try:
            joints = inverse_kinematics(self.model, clamped)
            state.ik_clamped = False
        except ReachabilityError as err:
            clamped = err.nearest
            joints = inverse_kinematics(self.model, clamped)
            state.ik_clamped = True
        state.set_joints(self.model, joints, sample.open_fraction, sample.close)
        state.last_update["haptic"] = sample.t
        force = contact_force(
            state.objects.values(), state.pose.position(), self.stiffness, self.force_cap
        )
        datagram = None
        if emit and not veto:
            datagram = wire.encode_pose(state.pose, self.seq, t_us)
            self.seq += 1
        return force, datagram, veto


class Dt2Controller:
    """Remote-side twin: ingests pose datagrams, re-clamps, commands the robot."""

    def __init__(self, model: ArmModel, fence: Geofence):
        self.model = model
        self.fence = fence
        self.last_seq = -1
        self.decode_errors = 0
        self.stale_discarded = 0
        self.vetoed = 0
        self.command: JointVector | None = None

    def ingest(self, state: TwinState, datagram: bytes, now: float) -> JointVector | None:
        """Apply one received pose datagram; returns the new joint command.

        Stale and corrupt datagrams are dropped; out-of-fence poses beyond the
        margin are vetoed so they never reach the real robot.
        """
        try:
            msg = wire.decode(datagram)
        except wire.WireError:
            self.decode_errors += 1
            return None
        if not isinstance(msg, wire.PoseMessage):
            self.decode_errors += 1
            return None
        if msg.seq <= self.last_seq:
            self.stale_discarded += 1
            return None
        self.last_seq = msg.seq
        clamped, veto = safety_clamp(msg.pose, self.fence)
        if veto:
            self.vetoed += 1
            return None
        try:
            joints = inverse_kinematics(self.model, clamped)
        except ReachabilityError as err:
            joints = inverse_kinematics(self.model, err.nearest)
        state.set_joints(self.model, joints, clamped.o, clamped.c)
        state.last_update["pose"] = now
        self.command = joints
        return joints


def real_robot_step(joints: JointVector, command: JointVector | None, dt: float, model: ArmModel) -> JointVector:
    """Advance the real robot toward the latest command under velocity limits.

    Absent any command the robot holds position; an isolated lost datagram is
    concealed because motion keeps interpolating toward the last target.
    """
    if command is None:
        return joints
    return interpolate_step(joints, command, dt, model)


@dataclass
class SyncResult:
    object_datagrams: list[bytes]
    cloud_datagrams: list[bytes]
    accepted: list[Detection]
    routed_to_cloud: list[Detection]


def sync_environment(
    dt1: TwinState,
    dt2: TwinState,
    detections: list[Detection],
    cloud: DiscrepancyCloud,
    registry: Registry,
    *,
    seq_start: int,
    t_us: int,
    now: float,
    cloud_id: int,
) -> SyncResult:
    """Route sensed changes: coordinates for confident known objects, a point
    cloud for everything else.

    Detections at or above the 0.9 gate become cataloged SceneObjects in both
    twins (DT2 immediately; DT1 on datagram delivery) and one 46-byte object
    datagram each.  The discrepancy cloud is integrated into DT2 and chunked
    for transmission whenever it is nonempty.
    """
    accepted, low = [], []
    object_datagrams = []
    seq = seq_start
    for det in detections:
        known = det.class_id in registry and det.confidence >= CONFIDENCE_GATE
        if not known:
            low.append(det)
            continue
        accepted.append(det)
        dt2.objects[det.instance_id] = registry.instantiate(
            det.class_id, det.instance_id, det.position
        )
        dt2.last_update["object"] = now
        object_datagrams.append(
            wire.encode_object(det.class_id, det.confidence, det.instance_id, det.position, seq, t_us)
        )
        seq += 1
    cloud_datagrams = []
    if len(cloud) > 0:
        dt2.clouds = [cloud]
        dt2.last_update["cloud"] = now
        cloud_datagrams = wire.chunk_cloud(cloud.points, cloud_id, seq, t_us)
    return SyncResult(object_datagrams, cloud_datagrams, accepted, low)


class Dt1Ingestor:
    """DT1-side handler for the return channel (objects + cloud chunks)."""

    def __init__(self, registry: Registry):
        self.registry = registry
        self._chunks: dict[int, list[wire.CloudChunkMessage]] = {}
        self._latest_cloud_id = -1
        self.decode_errors = 0

    def ingest(self, state: TwinState, datagram: bytes, now: float) -> None:
        try:
            msg = wire.decode(datagram)
        except wire.WireError:
            self.decode_errors += 1
            return
        if isinstance(msg, wire.ObjectMessage):
            if msg.class_id in self.registry:
                state.objects[msg.instance_id] = self.registry.instantiate(
                    msg.class_id, msg.instance_id, msg.position
                )
                state.last_update["object"] = now
            return
        if isinstance(msg, wire.CloudChunkMessage):
            if msg.cloud_id < self._latest_cloud_id:
                return  # chunk of an outdated cloud
            if msg.cloud_id > self._latest_cloud_id:
                # a newer cloud starts: finalize whatever arrived of the old one
                self._finalize(state, now)
                self._latest_cloud_id = msg.cloud_id
                self._chunks[msg.cloud_id] = []
            self._chunks[msg.cloud_id].append(msg)
            points, complete = wire.reassemble_cloud(self._chunks[msg.cloud_id])
            if complete:
                state.clouds = [DiscrepancyCloud(points.astype(float), now)]
                state.last_update["cloud"] = now
                del self._chunks[msg.cloud_id]

    def _finalize(self, state: TwinState, now: float) -> None:
        pending = self._chunks.pop(self._latest_cloud_id, None)
        if pending:
            points, _ = wire.reassemble_cloud(pending)
            state.clouds = [DiscrepancyCloud(points.astype(float), now)]
            state.last_update["cloud"] = now
