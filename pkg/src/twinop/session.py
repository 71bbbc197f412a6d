"""Virtual-time session: one scheduler owns both twins, the links, and the
simulated remote world.

Cadences (all derived from a 1 ms base tick): haptic 1 kHz, pose publication
and robot commands 100 Hz, sensing/sync 10 Hz.  The operator couples in
through a latest-value stylus register (fast producers overwrite, the twin
reads the newest), and force feedback flows back through another register —
no queues anywhere on the local loop.

Tick order is fixed and documented: operator sample -> DT1 step (+ pose tx)
-> DT1<-DT2 link drains -> DT2 ingest -> command publish -> robot step ->
sensing/sync -> video accounting.  Everything is seeded; two runs of the
same scenario produce bit-identical traces.
"""

from __future__ import annotations

import json
import math
from dataclasses import replace

import numpy as np

from . import wire
from .discrepancy import DiscrepancyCloud, detect_discrepancies
from .kinematics import (
    JointVector,
    Pose,
    ReachabilityError,
    calibrate,
    forward_kinematics,
    interpolate_step,
    inverse_kinematics,
)
from .netem import Link, LinkConfig
from .scenario import NetemConfig, Scenario
from .scene import (
    Cylinder,
    RgbdFrame,
    SceneObject,
    Sphere,
    add_depth_noise,
    detect_known_objects,
    raycast,
    render_rgbd,
)
from .twinsync import (
    Dt1Controller,
    Dt1Ingestor,
    Dt2Controller,
    HapticSample,
    ScaleMode,
    TwinState,
    ZERO_FORCE,
    safety_clamp,
    sync_environment,
)

ROBOT_BODY_BASE_ID = -100
PROTECTIVE_INSET = 0.002  # m; DT2 keeps the real robot this far inside the fence
MAX_COMMAND_STEP = 0.005  # m per publication period; bounds executed chords


class Trace:
    """Deterministic line-delimited event log (JSON object per line)."""

    def __init__(self):
        self.events: list[dict] = []

    def emit(self, **ev) -> None:
        self.events.append(ev)

    def lines(self) -> list[str]:
        return [json.dumps(ev, sort_keys=True, separators=(",", ":")) for ev in self.events]

    def text(self) -> str:
        return "\n".join(self.lines()) + "\n"


def robot_body(model, joints: JointVector) -> list[SceneObject]:
    """Primitive stand-in geometry for the arm so it occludes and renders."""
    q1, q2, q3 = joints.as_tuple()
    shoulder = np.array([0.0, 0.0, model.d1])
    dir2 = np.array([math.cos(q2) * math.cos(q1), math.cos(q2) * math.sin(q1), math.sin(q2)])
    elbow = shoulder + model.l2 * dir2
    q23 = q2 + q3
    dir3 = np.array([math.cos(q23) * math.cos(q1), math.cos(q23) * math.sin(q1), math.sin(q23)])
    tip = elbow + model.l3 * dir3
    parts = [SceneObject(ROBOT_BODY_BASE_ID, -1, Cylinder((0.0, 0.0, 0.0), 0.035, model.d1), (90, 90, 96))]
    idx = 1
    for a, b, n in ((shoulder, elbow, 6), (elbow, tip, 5)):
        for i in range(n):
            c = a + (b - a) * (i / (n - 1) if n > 1 else 0.0)
            parts.append(
                SceneObject(ROBOT_BODY_BASE_ID - idx, -1, Sphere(tuple(c), 0.022), (120, 120, 128))
            )
            idx += 1
    return parts


class Session:
    """One running episode under virtual time."""

    def __init__(self, scenario: Scenario, trace: Trace | None = None):
        self.cfg = scenario
        self.trace = trace if trace is not None else Trace()
        self.model = scenario.arm
        self.fence = scenario.fence
        self.tick_dt = 1.0 / scenario.run.tick_hz
        self.tick_index = 0
        self._pose_period = max(1, scenario.run.tick_hz // scenario.run.pose_rate_hz)
        self._cmd_period = max(1, scenario.run.tick_hz // scenario.run.command_rate_hz)
        self._sense_period = max(1, int(round(scenario.run.tick_hz / scenario.sensing.rate_hz)))
        self._frame_period = max(1, int(round(scenario.run.tick_hz / scenario.video.frame_rate)))

        home_joints = inverse_kinematics(self.model, Pose(*scenario.robot_home))
        home_pose = forward_kinematics(self.model, home_joints, 1.0, False)
        self.home_pose = home_pose
        self.calib = calibrate(Pose(*scenario.operator_home), home_pose)

        env = {o.instance_id: o for o in scenario.environment}
        self.dt1 = TwinState(home_joints, home_pose, dict(env))
        self.dt2 = TwinState(home_joints, home_pose, dict(env))
        self.real_world: dict[int, SceneObject] = dict(env)
        for o in scenario.real_objects:
            self.real_world[o.instance_id] = o
        self.real_joints = home_joints
        self.registry = scenario.registry

        self.dt1c = Dt1Controller(
            self.model,
            self.calib,
            self.fence,
            scenario.scale,
            anchor_stylus=tuple(scenario.operator_home),
            anchor_robot=home_pose.position(),
        )
        self.dt2c = Dt2Controller(self.model, self.fence)
        self.dt1_ingest = Dt1Ingestor(self.registry)
        self._exec_tip = np.array(home_pose.position())
        self._robot_target: JointVector | None = None
        self._inset_fence = replace(
            self.fence,
            lo=tuple(v + PROTECTIVE_INSET for v in self.fence.lo),
            hi=tuple(v - PROTECTIVE_INSET for v in self.fence.hi),
        )

        self._netem_epoch = 0
        self.link_d12, self.link_d21 = self._make_links(scenario.netem)

        master = np.random.SeedSequence(scenario.run.seed)
        self._seed_rng = np.random.Generator(np.random.PCG64(master.spawn(1)[0]))

        self.stylus = HapticSample(tuple(scenario.operator_home), 1.0, False, 0.0, 0)
        self.force = ZERO_FORCE
        self._prev_force_mag = 0.0
        self.scale_mode = scenario.scale
        self._sync_seq = 0
        self._cloud_counter = 0
        self._video_packets_sent = 0
        self._tip_history: list[tuple[float, float, float]] = []
        self._tip_history_base = 0  # tick index of _tip_history[0]
        self._render_cache: dict[str, tuple[tuple, RgbdFrame]] = {}
        self._cast_cache: tuple[tuple, tuple] | None = None
        self._solo_cache: dict = {}
        self._solo_cache_version = 0
        self._world_version = 0
        self._dt2_version = 0
        self._pending: list[tuple] = []
        self.latest_detections = []
        self.latest_cloud_size = 0

    # -- wiring helpers ------------------------------------------------------

    def _make_links(self, cfg: NetemConfig) -> tuple[Link, Link]:
        ss = np.random.SeedSequence((self.cfg.run.seed, 0x6C696E6B, self._netem_epoch))
        s12, s21 = ss.spawn(2)
        self._netem_epoch += 1
        mk = lambda s: Link(
            LinkConfig(cfg.rtt / 2.0, cfg.jitter, cfg.loss, int(s.generate_state(1)[0]), cfg.reorder)
        )
        return mk(s12), mk(s21)

    @property
    def now(self) -> float:
        return self.tick_index * self.tick_dt

    def _next_seed(self) -> int:
        return int(self._seed_rng.integers(0, 2**63))

    # -- external inputs (operator, gateway) ---------------------------------

    def set_stylus(self, sample: HapticSample) -> None:
        """Latest-value register: overwrites any unread sample."""
        self.stylus = sample

    def set_scale(self, mode: ScaleMode) -> None:
        self.dt1c.set_mode(mode, self.stylus.position)
        self.scale_mode = mode
        self.trace.emit(ev="cfg", t=self.now, what="scale", mode=mode.name)

    def set_netem(self, cfg: NetemConfig) -> None:
        old12, old21 = self.link_d12, self.link_d21
        self.link_d12, self.link_d21 = self._make_links(cfg)
        self.link_d12.adopt_in_flight(old12)
        self.link_d21.adopt_in_flight(old21)
        self.cfg.netem = cfg
        self.trace.emit(
            ev="cfg", t=self.now, what="netem", rtt=cfg.rtt, loss=cfg.loss, jitter=cfg.jitter
        )

    def place_object(self, obj: SceneObject) -> None:
        """Introduce an object into the real remote scene."""
        self.real_world[obj.instance_id] = obj
        self._world_version += 1
        self.trace.emit(ev="cfg", t=self.now, what="place", id=obj.instance_id, cls=obj.class_id)

    def remove_object(self, instance_id: int) -> None:
        self.real_world.pop(instance_id, None)
        self._world_version += 1
        self.trace.emit(ev="cfg", t=self.now, what="remove", id=instance_id)

    def robot_tip_delayed(self, delay: float) -> tuple[float, float, float]:
        """Real robot tip as seen after `delay` seconds (video-style feedback)."""
        if not self._tip_history:
            return self.home_pose.position()
        idx = self.tick_index - int(round(delay / self.tick_dt)) - self._tip_history_base
        return self._tip_history[min(max(idx, 0), len(self._tip_history) - 1)]

    # -- per-tick pipeline ----------------------------------------------------

    def _trace_tx(self, link: Link, payload: bytes, ch: str, direction: str) -> None:
        rec = link.submit(payload, self.now)
        seq = wire._HEADER.unpack_from(payload)[3]
        if rec.dropped:
            self.trace.emit(ev="drop", t=self.now, ch=ch, dir=direction, seq=seq, n=len(payload))
        else:
            self.trace.emit(ev="tx", t=self.now, ch=ch, dir=direction, seq=seq, n=len(payload))

    @staticmethod
    def _channel_of(payload: bytes) -> str:
        kind = payload[3]
        return {wire.KIND_POSE: "pose", wire.KIND_OBJECT: "object", wire.KIND_CLOUD: "cloud"}.get(
            kind, "unknown"
        )

    def _cache_key(self, kind: str, n_objects: int, joints: JointVector) -> tuple:
        version = self._world_version if kind == "real" else self._dt2_version
        return (version, round(joints.q1, 9), round(joints.q2, 9), round(joints.q3, 9), n_objects)

    def _render(self, kind: str, scene_objs: list[SceneObject], cache_key: tuple) -> RgbdFrame:
        hit = self._render_cache.get(kind)
        if hit is not None and hit[0] == cache_key:
            return hit[1]
        frame = render_rgbd(scene_objs, self.cfg.camera, timestamp=self.now)
        self._render_cache[kind] = (cache_key, frame)
        return frame

    def _full_cast(self, scene_objs: list[SceneObject], cache_key: tuple):
        if self._cast_cache is None or self._cast_cache[0] != cache_key:
            z, inst, _ = raycast(scene_objs, self.cfg.camera)
            self._cast_cache = (cache_key, (z, inst))
        return self._cast_cache[1]

    def _sense(self) -> None:
        """One sensing round: detect, sync known objects, then run the
        discrepancy pipeline against a synthetic frame that already includes
        this round's accepted detections (a matched object must never count
        as its own discrepancy)."""
        cam = self.cfg.camera
        t_us = int(round(self.now * 1e6))
        real_objects = list(self.real_world.values())
        scene_objs = real_objects + robot_body(self.model, self.real_joints)
        key = self._cache_key("real", len(scene_objs), self.real_joints)
        clean = self._render("real", scene_objs, key)
        real_frame = add_depth_noise(
            clean, self.cfg.sensing.depth_sigma_coeff, self.cfg.sensing.depth_dropout, self._next_seed()
        )
        if self._solo_cache_version != self._world_version:
            self._solo_cache = {}
            self._solo_cache_version = self._world_version
        detections = detect_known_objects(
            real_frame,
            scene_objs,
            cam,
            self.registry,
            self._next_seed(),
            full_cast=self._full_cast(scene_objs, key),
            solo_cache=self._solo_cache,
        )
        self.latest_detections = detections
        empty = DiscrepancyCloud(np.zeros((0, 3)), self.now)
        result = sync_environment(
            self.dt1, self.dt2, detections, empty, self.registry,
            seq_start=self._sync_seq, t_us=t_us, now=self.now, cloud_id=self._cloud_counter,
        )
        self._sync_seq += len(result.object_datagrams)
        if result.accepted:
            self._dt2_version += 1
        cloud = empty
        if self.cfg.sensing.discrepancy:
            synth_objs = list(self.dt2.objects.values()) + robot_body(self.model, self.dt2.joints)
            synth_key = self._cache_key("synth", len(synth_objs), self.dt2.joints)
            synth_frame = self._render("synth", synth_objs, synth_key)
            cloud = detect_discrepancies(real_frame, synth_frame, cam, self.cfg.sensing.params)
        self.latest_cloud_size = len(cloud)
        cloud_datagrams = []
        if len(cloud) > 0:
            self.dt2.clouds = [cloud]
            self.dt2.last_update["cloud"] = self.now
            cloud_datagrams = wire.chunk_cloud(cloud.points, self._cloud_counter, self._sync_seq, t_us)
            self._sync_seq += len(cloud_datagrams)
            self._cloud_counter += 1
        for dg in result.object_datagrams:
            self._trace_tx(self.link_d21, dg, "object", "d21")
        for dg in cloud_datagrams:
            self._trace_tx(self.link_d21, dg, "cloud", "d21")
        self.trace.emit(
            ev="sense",
            t=self.now,
            ndet=len(detections),
            acc=len(result.accepted),
            cloud=len(cloud),
            tx_obj=len(result.object_datagrams),
            tx_cloud=len(cloud_datagrams),
        )

    def _publish_command(self) -> None:
        """100 Hz publication with the protective layer applied.

        The executed tip walks toward DT2's latest valid target in bounded
        Cartesian steps and is clamped to an inset fence, so the real robot's
        interpolated path can never leave the geofence even across large
        target jumps (veto gaps, forged-then-rejected poses).
        """
        target = self.dt2c.command
        if target is None:
            return
        tgt_pose = self.dt2.pose
        goal = np.array([tgt_pose.x, tgt_pose.y, tgt_pose.z])
        step = goal - self._exec_tip
        dist = float(np.linalg.norm(step))
        if dist > MAX_COMMAND_STEP:
            step = step * (MAX_COMMAND_STEP / dist)
        tip = self._exec_tip + step
        clamped, _ = safety_clamp(Pose(tip[0], tip[1], tip[2], tgt_pose.o, tgt_pose.c), self._inset_fence)
        try:
            cmd = inverse_kinematics(self.model, clamped)
        except ReachabilityError as err:
            clamped, _ = safety_clamp(err.nearest, self._inset_fence)
            cmd = inverse_kinematics(self.model, clamped)
        self._exec_tip = np.array(clamped.position())
        self._robot_target = cmd
        self.trace.emit(ev="cmd", t=self.now, q=[cmd.q1, cmd.q2, cmd.q3])

    def apply_pending(self) -> None:
        """Apply queued gateway commands at a tick boundary (atomicity)."""
        pending, self._pending = self._pending, []
        for fn, args in pending:
            fn(*args)

    def queue(self, fn, *args) -> None:
        self._pending.append((fn, args))

    def tick(self) -> None:
        self.apply_pending()
        t = self.now
        emit_pose = self.tick_index % self._pose_period == 0
        sample = self.stylus
        force, datagram, veto = self.dt1c.step(
            self.dt1, sample, emit=emit_pose, t_us=int(round(t * 1e6))
        )
        self.force = force
        if force.magnitude > 0 and self._prev_force_mag == 0:
            self.trace.emit(ev="force_on", t=t, mag=force.magnitude)
        self._prev_force_mag = force.magnitude
        if emit_pose and veto:
            self.trace.emit(ev="veto", t=t, where="dt1")
        if datagram is not None:
            self._trace_tx(self.link_d12, datagram, "pose", "d12")

        for payload in self.link_d12.drain(t):
            self.trace.emit(
                ev="rx", t=t, ch=self._channel_of(payload), dir="d12", n=len(payload)
            )
            before = self.dt2c.vetoed
            self.dt2c.ingest(self.dt2, payload, t)
            if self.dt2c.vetoed > before:
                self.trace.emit(ev="veto", t=t, where="dt2")

        if self.tick_index % self._cmd_period == 0:
            self._publish_command()
            tip = forward_kinematics(self.model, self.real_joints)
            self.trace.emit(
                ev="rob",
                t=t,
                q=[self.real_joints.q1, self.real_joints.q2, self.real_joints.q3],
                tip=[tip.x, tip.y, tip.z],
                f=self.force.magnitude,
            )

        if self._robot_target is not None:
            self.real_joints = interpolate_step(
                self.real_joints, self._robot_target, self.tick_dt, self.model
            )
        rt = forward_kinematics(self.model, self.real_joints)
        self._tip_history.append((rt.x, rt.y, rt.z))
        if len(self._tip_history) > 400_000:  # bound memory on long live sessions
            drop = 200_000
            del self._tip_history[:drop]
            self._tip_history_base += drop

        if self.cfg.sensing.enabled and self.tick_index % self._sense_period == 0:
            self._sense()

        for payload in self.link_d21.drain(t):
            self.trace.emit(
                ev="rx", t=t, ch=self._channel_of(payload), dir="d21", n=len(payload)
            )
            self.dt1_ingest.ingest(self.dt1, payload, t)

        if self.cfg.video.emulate and self.tick_index % self._frame_period == 0:
            v = self.cfg.video
            pkts = v.packets_per_frame
            if v.total_packets is not None:
                pkts = min(pkts, v.total_packets - self._video_packets_sent)
            if pkts > 0:
                self._video_packets_sent += pkts
                self.trace.emit(ev="video", t=t, pkts=pkts, n=pkts * v.packet_size)

        self.tick_index += 1

    def run_ticks(self, n: int) -> None:
        for _ in range(n):
            self.tick()

    def run_seconds(self, seconds: float) -> None:
        self.run_ticks(int(round(seconds / self.tick_dt)))
