"""Benchmark harness: spiral tracing, scripted operators, metrics, episodes.

The scripted operator is a deterministic pursuit controller standing in for
a human: it chases a point a fixed lead ahead on the reference path, with
its commanded velocity proportional to the perceived error and its hand
speed capped.  What it perceives is the knob that reproduces the latency
contrast — the local twin pose (twin mode, no network in the loop) or the
real robot pose delayed by the network plus one video frame (video mode).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kinematics import Pose
from .scenario import OperatorConfig, Scenario, ConfigError
from .session import Session, Trace
from .twinsync import HapticSample, ScaleMode


@dataclass
class SpiralReference:
    """Archimedean spiral r = b * theta sampled as a polyline."""

    b: float
    turns: float
    z: float
    width: float  # printed-path half-width
    samples: np.ndarray  # (n, 3)
    cum_arc: np.ndarray = field(init=False)

    def __post_init__(self):
        seg = np.linalg.norm(np.diff(self.samples, axis=0), axis=1)
        self.cum_arc = np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def total_arc(self) -> float:
        return float(self.cum_arc[-1])

    def point_at_arc(self, s: float) -> np.ndarray:
        s = min(max(s, 0.0), self.total_arc)
        i = int(np.searchsorted(self.cum_arc, s, side="right")) - 1
        i = min(i, len(self.samples) - 2)
        seg = self.cum_arc[i + 1] - self.cum_arc[i]
        f = (s - self.cum_arc[i]) / seg if seg > 0 else 0.0
        return self.samples[i] + f * (self.samples[i + 1] - self.samples[i])

    def analytic_arc_length(self) -> float:
        """Closed-form Archimedean arc length, the oracle for the polyline."""
        theta = 2.0 * math.pi * self.turns
        return (self.b / 2.0) * (theta * math.sqrt(1 + theta**2) + math.asinh(theta))


def spiral_reference(
    b: float,
    turns: float,
    samples_per_turn: int,
    z_table: float,
    width: float,
    center: tuple[float, float] = (0.0, 0.0),
) -> SpiralReference:
    if b <= 0 or turns <= 0 or samples_per_turn < 2 or width <= 0:
        raise ConfigError("spiral: parameters must be positive")
    n = int(round(turns * samples_per_turn)) + 1
    theta = np.linspace(0.0, 2.0 * math.pi * turns, n)
    r = b * theta
    pts = np.stack(
        [center[0] + r * np.cos(theta), center[1] + r * np.sin(theta), np.full(n, z_table)],
        axis=1,
    )
    return SpiralReference(b, turns, z_table, width, pts)


def spiral_from_scenario(sc: Scenario) -> SpiralReference:
    sp = sc.spiral
    b = sp.max_radius / (2.0 * math.pi * sp.turns)
    return spiral_reference(b, sp.turns, sp.samples_per_turn, sp.z, sp.width, sp.center)


@dataclass
class OperatorModel:
    gain: float = 40.0  # 1/s
    speed: float = 0.05  # stylus speed cap, m/s
    tremor_amplitude: float = 0.0
    tremor_frequency: float = 10.0
    perception: str = "twin"  # twin | video


class SpiralOperator:
    """Pursuit controller tracing the spiral through the haptic interface."""

    SEARCH_BACK = 4
    SEARCH_AHEAD = 30

    def __init__(
        self,
        ref: SpiralReference,
        model: OperatorModel,
        scale: ScaleMode,
        operator_home: tuple[float, float, float],
        robot_home: tuple[float, float, float],
        lookahead: float = 0.006,
        video_delay: float = 0.0,
    ):
        self.ref = ref
        self.model = model
        self.scale = scale
        self.lookahead = lookahead
        self.video_delay = video_delay
        self.stylus = np.array(operator_home, dtype=float)
        self.operator_home = np.array(operator_home, dtype=float)
        self.robot_home = np.array(robot_home, dtype=float)
        self.progress = 0.0
        self._seg = 0
        self.done = False
        self.done_at: float | None = None
        self._index = 0
        self._pts = ref.samples
        self._dirs = np.diff(ref.samples, axis=0)
        self._lens = np.linalg.norm(self._dirs, axis=1)
        self._tol = max(ref.width, 0.002)

    def _perceived(self, session: Session) -> np.ndarray:
        if self.model.perception == "video":
            return np.array(session.robot_tip_delayed(self.video_delay))
        p = session.dt1.pose
        return np.array([p.x, p.y, p.z])

    def _advance_progress(self, p: np.ndarray) -> None:
        lo = max(0, self._seg - self.SEARCH_BACK)
        hi = min(len(self._lens), self._seg + self.SEARCH_AHEAD)
        starts = self._pts[lo:hi]
        dirs = self._dirs[lo:hi]
        lens = self._lens[lo:hi]
        rel = p[None, :] - starts
        tt = np.clip(np.einsum("ij,ij->i", rel, dirs) / np.maximum(lens**2, 1e-18), 0.0, 1.0)
        d = np.linalg.norm(rel - tt[:, None] * dirs, axis=1)
        k = int(np.argmin(d))
        arc = self.ref.cum_arc[lo + k] + tt[k] * lens[k]
        if arc > self.progress:
            self.progress = arc
            self._seg = lo + k

    def sample(self, session: Session, t: float) -> HapticSample:
        dt = session.tick_dt
        self._index += 1
        perceived = self._perceived(session)
        self._advance_progress(perceived)
        target = self.ref.point_at_arc(self.progress + self.lookahead)
        err = target - perceived
        if not self.done and self.progress >= self.ref.total_arc - 1e-9:
            if float(np.linalg.norm(self.ref.samples[-1] - perceived)) <= self._tol:
                self.done = True
                self.done_at = t
        vel = self.model.gain * err  # desired robot-space velocity
        cap = self.model.speed / self.scale.factor
        n = float(np.linalg.norm(vel))
        if n > cap:
            vel *= cap / n
        self.stylus = self.stylus + vel * dt * self.scale.factor
        out = self.stylus
        if self.model.tremor_amplitude > 0:
            f = 2.0 * math.pi * self.model.tremor_frequency * t
            out = out + self.model.tremor_amplitude * np.array([math.sin(f), math.cos(f), 0.0])
        return HapticSample(tuple(out), 1.0, True, t, self._index)


class IdleOperator:
    """Holds the stylus at home; used by accounting-only scenarios."""

    def __init__(self, operator_home):
        self.home = tuple(operator_home)
        self.done = False
        self.done_at = None
        self._index = 0

    def sample(self, session: Session, t: float) -> HapticSample:
        self._index += 1
        return HapticSample(self.home, 1.0, False, t, self._index)


class PokeOperator:
    """Descends into the work surface and holds: exercises contact force."""

    def __init__(self, operator_home, *, start: float = 0.5, depth: float = 0.032, speed: float = 0.03):
        self.home = np.array(operator_home, dtype=float)
        self.start = start
        self.depth = depth
        self.speed = speed
        self.done = False
        self.done_at = None
        self._index = 0

    def sample(self, session: Session, t: float) -> HapticSample:
        self._index += 1
        dz = min(self.depth, max(0.0, (t - self.start)) * self.speed)
        pos = self.home - (0.0, 0.0, dz)
        return HapticSample(tuple(pos), 1.0, True, t, self._index)


class SweepOperator:
    """Adversarial: repeatedly commands poses far outside the geofence."""

    def __init__(self, operator_home, *, reach_out: float = 0.33, period: float = 2.0):
        self.home = np.array(operator_home, dtype=float)
        self.reach_out = reach_out
        self.period = period
        self.done = False
        self.done_at = None
        self._index = 0

    def sample(self, session: Session, t: float) -> HapticSample:
        self._index += 1
        w = 2.0 * math.pi / self.period
        dx = self.reach_out * 0.5 * (1.0 - math.cos(w * t))
        dy = 0.25 * math.sin(w * t / 1.7)
        dz = 0.08 * math.sin(w * t / 2.3)
        pos = self.home + (dx, dy, dz)
        return HapticSample(tuple(pos), 1.0, True, t, self._index)


def build_operator(sc: Scenario, ref: SpiralReference | None):
    cfg = sc.operator
    if cfg.kind == "idle" or cfg.kind == "external":
        return IdleOperator(sc.operator_home)
    if cfg.kind == "poke":
        return PokeOperator(sc.operator_home)
    if cfg.kind == "sweep":
        return SweepOperator(sc.operator_home)
    if cfg.kind == "spiral":
        if ref is None:
            ref = spiral_from_scenario(sc)
        model = OperatorModel(
            gain=cfg.gain,
            speed=cfg.speed,
            tremor_amplitude=cfg.tremor_amplitude,
            tremor_frequency=cfg.tremor_frequency,
            perception=cfg.mode,
        )
        video_delay = sc.netem.rtt / 2.0 + 1.0 / sc.video.frame_rate
        return SpiralOperator(
            ref, model, sc.scale, sc.operator_home, sc.robot_home, cfg.lookahead, video_delay
        )
    raise ConfigError(f"operator.kind: cannot build {cfg.kind!r}")


# ---------------------------------------------------------------------------
# Metrics


@dataclass
class DeviationStats:
    mean: float
    max: float
    excursions: int


def deviation_metrics(traced: np.ndarray, ref: SpiralReference) -> DeviationStats:
    """Distance statistics of a traced polyline against the reference.

    Excursions are contiguous runs of samples farther than the printed-path
    half-width from the reference.
    """
    traced = np.asarray(traced, dtype=float)
    if traced.ndim != 2 or len(traced) == 0:
        raise ValueError("traced polyline must be a nonempty (n, 3) array")
    starts = ref.samples[:-1]
    dirs = np.diff(ref.samples, axis=0)
    lens2 = np.maximum(np.einsum("ij,ij->i", dirs, dirs), 1e-18)
    dists = np.empty(len(traced))
    chunk = 512
    for i in range(0, len(traced), chunk):
        p = traced[i : i + chunk]
        rel = p[:, None, :] - starts[None, :, :]
        tt = np.clip(np.einsum("pnd,nd->pn", rel, dirs) / lens2[None, :], 0.0, 1.0)
        d = np.linalg.norm(rel - tt[..., None] * dirs[None, :, :], axis=2)
        dists[i : i + chunk] = d.min(axis=1)
    over = dists > ref.width
    excursions = int(np.count_nonzero(over[1:] & ~over[:-1]) + (1 if over[0] else 0))
    return DeviationStats(float(dists.mean()), float(dists.max()), excursions)


@dataclass
class TaskMetrics:
    completion_time: float
    incomplete: bool
    bytes_tx: dict[str, int]
    packets_tx: dict[str, int]
    deviation_mean: float
    deviation_max: float
    excursions: int

    def to_dict(self) -> dict:
        return {
            "completion_time": self.completion_time,
            "incomplete": self.incomplete,
            "bytes_tx": dict(self.bytes_tx),
            "packets_tx": dict(self.packets_tx),
            "deviation_mean": self.deviation_mean,
            "deviation_max": self.deviation_max,
            "excursions": self.excursions,
        }


@dataclass
class EpisodeResult:
    metrics: TaskMetrics
    trace: Trace
    session: Session
    ref: SpiralReference | None

    def trace_text(self) -> str:
        return self.trace.text()


def metrics_from_trace(
    trace: Trace, ref: SpiralReference | None, completion_time: float, incomplete: bool
) -> TaskMetrics:
    bytes_tx: dict[str, int] = {"pose": 0, "object": 0, "cloud": 0, "video": 0}
    packets_tx: dict[str, int] = {"pose": 0, "object": 0, "cloud": 0, "video": 0}
    tips = []
    for ev in trace.events:
        kind = ev.get("ev")
        if kind in ("tx", "drop"):  # dropped datagrams were still transmitted
            bytes_tx[ev["ch"]] += ev["n"]
            packets_tx[ev["ch"]] += 1
        elif kind == "video":
            bytes_tx["video"] += ev["n"]
            packets_tx["video"] += ev["pkts"]
        elif kind == "rob":
            tips.append(ev["tip"])
    if ref is not None and tips:
        stats = deviation_metrics(np.array(tips), ref)
    else:
        stats = DeviationStats(0.0, 0.0, 0)
    return TaskMetrics(
        completion_time, incomplete, bytes_tx, packets_tx, stats.mean, stats.max, stats.excursions
    )


def run_episode(sc: Scenario, trace: Trace | None = None) -> EpisodeResult:
    """Run one scenario to completion (or timeout) under virtual time."""
    ref = spiral_from_scenario(sc) if sc.operator.kind == "spiral" else None
    session = Session(sc, trace)
    operator = build_operator(sc, ref)
    max_ticks = int(round(sc.run.duration / session.tick_dt))
    while session.tick_index < max_ticks and not operator.done:
        session.set_stylus(operator.sample(session, session.now))
        session.tick()
    incomplete = not operator.done and operator.done_at is None and sc.operator.kind == "spiral"
    completion = operator.done_at if operator.done_at is not None else session.now
    session.trace.emit(ev="done", t=session.now, reason="timeout" if incomplete else "complete")
    drain_ticks = int(round(sc.run.drain / session.tick_dt))
    for _ in range(drain_ticks):
        session.tick()
    metrics = metrics_from_trace(session.trace, ref, completion, incomplete)
    return EpisodeResult(metrics, session.trace, session, ref)


def bandwidth_report(metrics: TaskMetrics) -> dict:
    """Conventional video volume vs coordinate-datagram volume for one episode."""
    conv_bytes = metrics.bytes_tx["video"]
    conv_packets = metrics.packets_tx["video"]
    coord_bytes = metrics.bytes_tx["object"]
    coord_packets = metrics.packets_tx["object"]
    return {
        "conventional_bytes": conv_bytes,
        "conventional_packets": conv_packets,
        "coordinate_bytes": coord_bytes,
        "coordinate_packets": coord_packets,
        "byte_ratio": conv_bytes / coord_bytes if coord_bytes else math.inf,
        "packet_ratio": conv_packets / coord_packets if coord_packets else math.inf,
        "reduction_at_least_25x": coord_bytes * 25 <= conv_bytes,
    }
