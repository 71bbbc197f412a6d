"""Closed-form kinematics for a 3-DOF arm (base yaw + two-link planar chain).

The arm stands in for a small industrial manipulator: joint 1 rotates the
base about +z, joints 2 and 3 form a planar shoulder/elbow pair in the
vertical plane selected by the base yaw.  All solvers are pure functions,
deterministic, and always return the elbow-down branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

TWO_PI = 2.0 * math.pi


class JointLimitError(ValueError):
    """A joint value lies outside the model's limits."""


class ReachabilityError(ValueError):
    """Target outside the reachable annulus; carries the nearest reachable pose."""

    def __init__(self, message: str, nearest: "Pose"):
        super().__init__(message)
        self.nearest = nearest


@dataclass(frozen=True)
class JointVector:
    """Joint angles in radians: base yaw, shoulder pitch, elbow pitch."""

    q1: float
    q2: float
    q3: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.q1, self.q2, self.q3)


@dataclass(frozen=True)
class Pose:
    """End-effector state: position in the robot base frame plus gripper state.

    ``o`` is the gripper aperture fraction in [0, 1]; ``c`` is the
    close/contact flag.
    """

    x: float
    y: float
    z: float
    o: float = 1.0
    c: bool = False

    def position(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)


def _default_limits() -> tuple[tuple[float, float], ...]:
    return ((-math.pi, math.pi),) * 3


@dataclass(frozen=True)
class ArmModel:
    """Link constants of the arm; defaults give a desk-scale reach of ~0.46 m."""

    d1: float = 0.1519
    l2: float = 0.2435
    l3: float = 0.2132
    velocity_limit: float = 3.14
    joint_limits: tuple[tuple[float, float], ...] = field(default_factory=_default_limits)

    def __post_init__(self):
        if self.d1 <= 0 or self.l2 <= 0 or self.l3 <= 0:
            raise ValueError("link lengths must be positive")
        if self.l2 < self.l3:
            raise ValueError("l2 must be >= l3 for elbow-down branch selection")

    @property
    def reach(self) -> float:
        return self.l2 + self.l3

    @property
    def inner_reach(self) -> float:
        return self.l2 - self.l3

    def check_limits(self, q: JointVector) -> None:
        for value, (lo, hi) in zip(q.as_tuple(), self.joint_limits):
            if not math.isfinite(value) or value < lo or value > hi:
                raise JointLimitError(f"joint value {value} outside [{lo}, {hi}]")


@dataclass(frozen=True)
class CalibrationTransform:
    """Maps operator-frame points into the robot base frame."""

    translation: tuple[float, float, float]
    yaw: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def apply(self, pose: Pose) -> Pose:
        x, y = _rotate_yaw(pose.x, pose.y, self.yaw)
        tx, ty, tz = self.translation
        return replace(
            pose,
            x=x * self.scale + tx,
            y=y * self.scale + ty,
            z=pose.z * self.scale + tz,
        )

    def apply_delta(self, dx: float, dy: float, dz: float) -> tuple[float, float, float]:
        """Rotate and scale a displacement (no translation)."""
        rx, ry = _rotate_yaw(dx, dy, self.yaw)
        return (rx * self.scale, ry * self.scale, dz * self.scale)


def _rotate_yaw(x: float, y: float, yaw: float) -> tuple[float, float]:
    if yaw == 0.0:
        return (x, y)
    c, s = math.cos(yaw), math.sin(yaw)
    return (c * x - s * y, s * x + c * y)


def forward_kinematics(model: ArmModel, q: JointVector, o: float = 1.0, c: bool = False) -> Pose:
    """Tip position of the arm; gripper state passes through unchanged."""
    model.check_limits(q)
    r = model.l2 * math.cos(q.q2) + model.l3 * math.cos(q.q2 + q.q3)
    return Pose(
        x=r * math.cos(q.q1),
        y=r * math.sin(q.q1),
        z=model.d1 + model.l2 * math.sin(q.q2) + model.l3 * math.sin(q.q2 + q.q3),
        o=o,
        c=c,
    )


def nearest_reachable(model: ArmModel, target: Pose) -> Pose:
    """Project a target onto the reachable annulus, preserving base yaw."""
    r = math.hypot(target.x, target.y)
    zeta = target.z - model.d1
    dist = math.hypot(r, zeta)
    if model.inner_reach <= dist <= model.reach:
        return target
    bound = model.reach if dist > model.reach else model.inner_reach
    if dist == 0.0:
        nr, nz = bound, 0.0
    else:
        f = bound / dist
        nr, nz = r * f, zeta * f
    yaw = math.atan2(target.y, target.x)
    return replace(target, x=nr * math.cos(yaw), y=nr * math.sin(yaw), z=model.d1 + nz)


def inverse_kinematics(model: ArmModel, target: Pose) -> JointVector:
    """Elbow-down joint solution for a reachable target position.

    Raises ReachabilityError carrying the nearest reachable pose when the
    target lies outside the annulus; the safety layer relies on that payload.
    """
    r = math.hypot(target.x, target.y)
    zeta = target.z - model.d1
    dist_sq = r * r + zeta * zeta
    dist = math.sqrt(dist_sq)
    if dist > model.reach + 1e-12 or dist < model.inner_reach - 1e-12:
        raise ReachabilityError(
            f"target at distance {dist:.4f} outside [{model.inner_reach:.4f}, {model.reach:.4f}]",
            nearest_reachable(model, target),
        )
    cos_q3 = (dist_sq - model.l2 * model.l2 - model.l3 * model.l3) / (2.0 * model.l2 * model.l3)
    cos_q3 = min(1.0, max(-1.0, cos_q3))
    q3 = -math.acos(cos_q3)  # elbow-down branch
    q2 = math.atan2(zeta, r) - math.atan2(
        model.l3 * math.sin(q3), model.l2 + model.l3 * math.cos(q3)
    )
    q1 = math.atan2(target.y, target.x) if r > 0.0 else 0.0
    return JointVector(q1, q2, q3)


def interpolate_step(current: JointVector, target: JointVector, dt: float, model: ArmModel) -> JointVector:
    """Move each joint toward the target, clamped to velocity_limit * dt.

    Snaps exactly onto the target once within one step, so repeated calls
    converge monotonically; this is the loss-concealment primitive.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    max_step = model.velocity_limit * dt
    out = []
    for cur, tgt in zip(current.as_tuple(), target.as_tuple()):
        d = tgt - cur
        if abs(d) <= max_step:
            out.append(tgt)
        else:
            out.append(cur + math.copysign(max_step, d))
    return JointVector(*out)


def calibrate(operator_home: Pose, robot_home: Pose) -> CalibrationTransform:
    """Transform mapping the operator home pose exactly onto the robot home."""
    for v in (*operator_home.position(), *robot_home.position()):
        if not math.isfinite(v):
            raise ValueError("home poses must be finite")
    return CalibrationTransform(
        translation=(
            robot_home.x - operator_home.x,
            robot_home.y - operator_home.y,
            robot_home.z - operator_home.z,
        ),
        yaw=0.0,
        scale=1.0,
    )
