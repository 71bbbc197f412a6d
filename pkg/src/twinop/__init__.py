"""Dual digital-twin teleoperation sandbox.

An operator-side twin answers the human instantly while a remote-side twin
guards the real robot, mirrors the environment through a single RGB-D
camera, and ships back known objects as 46-byte coordinates and everything
else as discrepancy point clouds — all over an emulated network under a
deterministic virtual clock.
"""

from .kinematics import (
    ArmModel,
    CalibrationTransform,
    JointVector,
    Pose,
    calibrate,
    forward_kinematics,
    interpolate_step,
    inverse_kinematics,
)
from .netem import Link, LinkConfig
from .scenario import ConfigError, Scenario, from_dict, load
from .session import Session, Trace
from .tasks import (
    EpisodeResult,
    TaskMetrics,
    bandwidth_report,
    deviation_metrics,
    run_episode,
    spiral_reference,
)
from .twinsync import Geofence, HapticSample, ScaleMode, apply_motion_scale, safety_clamp

__version__ = "0.1.0"

__all__ = [
    "ArmModel",
    "CalibrationTransform",
    "ConfigError",
    "EpisodeResult",
    "Geofence",
    "HapticSample",
    "JointVector",
    "Link",
    "LinkConfig",
    "Pose",
    "ScaleMode",
    "Scenario",
    "Session",
    "TaskMetrics",
    "Trace",
    "apply_motion_scale",
    "bandwidth_report",
    "calibrate",
    "deviation_metrics",
    "forward_kinematics",
    "from_dict",
    "interpolate_step",
    "inverse_kinematics",
    "load",
    "run_episode",
    "safety_clamp",
    "spiral_reference",
]
