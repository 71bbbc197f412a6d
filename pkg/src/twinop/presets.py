"""Canonical scenario dictionaries used by the test suites and shipped YAML.

Each builder returns a fresh plain dict in the scenario-file schema, so
tests and the CLI exercise the exact same configuration surface and callers
may mutate the result freely.
"""

from __future__ import annotations

import copy
import functools


def _fresh(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        return copy.deepcopy(fn(*args, **kwargs))

    return wrapper


TABLE = {
    "id": 1,
    "class": 0,
    "shape": "box",
    "center": [0.29, 0.0, 0.0],
    "half_extents": [0.2, 0.2, 0.02],
    "color": [150, 150, 155],
}

SCALPEL_REGISTRY = {
    "class": 3,
    "name": "scalpel",
    "base_confidence": 0.97,
    "template": {"shape": "sphere", "radius": 0.02},
    "color": [200, 50, 50],
}


@_fresh
def spiral_scenario(
    *,
    scale: str = "normal",
    mode: str = "twin",
    rtt_ms: float = 1.0,
    seed: int = 7,
    tremor: float = 0.0,
    duration: float = 60.0,
) -> dict:
    """Spiral-tracing benchmark; sensing off (no objects beyond the table)."""
    return {
        "run": {"seed": seed, "duration": duration, "drain": 0.3},
        "fence": {"lo": [0.17, -0.14, 0.0], "hi": [0.40, 0.14, 0.26], "margin": 0.05},
        "scale": scale,
        "netem": {"rtt_ms": rtt_ms},
        "robot_home": [0.29, 0.0, 0.0205],
        "operator": {
            "kind": "spiral",
            "mode": mode,
            "gain": 40.0,
            "speed": 0.06,
            "lookahead": 0.006,
            "tremor_amplitude": tremor,
        },
        "spiral": {
            "center": [0.29, 0.0],
            "z": 0.0205,
            "max_radius": 0.08,
            "turns": 3,
            "samples_per_turn": 200,
            "width": 0.004,
        },
        "scene": {"environment": [TABLE]},
        "video": {"emulate": mode == "video", "frame_rate": 60.0, "packets_per_frame": 5},
    }


@_fresh
def bandwidth_scenario(*, seed: int = 11, duration: float = 60.0) -> dict:
    """Known-object episode: coordinate datagrams vs emulated video volume.

    10 Hz sensing for 60 s emits exactly 600 object datagrams for the one
    cataloged object; the conventional-approach emulation is capped at
    17,500 packets of 1,500 bytes.
    """
    return {
        "run": {"seed": seed, "duration": duration, "drain": 0.0},
        "fence": {"lo": [0.17, -0.14, 0.0], "hi": [0.40, 0.14, 0.26], "margin": 0.05},
        "netem": {"rtt_ms": 1.0},
        "robot_home": [0.29, 0.0, 0.05],
        "operator": {"kind": "idle"},
        "camera": {"position": [0.55, 0.0, 0.75], "look_at": [0.30, 0.0, 0.03]},
        "scene": {
            "environment": [TABLE],
            "real_only": [
                {
                    "id": 10,
                    "class": 3,
                    "shape": "sphere",
                    "center": [0.33, 0.08, 0.06],
                    "radius": 0.02,
                    "color": [200, 50, 50],
                }
            ],
            "registry": [SCALPEL_REGISTRY],
        },
        "sensing": {"enabled": True, "rate_hz": 10.0, "discrepancy": False},
        "video": {
            "emulate": True,
            "frame_rate": 25.0,
            "packets_per_frame": 12,
            "packet_size": 1500,
            "total_packets": 17500,
        },
    }


@_fresh
def poke_scenario(*, rtt_ms: float = 1.0, seed: int = 3, duration: float = 3.0) -> dict:
    """Operator pushes the tool into the table: exercises the force loop."""
    return {
        "run": {"seed": seed, "duration": duration, "drain": 0.0},
        "fence": {"lo": [0.17, -0.14, 0.0], "hi": [0.40, 0.14, 0.26], "margin": 0.05},
        "netem": {"rtt_ms": rtt_ms},
        "robot_home": [0.29, 0.0, 0.05],
        "operator": {"kind": "poke"},
        "scene": {"environment": [TABLE]},
    }


@_fresh
def adversarial_scenario(*, seed: int = 5, duration: float = 6.0) -> dict:
    """Operator repeatedly commands poses ~20 cm outside the geofence."""
    return {
        "run": {"seed": seed, "duration": duration, "drain": 0.2},
        "fence": {"lo": [0.17, -0.14, 0.0], "hi": [0.40, 0.14, 0.26], "margin": 0.05},
        "netem": {"rtt_ms": 1.0},
        "robot_home": [0.29, 0.0, 0.05],
        "operator": {"kind": "sweep"},
        "scene": {"environment": [TABLE]},
    }


@_fresh
def discrepancy_scenario(*, seed: int = 13, duration: float = 1.0, foreign: bool = True) -> dict:
    """Live session with an uncataloged box in the real scene only."""
    real_only = []
    if foreign:
        real_only.append(
            {
                "id": 20,
                "class": 0,
                "shape": "box",
                "center": [0.33, 0.08, 0.045],
                "half_extents": [0.025, 0.025, 0.025],
                "color": [40, 180, 60],
            }
        )
    return {
        "run": {"seed": seed, "duration": duration, "drain": 0.0},
        "fence": {"lo": [0.17, -0.14, 0.0], "hi": [0.40, 0.14, 0.26], "margin": 0.05},
        "netem": {"rtt_ms": 1.0},
        "robot_home": [0.29, 0.0, 0.05],
        "operator": {"kind": "idle"},
        "camera": {"position": [0.55, 0.0, 0.75], "look_at": [0.30, 0.0, 0.03]},
        "scene": {
            "environment": [TABLE],
            "real_only": real_only,
            "registry": [SCALPEL_REGISTRY],
        },
        "sensing": {"enabled": True, "rate_hz": 10.0, "discrepancy": True},
    }
