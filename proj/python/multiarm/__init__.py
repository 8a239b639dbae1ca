"""Multi-arm telemanipulation engine: scenario runs, replay, session logic."""

import json as _json

import numpy as _np

from . import _multiarm
from ._multiarm import (
    PROTOCOL_VERSION,
    ConfigError,
    ContractViolation,
    SimulationFault,
    ValidationError,
    map_stiffness,
)

__all__ = [
    "PROTOCOL_VERSION",
    "ConfigError",
    "ContractViolation",
    "SimulationFault",
    "ValidationError",
    "Session",
    "Simulation",
    "button",
    "check_scenario",
    "default_scenario",
    "fk",
    "hand_pose",
    "jacobian",
    "map_stiffness",
    "ready_pose",
    "replay",
    "run_scenario",
]


def _dump(obj):
    return obj if isinstance(obj, str) else _json.dumps(obj)


def hand_pose(hand, position, orientation=(1.0, 0.0, 0.0, 0.0), s_a=0.0, seq=1, t=0.0):
    """Wire message for a hand sample; orientation is (w, x, y, z)."""
    return {
        "v": PROTOCOL_VERSION,
        "type": "hand_pose",
        "seq": seq,
        "t": t,
        "body": {"hand": hand, "position": list(position), "orientation": list(orientation), "s_a": s_a},
    }


def button(hand, name, edge="press", seq=1, t=0.0):
    """Wire message for a button edge; `name` is S, F, Trigger, Increase, Decrease or RB<k>."""
    return {
        "v": PROTOCOL_VERSION,
        "type": "button",
        "seq": seq,
        "t": t,
        "body": {"hand": hand, "button": name, "edge": edge},
    }


def fk(q):
    return _multiarm.fk(_np.asarray(q, dtype=float))


def jacobian(q):
    return _multiarm.jacobian(_np.asarray(q, dtype=float))


def ready_pose():
    return _multiarm.ready_pose()


def default_scenario():
    return _json.loads(_multiarm.default_scenario())


def check_scenario(scenario):
    """Validates a scenario (dict or JSON text); raises ConfigError."""
    return _json.loads(_multiarm.check_scenario(_dump(scenario)))


def run_scenario(scenario, telemetry=False, record=False):
    """Runs headless. Returns ticks, inputs, telemetry_hash, final_snapshot and,
    on request, the telemetry lines and session log text."""
    out = _json.loads(_multiarm.run_scenario(_dump(scenario), telemetry, record))
    if telemetry:
        out["telemetry"] = [_json.loads(line) for line in out["telemetry"].splitlines()]
    return out


def replay(log):
    """Replays session log text; returns ticks, telemetry_hash, mismatches, truncated."""
    return _json.loads(_multiarm.replay(log))


class Simulation:
    def __init__(self, scenario):
        self._sim = _multiarm.Simulation(_dump(scenario))

    def apply(self, message):
        self._sim.apply(_dump(message))

    def tick(self):
        return [_json.loads(line) for line in self._sim.tick()]

    def snapshot(self):
        return _json.loads(self._sim.snapshot())

    def gui(self):
        return _json.loads(self._sim.gui())

    @property
    def tick_count(self):
        return self._sim.tick_count

    @property
    def clock(self):
        return self._sim.clock


class Session:
    """Joystick grammar state machine on its own; no arms attached."""

    def __init__(self, robots):
        self._s = _multiarm.Session(robots)

    def apply(self, message):
        """Returns warnings for rejected requests."""
        return self._s.apply(_dump(message))

    def state(self):
        return _json.loads(self._s.state())

    def gui(self):
        return _json.loads(self._s.gui())

    def check(self):
        self._s.check()
