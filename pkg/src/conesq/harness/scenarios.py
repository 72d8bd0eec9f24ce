"""Built-in scenario configs: small, fast, and deterministic.

These are the smoke configurations the CLI falls back to and the tests
pin their frozen numbers against. Each is a plain dict in the Scenario
schema; callers get a fresh copy every time.
"""

import copy

import numpy as np

from .scenario import Scenario, parse_scenario


def _jittered_segment(n=24, seed=7, wobble=0.35):
    """Grid atoms nudged off-pattern, spacing floored at (1-2w)/(n-1)."""
    rng = np.random.default_rng([seed, 0x6a69747465721])
    x = (np.arange(n) + wobble * rng.uniform(-1.0, 1.0, n)) / (n - 1.0)
    pts = [[float(v), 0.0] for v in np.clip(x, 0.0, 1.0)]
    raw = rng.uniform(0.5, 1.5, n)
    w = [float(v) for v in raw / raw.sum()]
    return pts, w


_JITTER_POINTS, _JITTER_WEIGHTS = _jittered_segment()

_BUILTIN = {
    # 24 equal atoms on a unit segment: the canonical smoke scenario.
    "uniform-segment": {
        "name": "uniform-segment",
        "set": {"kind": "segment", "a": [0.0, 0.0], "b": [1.0, 0.0]},
        "measure": {"kind": "uniform", "atoms": 24, "total_mass": 1.0},
        "kernel": {"kind": "inverse_power"},
        "params": {"m": 1.0, "alpha": 1.0, "c2": 600.0},
        "seed": 0,
        "budget": 256,
    },
    # 32 equal atoms on the unit circle; order m = 1 along the arc.
    "circle": {
        "name": "circle",
        "set": {"kind": "circle", "center": [0.0, 0.0], "radius": 1.0},
        "measure": {"kind": "uniform", "atoms": 32, "total_mass": 1.0},
        "kernel": {"kind": "inverse_power"},
        "params": {"m": 1.0, "alpha": 1.0, "c2": 600.0},
        "seed": 0,
        "budget": 256,
    },
    # jittered atoms and uneven weights on a segment: the adversarial
    # smoke. Positions keep a spacing floor so the growth constant stays
    # bounded; fully random positions would let atoms collide and blow it
    # up, taking every operator bound with it.
    "rough-segment": {
        "name": "rough-segment",
        "set": {"kind": "point_cloud", "points": _JITTER_POINTS},
        "measure": {"kind": "explicit", "points": _JITTER_POINTS,
                    "weights": _JITTER_WEIGHTS},
        "kernel": {"kind": "inverse_power"},
        "params": {"m": 1.0, "alpha": 1.0, "c2": 600.0},
        "seed": 7,
        "budget": 256,
    },
}


def builtin_names():
    return sorted(_BUILTIN)


def builtin_config(name: str) -> dict:
    if name not in _BUILTIN:
        raise KeyError(f"no built-in scenario {name!r}; "
                       f"have {builtin_names()}")
    return copy.deepcopy(_BUILTIN[name])


def builtin_scenario(name: str) -> Scenario:
    return parse_scenario(builtin_config(name))
