"""Scenario configuration: one JSON object drives every experiment.

A scenario bundles the closed-set layout, the atomic measure on it, the
kernel, the constant block, the master seed, and the per-shell quadrature
budget. Parsing is strict: unknown keys, wrong types, and constraint
violations are collected per field and reported together, so a malformed
file fails with every diagnostic at once instead of one at a time.
"""

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from conesq.geometry import CantorDust, Circle, PointCloud, Segment
from conesq.measure import AtomicMeasure
from conesq.operators import Kernel, QuadratureConfig, kernel_from_spec

SET_KINDS = ("segment", "circle", "point_cloud", "cantor_dust")
MEASURE_KINDS = ("uniform", "random", "explicit")
MAX_ATOMS = 4096
MAX_BUDGET = 65536


class ScenarioError(ValueError):
    """Config rejection carrying (field, message) pairs for every problem."""

    def __init__(self, problems):
        self.problems = list(problems)
        lines = [f"{field}: {msg}" for field, msg in self.problems]
        super().__init__("invalid scenario\n" + "\n".join(lines))


@dataclass(frozen=True)
class ParamBlock:
    """The constant block every construction reads its knobs from.

    m is the measure order, alpha/beta the kernel exponents, delta the net
    ratio, gamma and r the goodness knobs, (a, b, kappa) the regular-ball
    constants, rho the covering gap, lam0/c0 the suppression threshold and
    density bar, c_acc the accretivity floor, delta0 the ensemble slack,
    eps0 the small-set budget, s_exp the weak-type exponent, and (c1, c2)
    the testing-measure constants.
    """

    m: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    delta: float = 0.25
    gamma: float = 0.25
    r: int = 1
    a: float = 10.0
    b: float = 50.0
    kappa: float = 200.0
    rho: float = 160.0
    lam0: float = 40.0
    c0: float = 2.0
    c_acc: float = 0.25
    delta0: float = 0.5
    eps0: float = 0.05
    s_exp: float = 1.0
    c1: float = 1.0
    c2: float = 40.0

    def problems(self):
        """Standing constraints, each reported with its field path."""
        out = []

        def need(cond, field, msg):
            if not cond:
                out.append((f"params.{field}", msg))

        need(self.m > 0, "m", "order must be positive")
        need(0.0 < self.alpha <= 1.0, "alpha", "must lie in (0, 1]")
        need(0.0 < self.beta <= 1.0, "beta", "must lie in (0, 1]")
        need(0.0 < self.delta <= 0.25, "delta", "must lie in (0, 1/4]")
        need(0.0 < self.gamma < 1.0, "gamma", "must lie in (0, 1)")
        need(self.r >= 1, "r", "goodness separation must be at least 1")
        need(self.a >= 3.0, "a", "dilation must be at least 3")
        need(self.rho >= 16.0 * self.a, "rho",
             f"covering gap must be at least 16 a = {16.0 * self.a:g}")
        need(self.b > self.a ** self.m, "b",
             f"doubling bound must exceed a^m = {self.a ** self.m:g}")
        need(self.kappa > 0, "kappa", "boundary constant must be positive")
        need(self.lam0 > 0, "lam0", "suppression threshold must be positive")
        need(self.c0 > 0, "c0", "density bar must be positive")
        need(self.c_acc > 0, "c_acc", "accretivity floor must be positive")
        need(0.0 <= self.delta0 < 1.0, "delta0", "must lie in [0, 1)")
        need(0.0 < self.eps0 < 1.0, "eps0", "must lie in (0, 1)")
        need(self.s_exp > 0, "s_exp", "weak-type exponent must be positive")
        need(self.c1 >= 1.0, "c1", "testing constant must be at least 1")
        need(self.c2 > 0, "c2", "weak-type constant must be positive")
        return out


@dataclass(frozen=True)
class Scenario:
    name: str
    set_spec: dict
    measure_spec: dict
    kernel_spec: dict
    params: ParamBlock
    seed: int
    budget: int
    suites: object  # tuple of names, or None = "run everything"

    def to_dict(self) -> dict:
        """Canonical plain-data form; parse_scenario round-trips it."""
        out = {
            "name": self.name,
            "set": dict(self.set_spec),
            "measure": dict(self.measure_spec),
            "kernel": dict(self.kernel_spec),
            "params": dataclasses.asdict(self.params),
            "seed": self.seed,
            "budget": self.budget,
        }
        if self.suites is not None:
            out["suites"] = list(self.suites)
        return out


def _check_spec(spec, field, kinds, problems):
    if not isinstance(spec, dict):
        problems.append((field, "must be an object"))
        return None
    kind = spec.get("kind")
    if kind not in kinds:
        problems.append(
            (f"{field}.kind", f"unknown kind {kind!r}; have {list(kinds)}"))
        return None
    return kind


def _point_list(value, field, problems, dim=None):
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[0] == 0 or not np.all(np.isfinite(arr)):
        problems.append((field, "must be a nonempty finite point list"))
        return None
    if dim is not None and arr.shape[1] != dim:
        problems.append((field, f"points must have dimension {dim}"))
        return None
    return arr


def parse_scenario(obj) -> Scenario:
    """Validate a plain config dict into a Scenario.

    Every problem is collected under its field path; nothing is built
    until the whole block is clean.
    """
    problems = []
    if not isinstance(obj, dict):
        raise ScenarioError([("<root>", "config must be a JSON object")])

    known = {"name", "set", "measure", "kernel", "params", "seed", "budget",
             "suites"}
    for key in sorted(set(obj) - known):
        problems.append((key, "unknown top-level key"))

    name = obj.get("name")
    if not isinstance(name, str) or not name:
        problems.append(("name", "must be a nonempty string"))
        name = "<unnamed>"

    set_spec = obj.get("set", {})
    set_kind = _check_spec(set_spec, "set", SET_KINDS, problems)
    if set_kind == "segment":
        a = _point_list(set_spec.get("a", None), "set.a", problems)
        b = _point_list(set_spec.get("b", None), "set.b", problems)
        if a is not None and b is not None and np.array_equal(a, b):
            problems.append(("set.b", "segment endpoints must differ"))
    elif set_kind == "circle":
        _point_list(set_spec.get("center", None), "set.center", problems, 2)
        if not isinstance(set_spec.get("radius"), (int, float)) or \
                set_spec.get("radius", 0) <= 0:
            problems.append(("set.radius", "must be a positive number"))
    elif set_kind == "point_cloud":
        _point_list(set_spec.get("points", None), "set.points", problems)
    elif set_kind == "cantor_dust":
        lvl = set_spec.get("level")
        if not isinstance(lvl, int) or not 0 <= lvl <= 6:
            problems.append(("set.level", "must be an integer in [0, 6]"))

    measure_spec = obj.get("measure", {})
    meas_kind = _check_spec(measure_spec, "measure", MEASURE_KINDS, problems)
    if meas_kind in ("uniform", "random"):
        atoms = measure_spec.get("atoms")
        if atoms is not None and (not isinstance(atoms, int)
                                  or not 1 <= atoms <= MAX_ATOMS):
            problems.append(
                ("measure.atoms", f"must be an integer in [1, {MAX_ATOMS}]"))
        weights = measure_spec.get("weights", "equal")
        if weights not in ("equal", "random"):
            problems.append(
                ("measure.weights", "must be 'equal' or 'random'"))
    elif meas_kind == "explicit":
        pts = _point_list(measure_spec.get("points", None),
                          "measure.points", problems)
        w = measure_spec.get("weights")
        w_arr = np.asarray(w, dtype=np.float64) if w is not None else None
        if w_arr is None or w_arr.ndim != 1 or np.any(w_arr < 0) or \
                not np.all(np.isfinite(w_arr)):
            problems.append(
                ("measure.weights", "must be finite nonnegative numbers"))
        elif pts is not None and w_arr.shape[0] != pts.shape[0]:
            problems.append(("measure.weights", "must be one per atom"))
    total = measure_spec.get("total_mass", 1.0) if meas_kind else 1.0
    if not isinstance(total, (int, float)) or total <= 0:
        problems.append(("measure.total_mass", "must be a positive number"))

    kernel_spec = obj.get("kernel", {})
    _check_spec(kernel_spec, "kernel", ("inverse_power",
                                        "signed_directional"), problems)

    params_obj = obj.get("params", {})
    params = ParamBlock()
    if not isinstance(params_obj, dict):
        problems.append(("params", "must be an object"))
    else:
        fields = {f.name: f for f in dataclasses.fields(ParamBlock)}
        for key in sorted(set(params_obj) - set(fields)):
            problems.append((f"params.{key}", "unknown constant"))
        clean = {}
        for key, value in params_obj.items():
            if key not in fields:
                continue
            if key == "r":
                if not isinstance(value, int):
                    problems.append((f"params.{key}", "must be an integer"))
                    continue
                clean[key] = value
            elif not isinstance(value, (int, float)) or \
                    not math.isfinite(value):
                problems.append((f"params.{key}", "must be a finite number"))
            else:
                clean[key] = float(value)
        params = ParamBlock(**clean)
        problems.extend(params.problems())

    seed = obj.get("seed", 0)
    if not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        problems.append(("seed", "must be an integer in [0, 2^64)"))
        seed = 0
    budget = obj.get("budget", 256)
    if not isinstance(budget, int) or not 2 <= budget <= MAX_BUDGET:
        problems.append(
            ("budget", f"must be an integer in [2, {MAX_BUDGET}]"))
        budget = 256
    # An absent field means "run everything"; an explicit empty list is a
    # deliberate no-op selection, so the two must stay distinguishable.
    suites = obj.get("suites")
    if suites is not None:
        if not isinstance(suites, list) or \
                not all(isinstance(s, str) for s in suites):
            problems.append(("suites", "must be a list of suite names"))
            suites = None
        else:
            suites = tuple(suites)

    if problems:
        raise ScenarioError(problems)
    return Scenario(name=name, set_spec=dict(set_spec),
                    measure_spec=dict(measure_spec),
                    kernel_spec=dict(kernel_spec), params=params,
                    seed=seed, budget=budget, suites=suites)


def load_scenario(path) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ScenarioError([("<file>", str(exc))]) from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError([("<file>", f"not valid JSON: {exc}")]) from exc
    return parse_scenario(obj)


# ---------------------------------------------------------------- builders


def scenario_rng(scenario: Scenario, label: str) -> np.random.Generator:
    """Independent deterministic substream named by a label.

    The label is hashed with a stable digest, not Python's salted hash,
    so the stream survives interpreter restarts.
    """
    tag = int.from_bytes(
        hashlib.sha256(label.encode("utf-8")).digest()[:8], "big")
    return np.random.default_rng([scenario.seed, tag])


def build_closed_set(scenario: Scenario):
    spec = scenario.set_spec
    kind = spec["kind"]
    if kind == "segment":
        return Segment(np.asarray(spec["a"], dtype=np.float64),
                       np.asarray(spec["b"], dtype=np.float64))
    if kind == "circle":
        return Circle(np.asarray(spec["center"], dtype=np.float64),
                      float(spec["radius"]))
    if kind == "point_cloud":
        return PointCloud(np.asarray(spec["points"], dtype=np.float64))
    return CantorDust(int(spec["level"]))


def _uniform_atoms(scenario: Scenario, E, count):
    kind = scenario.set_spec["kind"]
    if kind == "segment":
        n = count if count is not None else 24
        t = np.linspace(0.0, 1.0, n)
        return E.a + t[:, None] * (E.b - E.a)
    if kind == "circle":
        n = count if count is not None else 24
        th = 2.0 * math.pi * np.arange(n) / n
        return E.center + E.radius * np.column_stack(
            [np.cos(th), np.sin(th)])
    if kind == "cantor_dust":
        centers = E.corners + 0.5 * E.side
        if count is not None and count != centers.shape[0]:
            raise ScenarioError([("measure.atoms",
                                  f"uniform dust atoms must number "
                                  f"{centers.shape[0]} at this level")])
        return centers
    pts = E.points
    if count is not None and count != pts.shape[0]:
        raise ScenarioError([("measure.atoms",
                              "uniform cloud atoms must match the cloud")])
    return pts


def build_measure(scenario: Scenario, E=None) -> AtomicMeasure:
    """Atom layout and weights from the measure spec.

    Uniform scenarios are fully deterministic; random ones draw atoms and
    weights from seed-derived substreams, so a (config, seed) pair always
    yields the same measure.
    """
    if E is None:
        E = build_closed_set(scenario)
    spec = scenario.measure_spec
    kind = spec["kind"]
    total = float(spec.get("total_mass", 1.0))
    if kind == "explicit":
        pts = np.atleast_2d(np.asarray(spec["points"], dtype=np.float64))
        w = np.asarray(spec["weights"], dtype=np.float64)
        return AtomicMeasure(pts, w)
    count = spec.get("atoms")
    if kind == "uniform":
        pts = _uniform_atoms(scenario, E, count)
    else:
        n = count if count is not None else 24
        pts = E.sample(n, scenario_rng(scenario, "atoms"))
    n = pts.shape[0]
    if spec.get("weights", "equal") == "random":
        u = scenario_rng(scenario, "weights").uniform(0.5, 1.5, n)
        w = u * (total / math.fsum(u.tolist()))
    else:
        w = np.full(n, total / n)
    return AtomicMeasure(pts, w)


def build_kernel(scenario: Scenario) -> Kernel:
    """Kernel from the spec; missing exponents fall back to the params."""
    spec = dict(scenario.kernel_spec)
    spec.setdefault("m", scenario.params.m)
    spec.setdefault("alpha", scenario.params.alpha)
    return kernel_from_spec(spec)


def quadrature_config(scenario: Scenario) -> QuadratureConfig:
    """Deterministic single-round quadrature sized by the scenario budget.

    One round with a fixed per-shell budget keeps sample streams shared
    across nested truncation windows, so window comparisons made by the
    pipelines stay float-exact.
    """
    return QuadratureConfig(seed=scenario.seed,
                            samples_per_shell=scenario.budget,
                            target_rel_stderr=None, max_rounds=1,
                            max_shells=64)


def min_spacing(points) -> float:
    """Smallest positive pairwise distance; inf for a single atom."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    best = math.inf
    for i in range(pts.shape[0] - 1):
        d = np.sqrt(((pts[i + 1:] - pts[i]) ** 2).sum(-1))
        pos = d[d > 0]
        if pos.size:
            best = min(best, float(pos.min()))
    return best
