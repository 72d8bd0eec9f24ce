"""Experiment pipelines: testing hypotheses, stopping sets, good-lambda.

Three full-depth constructions on top of the module layer. The hypothesis
checker evaluates the six testing-measure predicates per regular ball,
exactly where they are measure identities and by seeded quadrature where
they are not. The stopping-set pipeline builds the cancellation cubes,
the density peaks, and the sparse/heavy cube families with the theory's
own constants, then verifies every mass display by exact summation. The
good-lambda experiment measures both sides of the distributional
inequality over a median-anchored grid and invokes the ball cover on
every level set it can.

Atomic measures carry no scales below their atom spacing, so the radial
maximal function used by the peak sets is floored at half the minimal
spacing; the floor is reported alongside the constants derived from it.
"""

import math
from dataclasses import dataclass

import numpy as np

from conesq.geometry import BallSpec, PointCloud
from conesq.lattice import (RandomConfig, build_lattice, build_nets,
                            restrict_to_ball, top_level_for_radius)
from conesq.measure import AtomicMeasure, ComplexAtomicMeasure, maximal_centred
from conesq.operators import square_function
from conesq.whitney import WhitneyFailure, whitney_cover

from .reports import make_record
from .scenario import (Scenario, build_kernel, build_measure, min_spacing,
                       quadrature_config, scenario_rng)

GRID_POINTS = 12
GRID_RATIO = 2.0
EXACT_KNAPSACK_LIMIT = 30


def _fsum(values) -> float:
    return math.fsum(np.asarray(values, dtype=np.float64).tolist())


def _fsum_c(values) -> complex:
    arr = np.asarray(values, dtype=np.complex128)
    return complex(math.fsum(arr.real.tolist()), math.fsum(arr.imag.tolist()))


def median_anchored_grid(values, *, points=GRID_POINTS, ratio=GRID_RATIO):
    """Geometric grid centred at the median of the positive statistics."""
    vals = np.asarray(values, dtype=np.float64)
    vals = vals[np.isfinite(vals) & (vals > 0.0)]
    if vals.size == 0:
        return []
    anchor = float(np.median(vals))
    half = points // 2
    return [anchor * ratio ** (k - half) for k in range(points)]


def weak_type_sup(values, weights, s_exp: float) -> float:
    """Exact sup over lambda of lambda^s * mass({value > lambda}).

    The supremum is approached as lambda climbs to a value from below,
    where the strict tail closes; enumerating the closed tails at the
    distinct values is therefore exact.
    """
    vals = np.asarray(values, dtype=np.float64)
    ws = np.asarray(weights, dtype=np.float64)
    best = 0.0
    for v in np.unique(vals[vals > 0.0]):
        tail = _fsum(ws[vals >= v])
        best = max(best, float(v) ** s_exp * tail)
    return best


# -------------------------------------------------- subset-mass knapsack


def _exact_knapsack(values, costs, budget: float) -> float:
    """Meet-in-the-middle maximum of sum(values) under sum(costs) <= budget."""
    n = values.shape[0]
    lo = n // 2

    def half_tables(vs, cs):
        k = vs.shape[0]
        masks = np.arange(1 << k, dtype=np.uint32)
        bits = ((masks[:, None] >> np.arange(k, dtype=np.uint32)) & 1)
        bits = bits.astype(np.float64)
        return bits @ cs, bits @ vs

    c1, v1 = half_tables(values[:lo], costs[:lo])
    c2, v2 = half_tables(values[lo:], costs[lo:])
    order = np.argsort(c2, kind="stable")
    c2s = c2[order]
    best_right = np.maximum.accumulate(v2[order])
    slots = np.searchsorted(c2s, budget - c1, side="right") - 1
    ok = slots >= 0
    if not ok.any():
        return 0.0
    return float(np.max(v1[ok] + best_right[slots[ok]]))


def worst_subset_variation(values, costs, budget: float) -> dict:
    """Largest variation mass packed under a mu-mass budget.

    Zero-cost atoms ride along for free. Equal positive costs reduce the
    search to the top-valued atoms, which is exact; small instances are
    solved exactly by meet-in-the-middle; anything bigger falls back to
    the better of the density and value greedy passes and is flagged as a
    lower bound.
    """
    values = np.asarray(values, dtype=np.float64)
    costs = np.asarray(costs, dtype=np.float64)
    if values.shape != costs.shape or values.ndim != 1:
        raise ValueError("values and costs must be matching vectors")
    if budget < 0.0:
        raise ValueError("budget must be nonnegative")
    slack = budget * (1.0 + 1e-12)

    free = costs == 0.0
    base = _fsum(values[free])
    vals = values[~free]
    cost = costs[~free]
    if vals.size == 0:
        return {"mass": base, "exact": True}

    uniq = np.unique(cost)
    if uniq.size == 1:
        take = min(vals.size, int(slack / uniq[0]))
        top = np.sort(vals)[::-1]
        return {"mass": base + _fsum(top[:take]), "exact": True}

    if vals.size <= EXACT_KNAPSACK_LIMIT:
        return {"mass": base + _exact_knapsack(vals, cost, slack),
                "exact": True}

    best = 0.0
    for order in (np.argsort(-vals / cost, kind="stable"),
                  np.argsort(-vals, kind="stable")):
        used = 0.0
        got = 0.0
        for i in order:
            if used + cost[i] <= slack:
                used += cost[i]
                got += vals[i]
        best = max(best, got)
    affordable = cost <= slack
    if affordable.any():
        best = max(best, float(vals[affordable].max()))
    return {"mass": base + best, "exact": False}


# ------------------------------------------------- regular ball plumbing


def global_ball(mu: AtomicMeasure) -> BallSpec:
    """Whole-support ball centred at the most central atom.

    Finite-diameter scenarios may test on the full set; the center is the
    atom minimizing the farthest distance, nudged outward so boundary
    atoms sit strictly inside.
    """
    pts = mu.points
    worst = np.empty(mu.size)
    for i in range(mu.size):
        worst[i] = float(np.sqrt(((pts - pts[i]) ** 2).sum(-1)).max())
    c = int(np.argmin(worst))
    return BallSpec(pts[c], worst[c] * (1.0 + 1e-7) + 1e-300, closed=True)


def default_test_measure(mu: AtomicMeasure, ball: BallSpec) \
        -> ComplexAtomicMeasure:
    """The canonical test measure: mu restricted to the ball, unit phase."""
    mask = ball.contains(mu.points)
    return ComplexAtomicMeasure(
        mu.points, np.where(mask, mu.weights, 0.0).astype(np.complex128))


def _ball_descriptor(ball: BallSpec, is_global: bool) -> dict:
    return {"center": [float(c) for c in ball.center],
            "radius": float(ball.radius), "global": bool(is_global)}


def _require_same_atoms(nu, mu):
    if not np.array_equal(nu.points, mu.points):
        raise ValueError("the test measure must live on the ground atoms, "
                         "with zero weights where it vanishes")


def _hypothesis_records(scenario, ball, nu, mu, *, is_global=False,
                        u_mask=None, kernel=None, config=None, E=None,
                        include_weak=True, max_quadratures=4000):
    """Records for hypotheses (1)-(4) and the two exceptional-set clauses."""
    p = scenario.params
    _require_same_atoms(nu, mu)
    mask = ball.contains(mu.points)
    var = nu.total_variation.weights
    mu_ball = _fsum(mu.weights[mask])
    nu_ball = _fsum_c(nu.weights[mask])
    var_ball = _fsum(var[mask])
    where = _ball_descriptor(ball, is_global)
    seed = scenario.seed
    records = []

    outside = _fsum(var[~mask])
    records.append(make_record(
        "tb-support", "the test measure lives inside the ball",
        {"variation_outside": outside, "ball": where}, 0.0,
        outside == 0.0, seed))

    mass_gap = abs(nu_ball - mu_ball)
    tol = 1e-12 * max(1.0, mu_ball)
    records.append(make_record(
        "tb-mass-identity",
        "the test measure and the ground measure give the ball equal mass",
        {"nu_ball": [nu_ball.real, nu_ball.imag], "mu_ball": mu_ball,
         "gap": mass_gap, "ball": where}, tol, mass_gap <= tol, seed))

    bound = p.c1 * mu_ball
    records.append(make_record(
        "tb-variation-bound",
        "the variation mass stays under c1 times the ground mass",
        {"variation_ball": var_ball, "bound": bound,
         "ratio": var_ball / mu_ball if mu_ball > 0 else math.inf,
         "ball": where}, 1e-12,
        var_ball <= bound * (1.0 + 1e-12), seed))

    budget = p.eps0 * mu_ball
    worst = worst_subset_variation(var[mask], mu.weights[mask], budget)
    small_bound = var_ball / (16.0 * p.c1)
    records.append(make_record(
        "tb-small-sets",
        "subsets below the eps0 mass budget carry little variation",
        {"worst_variation": worst["mass"], "bound": small_bound,
         "budget": budget, "exact": worst["exact"], "ball": where},
        1e-12, worst["mass"] <= small_bound + 1e-12 * max(1.0, var_ball),
        seed))

    if u_mask is None:
        u_mask = np.zeros(mu.size, dtype=bool)
    u_var = _fsum(var[u_mask])
    records.append(make_record(
        "tb-exceptional-mass",
        "the exceptional set carries at most a 1/(16 c1) variation share",
        {"u_variation": u_var, "bound": small_bound, "ball": where},
        1e-12, u_var <= small_bound + 1e-12 * max(1.0, var_ball), seed))

    if not include_weak:
        return records

    if kernel is None:
        kernel = build_kernel(scenario)
    if config is None:
        config = quadrature_config(scenario)
    if E is None:
        E = PointCloud(mu.points)
    targets = np.flatnonzero(mask & ~u_mask)
    n_quads = targets.size
    if n_quads > max_quadratures:
        raise ValueError(
            f"quadrature budget exceeded: {n_quads} cone integrals needed, "
            f"{max_quadratures} allowed")
    floor = min(0.5 * min_spacing(mu.points), ball.radius / 8.0)
    carrier = nu.total_variation
    phases = nu.polar_values()
    values = np.zeros(mu.size)
    stderrs = np.zeros(mu.size)
    if var_ball > 0.0:
        for i in targets:
            est = square_function(kernel, carrier, phases, mu.points[i],
                                  floor, ball.radius, config, E=E,
                                  point_key=int(i))
            values[i] = est.value
            stderrs[i] = est.stderr
    sup_exact = weak_type_sup(values[targets], mu.weights[targets], p.s_exp)
    grid = median_anchored_grid(values[targets])
    grid_sup = 0.0
    for lam in grid:
        tail = _fsum(mu.weights[targets][values[targets] > lam])
        grid_sup = max(grid_sup, lam ** p.s_exp * tail)
    weak_bound = p.c2 * var_ball
    records.append(make_record(
        "tb-weak-type",
        "the truncated square function of the test measure obeys the "
        "weak-type bound off the exceptional set",
        {"sup": sup_exact, "grid_sup": grid_sup, "bound": weak_bound,
         "lambda_grid": grid, "floor": floor, "evaluations": int(n_quads),
         "max_stderr": float(stderrs.max()) if n_quads else 0.0,
         "ball": where}, 1e-9,
        sup_exact <= weak_bound * (1.0 + 1e-9), seed))
    return records


def check_tb_hypotheses(scenario: Scenario, balls=None, *, mu=None,
                        kernel=None, config=None, nu_for=None, u_for=None,
                        max_balls=4, allow_global=True,
                        max_quadratures=4000):
    """Evaluate the six testing hypotheses on each regular ball.

    balls defaults to the measure module's regular-ball enumeration,
    falling back to the whole finite set as a single ball when the
    enumeration comes back empty. nu_for and u_for map (index, ball) to a
    test measure and an exceptional mask; by default the test measure is
    the ground measure restricted to the ball and the exceptional set is
    empty, which makes the identities exact and the variation ratio one.
    """
    from conesq.measure import RegularityParams, enumerate_regular_balls

    if mu is None:
        mu = build_measure(scenario)
    p = scenario.params
    flags = None
    if balls is None:
        reg = RegularityParams(a=p.a, b=p.b, kappa=p.kappa, m=p.m)
        balls = enumerate_regular_balls(mu, reg, max_balls=max_balls)
        flags = [False] * len(balls)
        if not balls:
            if not allow_global:
                raise ValueError(
                    "no regular balls found at the configured (a, b, kappa)")
            balls = [global_ball(mu)]
            flags = [True]
    if flags is None:
        flags = [False] * len(balls)

    records = []
    for i, ball in enumerate(balls):
        nu = nu_for(i, ball) if nu_for is not None else None
        if nu is None:
            nu = default_test_measure(mu, ball)
        u_mask = u_for(i, ball) if u_for is not None else None
        records.extend(_hypothesis_records(
            scenario, ball, nu, mu, is_global=flags[i], u_mask=u_mask,
            kernel=kernel, config=config, max_quadratures=max_quadratures))
    return records


# ------------------------------------------------- floored maximal tools


def floored_radial_maximal(nu, centers, m: float, floor: float) -> np.ndarray:
    """sup over r >= floor of |nu|(closed B(y, r)) / r^m, exactly.

    On each constancy interval of the ball mass the ratio decreases in r,
    so the supremum sits at the critical radii: the floor itself and every
    atom distance at or beyond it.
    """
    if floor <= 0.0:
        raise ValueError("the maximal function floor must be positive")
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    var = nu.total_variation.weights
    out = np.empty(centers.shape[0])
    for j, y in enumerate(centers):
        d = np.sqrt(((nu.points - y) ** 2).sum(-1))
        order = np.argsort(d, kind="stable")
        ds = d[order]
        cum = np.cumsum(var[order])
        best = _fsum(var[d <= floor]) / floor ** m
        beyond = np.flatnonzero(ds > floor)
        if beyond.size:
            # closed-ball mass at a tied distance is the cum at the last tie
            uniq, last = np.unique(ds[beyond], return_index=True)
            idx = beyond[last]
            for k, r in zip(idx, uniq):
                tie_end = k
                while tie_end + 1 < ds.size and ds[tie_end + 1] == r:
                    tie_end += 1
                best = max(best, float(cum[tie_end]) / float(r) ** m)
        out[j] = best
    return out


def qualifying_radius(nu, y, p0: float, m: float) -> float:
    """sup of the open-ball radii whose density ratio beats p0.

    The open-ball mass is constant on (d_k, d_{k+1}], where it equals the
    closed mass at d_k; each piece qualifies up to (mass/p0)^(1/m), capped
    by the piece's right end, and the supremum is the best cap.
    """
    if p0 <= 0.0:
        raise ValueError("density bar must be positive")
    var = nu.total_variation.weights
    d = np.sqrt(((nu.points - np.asarray(y, dtype=np.float64)) ** 2).sum(-1))
    order = np.argsort(d, kind="stable")
    ds = d[order]
    cum = np.cumsum(var[order])
    uniq, last = np.unique(ds, return_index=True)
    masses = []
    for k, r in enumerate(uniq):
        tie_end = int(last[k])
        while tie_end + 1 < ds.size and ds[tie_end + 1] == r:
            tie_end += 1
        masses.append(float(cum[tie_end]))
    best = 0.0
    for k, r in enumerate(uniq):
        mass = masses[k]
        if mass <= 0.0:
            continue
        x = (mass / p0) ** (1.0 / m)
        if x <= r:
            continue
        nxt = uniq[k + 1] if k + 1 < uniq.size else math.inf
        best = max(best, min(x, float(nxt)))
    return best


# ------------------------------------------------- stopping-set pipeline


@dataclass(frozen=True)
class StoppingSets:
    """Every constructed set plus the verified mass displays.

    Masks index the ground atoms. t_mask is the union of the cancellation
    cubes, h0/h1 the density peak set and its ball swell, h2 the union of
    the sparse and heavy cube families, u the hypothesis exceptional set,
    and h_mask their union. The report carries the derived constants and
    one verified display per mass bound.
    """

    ball: BallSpec
    nu: ComplexAtomicMeasure
    mu_ball: AtomicMeasure
    restricted: object
    eta: float
    p0: float
    weak_constant: float
    floor: float
    t_keys: tuple
    f1_keys: tuple
    f2_keys: tuple
    t_mask: np.ndarray
    h0_mask: np.ndarray
    h1_mask: np.ndarray
    h2_mask: np.ndarray
    u_mask: np.ndarray
    h_mask: np.ndarray
    report: dict

    def records(self, seed: int):
        out = []
        for disp in self.report["displays"]:
            out.append(make_record(
                f"stopping-{disp['name']}", disp["claim"],
                {"lhs": disp["lhs"], "rhs": disp["rhs"]},
                disp["tolerance"], disp["holds"], seed))
        dens = self.report["density"]
        out.append(make_record(
            "stopping-density",
            "off the cube families the two measures are pointwise "
            "comparable",
            {k: dens[k] for k in ("atoms", "min_ratio", "max_ratio",
                                  "lo_bound", "hi_bound")},
            1e-12, dens["holds"], seed))
        return out


def _keys_to_mask(keys, restricted, n: int) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    for key in keys:
        mask[restricted.cubes[key].atom_indices] = True
    return mask


def _cancellation_scan(restricted, nu_weights, var_weights, eta: float):
    """Maximal cubes whose signed mass cancels under eta of the variation.

    Variation-null cubes are skipped outright: they carry nothing and
    would otherwise stop everywhere the test measure vanishes.
    """
    stopped = []
    stack = [restricted.top_key]
    while stack:
        key = stack.pop()
        cube = restricted.cubes[key]
        var = _fsum(var_weights[cube.atom_indices])
        if var <= 0.0:
            continue
        signed = _fsum_c(nu_weights[cube.atom_indices])
        if abs(signed) <= eta * var:
            stopped.append(key)
            continue
        stack.extend(cube.children_keys)
    return tuple(sorted(stopped))


def _family_scan(restricted, var_weights, mu_weights, lo: float, hi: float):
    """Maximal sparse (variation under lo*mass) and heavy (over hi*mass)
    cubes; cubes invisible to both measures join neither family."""
    sparse, heavy = [], []
    stack = [restricted.top_key]
    while stack:
        key = stack.pop()
        cube = restricted.cubes[key]
        var = _fsum(var_weights[cube.atom_indices])
        mass = _fsum(mu_weights[cube.atom_indices])
        if var == 0.0 and mass == 0.0:
            continue
        if var <= lo * mass:
            sparse.append(key)
            continue
        if var >= hi * mass:
            heavy.append(key)
            continue
        stack.extend(cube.children_keys)
    return tuple(sorted(sparse)), tuple(sorted(heavy))


def _display(name, claim, lhs, rhs, scale, tol=1e-12):
    return {"name": name, "claim": claim, "lhs": lhs, "rhs": rhs,
            "tolerance": tol, "holds": lhs <= rhs + tol * max(1.0, scale)}


def build_ball_lattice(scenario: Scenario, mu: AtomicMeasure,
                       ball: BallSpec, *, omega_seed=None, max_depth=48):
    """Restricted lattice over the ball, refined to singleton leaves.

    The net hierarchy descends until its separation undercuts the atom
    spacing, so the finest level contains every atom and the leaf cubes
    are single atoms; the scans below then decide every claim at atom
    resolution.
    """
    delta = scenario.params.delta
    cloud = PointCloud(mu.points)
    k0 = top_level_for_radius(delta, ball.radius)
    dmin = min_spacing(mu.points)
    if math.isfinite(dmin):
        k_hi = max(k0 + 1,
                   math.ceil(math.log(dmin) / math.log(delta) - 1e-9))
    else:
        k_hi = k0 + 1
    if k_hi - k0 > max_depth:
        raise ValueError(
            f"lattice would need {k_hi - k0} levels to separate the atoms; "
            f"{max_depth} allowed")
    nets = build_nets(cloud, delta, ball.center, (k0, k_hi))
    seed = scenario.seed if omega_seed is None else omega_seed
    lattice = build_lattice(nets, RandomConfig(seed=seed))
    return restrict_to_ball(lattice, ball)


def stopping_sets_pipeline(scenario: Scenario, ball: BallSpec, nu=None, *,
                           mu=None, u_mask=None, omega_seed=None,
                           max_depth=48) -> StoppingSets:
    """Construct and verify the stopping sets for one ball and test measure.

    The cancellation threshold comes from the testing constant: for
    c1 > 1 it is the unique eta with stopped mass share 1 - 1/(2 c1), and
    for c1 = 1 any small eta gives a null stopped family, so 1/2 stands
    in. The peak bar multiplies the measured weak-type constant of the
    floored radial maximal, the doubling headroom, the testing constant,
    and the inverse mass budget. Every display from the construction is
    verified by exact summation over atoms; a failed display is reported,
    not raised. Hypotheses (1)-(4) are re-checked first and a failure
    there raises.
    """
    if mu is None:
        mu = build_measure(scenario)
    p = scenario.params
    if nu is None:
        nu = default_test_measure(mu, ball)
    _require_same_atoms(nu, mu)
    mask = ball.contains(mu.points)
    if u_mask is None:
        u_mask = np.zeros(mu.size, dtype=bool)
    u_mask = np.asarray(u_mask, dtype=bool)
    if u_mask.shape != (mu.size,):
        raise ValueError("the exceptional mask must cover the atoms")

    upstream = _hypothesis_records(scenario, ball, nu, mu, u_mask=u_mask,
                                   include_weak=False)
    failed = [r["check"] for r in upstream if not r["passed"]]
    if failed:
        raise ValueError(
            "hypothesis check failed upstream: " + ", ".join(failed))

    # proposition-local convention: the ground measure is restricted to
    # the ball, the test measure already lives there
    mu_ball = AtomicMeasure(mu.points, np.where(mask, mu.weights, 0.0))
    var = nu.total_variation.weights
    mu_b = mu_ball.total_mass
    var_b = _fsum(var[mask])
    if mu_b <= 0.0 or var_b <= 0.0:
        raise ValueError("the ball carries no mass to decompose")

    restricted = build_ball_lattice(scenario, mu, ball,
                                    omega_seed=omega_seed,
                                    max_depth=max_depth)
    n = mu.size
    c1 = p.c1
    eta = 1.0 / (2.0 * c1 - 1.0) if c1 > 1.0 else 0.5
    t_keys = _cancellation_scan(restricted, nu.weights, var, eta)
    t_mask = _keys_to_mask(t_keys, restricted, n)

    floor = 0.5 * min_spacing(mu.points)
    if not math.isfinite(floor):
        floor = ball.radius
    m_vals = floored_radial_maximal(nu, mu.points, p.m, floor)
    weak_c = 0.0
    for v in np.unique(m_vals[m_vals > 0.0]):
        tail = _fsum(mu_ball.weights[m_vals >= v])
        weak_c = max(weak_c, float(v) * tail / var_b)
    p0 = weak_c * 2.0 ** p.m * c1 / p.eps0 if weak_c > 0.0 else math.inf
    h0_mask = m_vals > p0
    h1_mask = h0_mask.copy()
    for i in np.flatnonzero(h0_mask):
        r_i = qualifying_radius(nu, mu.points[i], p0, p.m)
        h1_mask |= mu.distances_to(mu.points[i]) < r_i

    lo = 1.0 / (16.0 * c1)
    hi = c1 / p.eps0
    f1_keys, f2_keys = _family_scan(restricted, var, mu_ball.weights, lo, hi)
    h2_mask = _keys_to_mask(f1_keys, restricted, n) | \
        _keys_to_mask(f2_keys, restricted, n)
    h_mask = h1_mask | h2_mask | u_mask

    share = var_b / (16.0 * c1)
    displays = [
        _display("cancellation-mass",
                 "the cancellation cubes carry at most a 1 - 1/(2 c1) "
                 "share of the variation",
                 _fsum(var[t_mask]), (1.0 - 0.5 / c1) * var_b, var_b),
        _display("peak-ground-mass",
                 "the peak swell stays under the eps0 ground-mass budget",
                 _fsum(mu_ball.weights[h1_mask]), p.eps0 * mu_b, mu_b),
        _display("peak-variation",
                 "the peak swell carries at most a 1/(16 c1) variation "
                 "share", _fsum(var[h1_mask]), share, var_b),
        _display("sparse-variation",
                 "the sparse cubes carry at most a 1/(16 c1) variation "
                 "share",
                 _fsum(var[_keys_to_mask(f1_keys, restricted, n)]),
                 share, var_b),
        _display("heavy-ground-mass",
                 "the heavy cubes stay under the eps0 ground-mass budget",
                 _fsum(mu_ball.weights[_keys_to_mask(f2_keys, restricted,
                                                     n)]),
                 p.eps0 * mu_b, mu_b),
        _display("heavy-variation",
                 "the heavy cubes carry at most a 1/(16 c1) variation "
                 "share",
                 _fsum(var[_keys_to_mask(f2_keys, restricted, n)]),
                 share, var_b),
        _display("family-variation",
                 "the two cube families together carry at most a 1/(8 c1) "
                 "variation share", _fsum(var[h2_mask]),
                 var_b / (8.0 * c1), var_b),
        _display("total-mass",
                 "the stopped cubes and exceptional sets leave a 1/(4 c1) "
                 "variation share free",
                 _fsum(var[t_mask | h_mask]),
                 (1.0 - 0.25 / c1) * var_b, var_b),
    ]

    keep = mask & ~h2_mask & (mu_ball.weights > 0.0)
    ratios = var[keep] / mu_ball.weights[keep]
    stray = mask & ~h2_mask & (mu_ball.weights == 0.0) & (var > 0.0)
    density = {
        "atoms": int(np.count_nonzero(keep)),
        "min_ratio": float(ratios.min()) if ratios.size else lo,
        "max_ratio": float(ratios.max()) if ratios.size else hi,
        "lo_bound": lo,
        "hi_bound": hi,
        "holds": (not stray.any()) and
        (ratios.size == 0 or
         (float(ratios.min()) >= lo * (1.0 - 1e-12) and
          float(ratios.max()) <= hi * (1.0 + 1e-12))),
    }

    report = {
        "eta": eta,
        "p0": p0,
        "weak_constant": weak_c,
        "floor": floor,
        "counts": {
            "cancellation_cubes": len(t_keys),
            "sparse_cubes": len(f1_keys),
            "heavy_cubes": len(f2_keys),
            "peak_atoms": int(np.count_nonzero(h0_mask)),
            "swell_atoms": int(np.count_nonzero(h1_mask)),
            "family_atoms": int(np.count_nonzero(h2_mask)),
        },
        "displays": displays,
        "density": density,
        "holds": density["holds"] and all(d["holds"] for d in displays),
    }
    return StoppingSets(ball=ball, nu=nu, mu_ball=mu_ball,
                        restricted=restricted, eta=eta, p0=p0,
                        weak_constant=weak_c, floor=floor, t_keys=t_keys,
                        f1_keys=f1_keys, f2_keys=f2_keys, t_mask=t_mask,
                        h0_mask=h0_mask, h1_mask=h1_mask, h2_mask=h2_mask,
                        u_mask=u_mask, h_mask=h_mask, report=report)


# ------------------------------------------------- good-lambda experiment


def random_bounded_functions(scenario: Scenario, count: int, size: int,
                             label="good-lambda-f"):
    """Deterministic ensemble of functions with values in [-1, 1]."""
    rng = scenario_rng(scenario, label)
    return [rng.uniform(-1.0, 1.0, size) for _ in range(count)]


def _diameter(points) -> float:
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    best = 0.0
    for i in range(pts.shape[0] - 1):
        d = np.sqrt(((pts[i + 1:] - pts[i]) ** 2).sum(-1))
        best = max(best, float(d.max()))
    return best


def good_lambda_experiment(scenario: Scenario, fs, eps: float = 1.0,
                           delta_gl: float = 0.1, *, mu=None, kernel=None,
                           config=None, lattice=None, lambdas=None,
                           theta=None, s=None, t=None,
                           max_quadratures=20000) -> dict:
    """Measure both sides of the distributional inequality on a grid.

    For each function the truncated square function and the centred
    maximal function are evaluated at every atom; for each grid height the
    raised-threshold-and-small-maximal mass is compared against the level
    set mass scaled by 1 - theta/(4 b), where theta defaults to the big
    piece share (1 - delta0)/3 the suppression construction guarantees.
    The ball cover is invoked on every proper nonempty level set, and a
    full level set is flagged as saturated rather than covered, matching
    the separate finite-diameter argument. L^p norm ratios for
    p in {1.5, 2, 3} are reported, not asserted.
    """
    if eps <= 0.0 or delta_gl <= 0.0:
        raise ValueError("eps and delta_gl must be positive")
    if mu is None:
        mu = build_measure(scenario)
    p = scenario.params
    if kernel is None:
        kernel = build_kernel(scenario)
    if config is None:
        config = quadrature_config(scenario)
    if theta is None:
        theta = (1.0 - p.delta0) / 3.0
    factor = 1.0 - theta / (4.0 * p.b)
    E = PointCloud(mu.points)
    spacing = min_spacing(mu.points)
    diam = _diameter(mu.points)
    if s is None:
        s = 0.5 * spacing if math.isfinite(spacing) else 0.125 * diam
    if t is None:
        t = 2.0 * diam
    if not 0.0 < s < t:
        raise ValueError("need truncations 0 < s < t")

    n = mu.size
    n_quads = len(fs) * n
    if n_quads > max_quadratures:
        raise ValueError(
            f"quadrature budget exceeded: {n_quads} cone integrals needed, "
            f"{max_quadratures} allowed")

    if lattice is None:
        k_lo = math.floor(math.log(diam) / math.log(p.delta)) \
            if diam > 0 else 0
        if math.isfinite(spacing):
            k_hi = max(k_lo + 1, math.ceil(
                math.log(spacing) / math.log(p.delta) - 1e-9))
        else:
            k_hi = k_lo + 1
        nets = build_nets(E, p.delta, mu.points[0], (k_lo, k_hi))
        lattice = build_lattice(nets, RandomConfig(seed=scenario.seed))

    per_function = []
    all_pass = True
    factor_max = 0.0
    for j, f in enumerate(fs):
        f = np.asarray(f)
        if f.shape != (n,):
            raise ValueError("each function must give one value per atom")
        sq = np.zeros(n)
        for i in range(n):
            sq[i] = square_function(kernel, mu, f, mu.points[i], s, t,
                                    config, E=E, point_key=i).value
        f_meas = ComplexAtomicMeasure(
            mu.points, (f * mu.weights).astype(np.complex128))
        mx = np.array([maximal_centred(mu, f_meas, mu.points[i])
                       for i in range(n)])

        grid = list(lambdas) if lambdas is not None \
            else median_anchored_grid(sq)
        entry = {
            "index": j,
            "grid": grid,
            "per_lambda": [],
            "degenerate": not grid,
            "max_ratio": 0.0,
            "passed": True,
        }
        norms = {}
        for q in (1.5, 2.0, 3.0):
            f_norm = _fsum(np.abs(f) ** q * mu.weights) ** (1.0 / q)
            c_norm = _fsum(sq ** q * mu.weights) ** (1.0 / q)
            norms[f"{q:g}"] = c_norm / f_norm if f_norm > 0.0 else None
        entry["lp_ratios"] = norms

        for lam in grid:
            omega = sq > lam
            right = _fsum(mu.weights[omega])
            left_mask = (sq > (1.0 + eps) * lam) & (mx <= delta_gl * lam)
            left = _fsum(mu.weights[left_mask])
            saturated = bool(omega.all())
            lam_entry = {
                "lam": lam,
                "left": left,
                "right": right,
                "saturated": saturated,
                "whitney": None,
            }
            if omega.any() and not saturated:
                try:
                    cover = whitney_cover(omega, mu, lattice, p.a, p.rho,
                                          p.b, p.kappa)
                    lam_entry["whitney"] = {
                        "ok": True,
                        "balls": len(cover.balls),
                        "mass_share": cover.mass_fraction,
                    }
                except WhitneyFailure as exc:
                    lam_entry["whitney"] = {"ok": False, "reason": str(exc)}
            ok = left <= factor * right + 1e-12 * max(1.0, right)
            lam_entry["passed"] = ok
            if right > 0.0:
                ratio = left / right
                lam_entry["ratio"] = ratio
                entry["max_ratio"] = max(entry["max_ratio"], ratio)
                factor_max = max(factor_max, ratio)
            entry["passed"] = entry["passed"] and ok
            entry["per_lambda"].append(lam_entry)
        all_pass = all_pass and entry["passed"]
        per_function.append(entry)

    return {
        "theta": theta,
        "factor": factor,
        "eps": eps,
        "delta_gl": delta_gl,
        "s": s,
        "t": t,
        "functions": len(fs),
        "per_function": per_function,
        "factor_max": factor_max,
        "passed": all_pass,
        "seed": scenario.seed,
    }
