"""Randomized nested dyadic structure on a finite ground set.

Nets are maximal delta^k-separated subsets built by greedy farthest-point
insertion seeded at a fixed reference point, nested across levels. A random
lattice realization assigns each finer net point a parent among the nearby
coarser net points, the choice driven by one uniform coordinate per level
over an alphabet of size M(L+1); membership then cascades top-down, each
atom going to the nearest child center inside its current cube. That keeps
the two properties everything downstream consumes: per-level partition plus
exact nesting, and a finite uniform per-level choice space with
per-coordinate hit probability 1/(M(L+1)).

Cube centers are net points and need not end up inside their own cube, so
the inner/outer containment radii are measured per run, never asserted.
Cubes are keyed by (level, slot): two cubes with equal atom sets stay
distinct objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import BallSpec, PointCloud, as_point
from .rng import stream, wilson_interval

PARENT_RADIUS_FACTOR = 2.0  # admissible parents live within this * delta^(k-1)


def _pairwise_distances(points):
    n = points.shape[0]
    out = np.empty((n, n))
    step = max(1, 2 ** 22 // max(1, n))
    for lo in range(0, n, step):
        hi = min(lo + step, n)
        d2 = ((points[lo:hi, None, :] - points[None, :, :]) ** 2).sum(-1)
        out[lo:hi] = np.sqrt(d2)
    return out


@dataclass(frozen=True)
class NetHierarchy:
    """Nested maximal separated nets over the atoms of a point-cloud E."""

    ground: PointCloud
    delta: float
    level_range: tuple
    levels: dict          # k -> atom indices in insertion order
    fixed_index: int

    @property
    def fixed_point(self):
        return self.ground.points[self.fixed_index]

    def scale(self, k: int) -> float:
        return self.delta ** k

    def net_points(self, k: int):
        return self.ground.points[self.levels[k]]

    def check_separated(self, k: int) -> bool:
        pts = self.net_points(k)
        if pts.shape[0] < 2:
            return True
        D = _pairwise_distances(pts)
        np.fill_diagonal(D, np.inf)
        return float(D.min()) >= self.scale(k)

    def check_maximal(self, k: int) -> bool:
        d = np.full(self.ground.points.shape[0], np.inf)
        for i in self.levels[k]:
            d = np.minimum(d, np.sqrt(
                ((self.ground.points - self.ground.points[i]) ** 2).sum(-1)))
        return float(d.max()) < self.scale(k)

    def check_nested(self) -> bool:
        k_lo, k_hi = self.level_range
        for k in range(k_lo, k_hi):
            if not set(self.levels[k]) <= set(self.levels[k + 1]):
                return False
        return True


def build_nets(E, delta: float, fixed_point, level_range) -> NetHierarchy:
    """Greedy nested nets X_{k_lo} subset ... subset X_{k_hi} on a point cloud.

    Each level starts from the previous one and keeps inserting the atom
    farthest from the current net while that distance is >= delta^k, so the
    result is delta^k-separated and maximal over the atoms. Ties go to the
    smallest atom index. Analytic sets must be sampled to a PointCloud
    first; the whole lattice pipeline is exact only on finite ground sets.
    """
    if not isinstance(E, PointCloud):
        raise ValueError("nets need a PointCloud ground set; sample analytic "
                         "sets to a cloud first")
    if not (0.0 < delta <= 0.25):
        raise ValueError("delta must lie in (0, 1/4]")
    k_lo, k_hi = int(level_range[0]), int(level_range[1])
    if k_lo > k_hi:
        raise ValueError("empty level range")
    fp = as_point(fixed_point, E.dim)
    d_fp = np.sqrt(((E.points - fp) ** 2).sum(-1))
    hits = np.nonzero(d_fp == 0.0)[0]
    if hits.size != 1:
        raise ValueError("fixed_point must coincide with exactly one atom")
    fixed_index = int(hits[0])

    levels = {}
    current = [fixed_index]
    dmin = np.sqrt(((E.points - E.points[fixed_index]) ** 2).sum(-1))
    for k in range(k_lo, k_hi + 1):
        sep = delta ** k
        while float(dmin.max()) >= sep:
            j = int(np.argmax(dmin))  # first max = smallest atom index
            current.append(j)
            dmin = np.minimum(dmin, np.sqrt(
                ((E.points - E.points[j]) ** 2).sum(-1)))
        levels[k] = np.array(current, dtype=np.intp)
    return NetHierarchy(ground=E, delta=delta, level_range=(k_lo, k_hi),
                        levels=levels, fixed_index=fixed_index)


@dataclass(frozen=True)
class RandomConfig:
    """One lattice realization: a per-level choice driven by the seed.

    Levels k with randomize_range[0] <= k <= randomize_range[1] draw the
    pair (u, v) uniformly from {0..L} x {1..M}; all other levels use the
    reference coordinate (0, 1). The flat choice index is c = u*M + (v-1),
    uniform over M(L+1) values on randomized levels.
    """

    seed: int
    L: int = 4
    M: int = 5
    randomize_range: tuple = (1, 0)   # empty range = the reference lattice

    def __post_init__(self):
        if self.L < 0 or self.M < 1:
            raise ValueError("need L >= 0 and M >= 1")

    @property
    def tau(self) -> float:
        return 1.0 / (self.M * (self.L + 1))

    @property
    def n_choices(self) -> int:
        return self.M * (self.L + 1)

    def coordinate(self, k: int):
        """The pair omega(k) = (u, v)."""
        lo, hi = self.randomize_range
        if lo <= k <= hi:
            rng = stream(self.seed, "lattice-omega", k)
            return int(rng.integers(0, self.L + 1)), int(rng.integers(1, self.M + 1))
        return 0, 1

    def choice(self, k: int) -> int:
        u, v = self.coordinate(k)
        return u * self.M + (v - 1)


REFERENCE = RandomConfig(seed=0)


class DyadicCube:
    """One cube: (level, slot) identity, center net point, atom-index set."""

    __slots__ = ("level", "slot", "center_index", "center", "atom_indices",
                 "parent_key", "children_keys", "side")

    def __init__(self, level, slot, center_index, center, atom_indices,
                 parent_key, side):
        self.level = level
        self.slot = slot
        self.center_index = center_index
        self.center = center
        self.atom_indices = atom_indices
        self.parent_key = parent_key
        self.children_keys = []
        self.side = side

    @property
    def key(self):
        return (self.level, self.slot)

    @property
    def size(self):
        return int(self.atom_indices.shape[0])

    def __repr__(self):
        return (f"DyadicCube(level={self.level}, slot={self.slot}, "
                f"atoms={self.size})")


class _LatticeEngine:
    """Seed-independent tables: admissible parent lists per level and the
    finest-level Voronoi assignment shared by every realization."""

    def __init__(self, nets: NetHierarchy,
                 parent_radius_factor: float = PARENT_RADIUS_FACTOR):
        self.nets = nets
        pts = nets.ground.points
        k_lo, k_hi = nets.level_range
        self.finest_assign = np.argmin(
            np.sqrt(((pts[:, None, :] -
                      pts[nets.levels[k_hi]][None, :, :]) ** 2).sum(-1)),
            axis=1)
        self.admissible = {}
        self.adm_len = {}
        self.force_nearest = {}
        for k in range(k_lo + 1, k_hi + 1):
            prev = nets.levels[k - 1]
            cur = nets.levels[k]
            radius = parent_radius_factor * nets.scale(k - 1)
            core = 0.5 * nets.scale(k - 1)
            D = np.sqrt(((pts[cur][:, None, :] -
                          pts[prev][None, :, :]) ** 2).sum(-1))
            adm_rows, lens, forced = [], [], []
            for j in range(cur.shape[0]):
                ok = np.nonzero(D[j] <= radius)[0]
                order = ok[np.lexsort((prev[ok], D[j, ok]))]
                adm_rows.append(order)
                lens.append(order.shape[0])
                forced.append(bool(order.shape[0]) and
                              float(D[j, order[0]]) < core)
            if min(lens) == 0:
                raise ValueError("a net point has no admissible parent; "
                                 "increase parent_radius_factor")
            width = max(lens)
            adm = np.zeros((cur.shape[0], width), dtype=np.intp)
            for j, row in enumerate(adm_rows):
                adm[j, :row.shape[0]] = row
            self.admissible[k] = adm
            self.adm_len[k] = np.array(lens, dtype=np.intp)
            self.force_nearest[k] = np.array(forced, dtype=bool)

    def parent_slots(self, k: int, choice: int):
        """Per level-k net point, the chosen parent's slot at level k-1.

        A net point inside the half-separation core of its nearest coarser
        net point keeps that parent in every configuration (a coarser net
        point is always its own parent, at distance zero); only contested
        points near cell boundaries follow the configuration's choice.
        """
        adm = self.admissible[k]
        picked = adm[np.arange(adm.shape[0]), choice % self.adm_len[k]]
        return np.where(self.force_nearest[k], adm[:, 0], picked)

    def assignments(self, config: RandomConfig):
        """Per level, the cube slot of every ground atom.

        Membership flows bottom-up: an atom joins the cell of its nearest
        finest-level net point and each coarser cube is the union of its
        descendants' cells, so an atom is never further than the chain of
        parent hops (a geometric series in delta) from its cube's center.
        """
        nets = self.nets
        k_lo, k_hi = nets.level_range
        parents = {k: self.parent_slots(k, config.choice(k))
                   for k in range(k_lo + 1, k_hi + 1)}
        assign = {k_hi: self.finest_assign.copy()}
        for k in range(k_hi, k_lo, -1):
            assign[k - 1] = parents[k][assign[k]]
        return assign, parents


@dataclass
class DyadicLattice:
    nets: NetHierarchy
    config: RandomConfig
    cubes: dict                # (level, slot) -> DyadicCube
    assignments: dict          # level -> atom slot array
    parent_slots: dict         # level -> per-net-point parent slot

    @property
    def delta(self):
        return self.nets.delta

    @property
    def level_range(self):
        return self.nets.level_range

    def cube(self, level: int, slot: int) -> DyadicCube:
        return self.cubes[(level, slot)]

    def level_cubes(self, level: int):
        n = self.nets.levels[level].shape[0]
        return [self.cubes[(level, s)] for s in range(n)]

    def atom_cube(self, level: int, atom_index: int) -> DyadicCube:
        return self.cubes[(level, int(self.assignments[level][atom_index]))]

    def check_partition(self) -> bool:
        n_atoms = self.nets.ground.points.shape[0]
        for k in range(*_inclusive(self.level_range)):
            counts = np.zeros(n_atoms, dtype=int)
            for cube in self.level_cubes(k):
                counts[cube.atom_indices] += 1
            if not np.all(counts == 1):
                return False
        return True

    def check_nesting(self) -> bool:
        k_lo, k_hi = self.level_range
        for k in range(k_lo + 1, k_hi + 1):
            for cube in self.level_cubes(k):
                if cube.size == 0:
                    continue
                parent = self.cubes[cube.parent_key]
                if not set(cube.atom_indices) <= set(parent.atom_indices):
                    return False
        return True

    def containment_constants(self):
        """Measured (c_small, C_big): inner and outer radii over delta^k.

        c_small is 0 when some nonempty cube does not contain its own
        center atom; C_big is the worst outer radius.
        """
        pts = self.nets.ground.points
        c_small, c_big = math.inf, 0.0
        for cube in self.cubes.values():
            if cube.size == 0:
                continue
            scale = cube.side
            d = np.sqrt(((pts - cube.center) ** 2).sum(-1))
            members = np.zeros(pts.shape[0], dtype=bool)
            members[cube.atom_indices] = True
            c_big = max(c_big, float(d[members].max()) / scale)
            if not members[cube.center_index]:
                c_small = 0.0
            elif (~members).any():
                c_small = min(c_small, float(d[~members].min()) / scale)
        if not math.isfinite(c_small):
            c_small = c_big  # single all-atom cube chain: no outside atoms
        return c_small, c_big


def _inclusive(level_range):
    return level_range[0], level_range[1] + 1


def build_lattice(nets: NetHierarchy, config: RandomConfig = REFERENCE,
                  parent_radius_factor: float = PARENT_RADIUS_FACTOR,
                  _engine: _LatticeEngine = None) -> DyadicLattice:
    """Materialize one realization as linked cube objects."""
    engine = _engine or _LatticeEngine(nets, parent_radius_factor)
    assign, parents = engine.assignments(config)
    k_lo, k_hi = nets.level_range
    pts = nets.ground.points
    cubes = {}
    for k in range(k_lo, k_hi + 1):
        net = nets.levels[k]
        members = [[] for _ in range(net.shape[0])]
        for atom, slot in enumerate(assign[k]):
            members[slot].append(atom)
        for s in range(net.shape[0]):
            parent_key = (k - 1, int(parents[k][s])) if k > k_lo else None
            cube = DyadicCube(
                level=k, slot=s, center_index=int(net[s]),
                center=pts[net[s]],
                atom_indices=np.array(members[s], dtype=np.intp),
                parent_key=parent_key, side=nets.scale(k))
            cubes[(k, s)] = cube
            if parent_key is not None:
                cubes[parent_key].children_keys.append((k, s))
    return DyadicLattice(nets=nets, config=config, cubes=cubes,
                         assignments=assign, parent_slots=parents)


def lattice_records(lattice: DyadicLattice):
    """Dump: one record per cube (level, slot, center, parent, atom count)."""
    out = []
    for (k, s), cube in sorted(lattice.cubes.items()):
        out.append({
            "level": k,
            "slot": s,
            "center": [float(c) for c in cube.center],
            "parent": list(cube.parent_key) if cube.parent_key else None,
            "atoms": cube.size,
        })
    return out


# ------------------------------------------------------------ restriction


@dataclass(frozen=True)
class RestrictedLattice:
    """Cubes below the top cube of a ball: the system D_B(omega)."""

    ball: BallSpec
    k0: int
    top_key: tuple
    cubes: dict
    lattice: DyadicLattice

    @property
    def top(self) -> DyadicCube:
        return self.cubes[self.top_key]

    def cubes_at_level(self, level: int):
        return [c for c in self.cubes.values() if c.level == level]


def top_level_for_radius(delta: float, r: float) -> int:
    """The unique k0 with r < delta^k0 / 8 <= r / delta."""
    if r <= 0:
        raise ValueError("radius must be positive")
    k_est = int(math.floor(math.log(8.0 * r) / math.log(delta)))
    for k in range(k_est - 3, k_est + 4):
        scale = delta ** k
        if 8.0 * r < scale <= 8.0 * r / delta:
            return k
    raise ValueError("no valid top level; radius out of float range")


def restrict_to_ball(lattice: DyadicLattice, B: BallSpec) -> RestrictedLattice:
    """D_B(omega): the top cube at the ball's scale plus all descendants.

    The ball must be centred at the hierarchy's fixed reference point; the
    top level k0 satisfies r < delta^k0/8 <= r/delta, and the inclusion of
    B's atoms in the top cube is asserted atom by atom.
    """
    nets = lattice.nets
    center = as_point(B.center, nets.ground.dim)
    if not np.array_equal(center, nets.fixed_point):
        raise ValueError("ball center must be the hierarchy's fixed point")
    k0 = top_level_for_radius(lattice.delta, B.radius)
    k_lo, k_hi = lattice.level_range
    if not (k_lo <= k0 <= k_hi):
        raise ValueError(
            f"top level {k0} outside built range [{k_lo}, {k_hi}]; "
            "rebuild nets with a wider level range or change the radius")
    top_slot = int(lattice.assignments[k0][nets.fixed_index])
    top_key = (k0, top_slot)

    in_ball = B.contains(nets.ground.points)
    ok = lattice.assignments[k0][in_ball] == top_slot
    if not np.all(ok):
        raise ValueError("ball is not contained in its top cube; the "
                         "radius/scale relation was violated")

    keep = {top_key: lattice.cubes[top_key]}
    frontier = [top_key]
    while frontier:
        key = frontier.pop()
        for child in lattice.cubes[key].children_keys:
            keep[child] = lattice.cubes[child]
            frontier.append(child)
    return RestrictedLattice(ball=B, k0=k0, top_key=top_key, cubes=keep,
                             lattice=lattice)


# -------------------------------------------------------------- goodness


@dataclass(frozen=True)
class GoodnessParams:
    gamma: float
    r: int

    def __post_init__(self):
        if not (0.0 < self.gamma < 0.5):
            raise ValueError("gamma must lie in (0, 1/2)")
        if self.r < 1:
            raise ValueError("r must be a positive integer")

    @classmethod
    def from_exponents(cls, alpha: float, m: float, r: int):
        return cls(gamma=alpha / (2.0 * (m + alpha)), r=r)


def _distance_row_to_atoms(ground_points, atom_indices):
    d = np.full(ground_points.shape[0], np.inf)
    for i in atom_indices:
        d = np.minimum(d, np.sqrt(
            ((ground_points - ground_points[i]) ** 2).sum(-1)))
    return d


def is_good(R: DyadicCube, restricted: RestrictedLattice,
            params: GoodnessParams) -> bool:
    """Goodness of a reference cube R against one restricted system.

    R passes when every restricted cube Q at least r levels coarser
    satisfies max(d(R,Q), d(R, E minus Q)) >= side(R)^gamma side(Q)^(1-gamma).
    Cubes with side(R) >= delta^r * side(top cube) are good outright, per
    the theory's explicit grant; the distances are mins over atom sets and
    an all-atom Q makes the complement distance +inf.
    """
    if R.level <= restricted.k0 + params.r:
        return True
    ground = restricted.lattice.nets.ground.points
    d_row = _distance_row_to_atoms(ground, R.atom_indices)
    delta = restricted.lattice.delta
    for Q in restricted.cubes.values():
        if Q.level > R.level - params.r or Q.size == 0:
            continue
        mask = np.zeros(ground.shape[0], dtype=bool)
        mask[Q.atom_indices] = True
        d_RQ = float(d_row[mask].min())
        d_Rcomp = float(d_row[~mask].min()) if (~mask).any() else math.inf
        threshold = (delta ** R.level) ** params.gamma * \
            (delta ** Q.level) ** (1.0 - params.gamma)
        if max(d_RQ, d_Rcomp) < threshold:
            return False
    return True


# ---------------------------------------------------- badness probability


@dataclass(frozen=True)
class BadnessEstimate:
    r: int
    probability: float
    ci_low: float
    ci_high: float
    n_seeds: int
    n_bad: int


def _coarsest_violation(engine, R_level, d_row, k0, scope_hi, config,
                        fixed_index, gamma):
    """Min level of a restricted cube violating the goodness inequality
    against R, or None. One lattice realization."""
    nets = engine.nets
    assign, _ = engine.assignments(config)
    top_slot = int(assign[k0][fixed_index])
    in_top = assign[k0] == top_slot
    delta = nets.delta
    thr_R = (delta ** R_level) ** gamma
    for level in range(k0, scope_hi + 1):
        slots = np.unique(assign[level][in_top])
        threshold = thr_R * (delta ** level) ** (1.0 - gamma)
        for s in slots:
            mask = assign[level] == s
            d_RQ = float(d_row[mask].min())
            if d_RQ >= threshold:
                continue
            rest = ~mask
            d_Rcomp = float(d_row[rest].min()) if rest.any() else math.inf
            if d_Rcomp < threshold:
                return level
    return None


def badness_profile(nets: NetHierarchy, ball: BallSpec, R: DyadicCube,
                    gamma: float, r_values, n_seeds: int = 2000,
                    seed: int = 0, L: int = 4, M: int = 5,
                    parent_radius_factor: float = PARENT_RADIUS_FACTOR):
    """Empirical badness probability of R for each r, on shared seeds.

    Per seed, all r values are answered at once via the coarsest violating
    level: R is bad for r exactly when some restricted cube at level
    <= level(R) - r violates the inequality and R is not automatically
    good. Sharing seeds across r makes the non-increase in r exact, not
    statistical. Returns a list of BadnessEstimate plus the fitted decay
    exponent eta_hat from log p(r) = log C + (gamma ln delta) eta r.
    """
    engine = _LatticeEngine(nets, parent_radius_factor)
    k0 = top_level_for_radius(nets.delta, ball.radius)
    k_lo, k_hi = nets.level_range
    if not (k_lo <= k0 <= k_hi):
        raise ValueError("ball scale outside the built level range")
    if R.level > k_hi:
        raise ValueError("R finer than the finest built level")
    r_values = sorted(int(r) for r in r_values)
    if r_values[0] < 1:
        raise ValueError("r must be positive")
    d_row = _distance_row_to_atoms(nets.ground.points, R.atom_indices)
    scope_hi = min(R.level - r_values[0], k_hi)

    counts = {r: 0 for r in r_values}
    for trial in range(n_seeds):
        config = RandomConfig(seed=stream(seed, "badness-seed", trial)
                              .integers(0, 2 ** 62), L=L, M=M,
                              randomize_range=(k0, k_hi))
        if scope_hi < k0:
            break  # every r vacuously good
        lstar = _coarsest_violation(engine, R.level, d_row, k0, scope_hi,
                                    config, nets.fixed_index, gamma)
        if lstar is None:
            continue
        for r in r_values:
            if R.level > k0 + r and lstar <= R.level - r:
                counts[r] += 1

    out = []
    for r in r_values:
        lo, hi = wilson_interval(counts[r], n_seeds)
        out.append(BadnessEstimate(r=r, probability=counts[r] / n_seeds,
                                   ci_low=lo, ci_high=hi,
                                   n_seeds=n_seeds, n_bad=counts[r]))
    return out, fit_decay(nets.delta, gamma, out)


def fit_decay(delta: float, gamma: float, estimates):
    """Least-squares eta_hat assuming p(r) ~ C delta^(gamma r eta)."""
    pts = [(e.r, math.log(e.probability)) for e in estimates
           if e.probability > 0.0]
    if len(pts) < 2:
        return {"eta_hat": None, "n_points": len(pts)}
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    slope = float(np.polyfit(xs, ys, 1)[0])
    return {"eta_hat": slope / (gamma * math.log(delta)),
            "n_points": len(pts), "slope": slope}


def estimate_badness_probability(nets: NetHierarchy, ball: BallSpec,
                                 R: DyadicCube, params: GoodnessParams,
                                 n_seeds: int = 2000, seed: int = 0,
                                 L: int = 4, M: int = 5) -> BadnessEstimate:
    """Monte Carlo badness probability of R at one r, with a Wilson CI."""
    if n_seeds < 100:
        raise ValueError("need at least 100 seeds for a meaningful interval")
    estimates, _ = badness_profile(nets, ball, R, params.gamma, [params.r],
                                   n_seeds=n_seeds, seed=seed, L=L, M=M)
    return estimates[0]
