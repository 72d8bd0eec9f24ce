"""Whitney-type covers of relatively open atom sets by disjoint regular balls.

Given an open proper subset U of the ground atoms, the cover construction
walks the dyadic lattice top-down for the maximal cubes whose distance to
the complement is at least rho times their side, inflates each cube to a
closed ball with a small boundary, drops balls that fail the doubling
test, and disjointifies greedily by decreasing radius. Every returned
cover is re-verified post hoc against all five contract properties; any
gap surfaces as a structured WhitneyFailure rather than a silent skip.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _core
from .geometry import BallSpec
from .measure import (
    AtomicMeasure,
    ball_mass,
    boundary_ratio,
    find_small_boundary_radius,
    has_small_boundary,
    is_doubling,
)

__all__ = [
    "WhitneyFailure",
    "WhitneyCover",
    "whitney_constants",
    "whitney_cover",
    "verify_cover",
    "cover_records",
]


class WhitneyFailure(ValueError):
    """Structured construction failure: stage name plus measured context."""

    def __init__(self, stage: str, message: str, **data):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.data = data


def whitney_constants(rho: float, delta: float):
    """Derived dilation constants: C1 = rho / 8 and C2 = (12 + rho) / (6 delta)."""
    if not (rho > 0 and 0 < delta < 1):
        raise ValueError("need rho > 0 and delta in (0, 1)")
    return rho / 8.0, (12.0 + rho) / (6.0 * delta)


@dataclass(frozen=True)
class WhitneyCover:
    """Disjoint doubling small-boundary balls covering a fixed share of U.

    balls are closed balls in the ground set (restricted flag set), aligned
    with cube_keys, the lattice cubes they inflate. D0 is the measured
    overlap count of the (C1/2)-dilates, mass_fraction the covered share
    of mu(U).
    """

    balls: tuple
    cube_keys: tuple
    a: float
    rho: float
    b: float
    kappa: float
    delta: float
    C1: float
    C2: float
    D0: int
    mass_fraction: float
    mu_U: float


def _as_mask(U, n: int) -> np.ndarray:
    arr = np.asarray(U)
    if arr.dtype == bool:
        if arr.shape != (n,):
            raise ValueError("boolean U mask must have one entry per atom")
        return arr.copy()
    idx = np.unique(arr.astype(np.int64))
    if idx.size and (idx[0] < 0 or idx[-1] >= n):
        raise ValueError("U indices out of range")
    mask = np.zeros(n, dtype=bool)
    mask[idx] = True
    return mask


def _whitney_cubes(lattice, mask, dist_to_comp, rho):
    """Maximal cubes with d(Q, complement) >= rho * side, walked top-down.

    A cube failing the gap recurses to its children; a childless failing
    cube strands its U atoms, which is a resolution failure. Cubes at the
    coarsest level may be accepted (there is no parent to witness strict
    maximality); the distance sandwich check downstream still applies to
    them and rejects the pathological cases.
    """
    k_lo, k_hi = lattice.level_range
    chosen = []
    stranded = 0
    stack = [c.key for c in lattice.level_cubes(k_lo)][::-1]
    while stack:
        key = stack.pop()
        cube = lattice.cube(*key)
        idx = np.asarray(cube.atom_indices, dtype=np.int64)
        if idx.size == 0:
            continue
        gap = float(dist_to_comp[idx].min())
        if gap >= rho * cube.side:
            chosen.append(cube)
        elif cube.children_keys:
            stack.extend(reversed(cube.children_keys))
        else:
            stranded += int(np.count_nonzero(mask[idx]))
    if stranded:
        raise WhitneyFailure(
            "resolution",
            f"{stranded} atoms of U sit in finest-level cubes that still fail "
            f"the rho-gap; deepen the lattice level range",
            stranded=stranded,
        )
    chosen.sort(key=lambda c: (c.level, c.slot))
    return chosen


def _vitali_select(balls):
    """Greedy disjoint subfamily by decreasing radius, ties by index.

    Every discarded ball meets a kept ball of radius at least its own, so
    the discarded ball lies inside the kept ball's 3-dilate.
    """
    order = sorted(range(len(balls)), key=lambda i: (-balls[i].radius, i))
    kept = []
    for i in order:
        c_i, r_i = balls[i].center, balls[i].radius
        ok = True
        for j in kept:
            c_j, r_j = balls[j].center, balls[j].radius
            if float(np.sqrt(((c_i - c_j) ** 2).sum())) <= r_i + r_j:
                ok = False
                break
        if ok:
            kept.append(i)
    return sorted(kept)


def whitney_cover(U, mu: AtomicMeasure, lattice, a: float, rho: float,
                  b: float, kappa: float) -> WhitneyCover:
    """Build and verify the Whitney-type ball cover of U.

    U is a boolean mask or index array over the lattice's ground atoms; it
    must be a nonempty proper subset (relative openness is automatic for a
    finite atom set). mu must live on the same atoms. Requires a >= 3 and
    rho >= 16 a; b and kappa are taken as given and any shortfall surfaces
    as a WhitneyFailure carrying the measured deficit.
    """
    if a < 3:
        raise ValueError("need a >= 3")
    if rho < 16 * a:
        raise ValueError("need rho >= 16 a")
    if b <= 0 or kappa <= 0:
        raise ValueError("b and kappa must be positive")
    ground = lattice.nets.ground
    pts = ground.points
    if not np.array_equal(mu.points, pts):
        raise ValueError("mu must live on the lattice ground atoms")
    n = pts.shape[0]
    mask = _as_mask(U, n)
    if not mask.any():
        raise ValueError("U must be nonempty")
    if mask.all():
        raise ValueError("U must be a proper subset of the ground set")
    delta = lattice.nets.delta
    C1, C2 = whitney_constants(rho, delta)
    mu_U = math.fsum(mu.weights[mask].tolist())

    comp = pts[~mask]
    dist_to_comp = _core.min_dist(pts, comp)
    cubes = _whitney_cubes(lattice, mask, dist_to_comp, rho)

    # distance sandwich at every cube center
    upper = (12.0 + rho) / delta
    for cube in cubes:
        d_c = float(dist_to_comp[cube.center_index])
        if not (rho * cube.side <= d_c < upper * cube.side):
            raise WhitneyFailure(
                "sandwich",
                f"cube {cube.key} has center gap {d_c:.3g} outside "
                f"[{rho * cube.side:.3g}, {upper * cube.side:.3g})",
                cube=cube.key,
                gap=d_c,
            )

    balls = []
    for cube in cubes:
        r_i = find_small_boundary_radius(mu, cube.center, 6.0 * cube.side, kappa)
        if r_i is None:
            raise WhitneyFailure(
                "small-boundary",
                f"no kappa-small boundary radius in [6, 7.2] x side for cube {cube.key}",
                cube=cube.key,
                kappa=kappa,
            )
        ball = BallSpec(cube.center, r_i, closed=True, restricted=True)
        idx = np.asarray(cube.atom_indices, dtype=np.int64)
        spread = float(np.sqrt(((pts[idx] - cube.center) ** 2).sum(axis=1)).max())
        if spread > r_i:
            raise WhitneyFailure(
                "containment",
                f"cube {cube.key} spreads {spread:.3g} beyond its ball radius {r_i:.3g}",
                cube=cube.key,
            )
        balls.append(ball)

    doubling_idx = [i for i, ball in enumerate(balls) if is_doubling(mu, ball, a, b)]
    union = np.zeros(n, dtype=bool)
    for i in doubling_idx:
        union |= balls[i].contains(pts)
    kept_mass = math.fsum(mu.weights[union].tolist())
    if kept_mass < 0.5 * mu_U:
        raise WhitneyFailure(
            "mass",
            f"doubling balls hold {kept_mass:.6g} of mu(U) = {mu_U:.6g}, "
            f"below the 1/2 threshold; b = {b} is too small for this measure",
            kept_mass=kept_mass,
            mu_U=mu_U,
            deficit=0.5 * mu_U - kept_mass,
        )

    pool = [balls[i] for i in doubling_idx]
    pool_cubes = [cubes[i] for i in doubling_idx]
    sel = _vitali_select(pool)
    final_balls = tuple(pool[i] for i in sel)
    final_keys = tuple(pool_cubes[i].key for i in sel)

    report = verify_cover(final_balls, mask, mu, a=a, rho=rho, b=b, kappa=kappa, delta=delta)
    if not report["all_pass"]:
        raise WhitneyFailure(
            "verification",
            f"post-hoc property check failed: {report}",
            report=report,
        )
    return WhitneyCover(
        balls=final_balls,
        cube_keys=final_keys,
        a=a,
        rho=rho,
        b=b,
        kappa=kappa,
        delta=delta,
        C1=C1,
        C2=C2,
        D0=report["D0"],
        mass_fraction=report["mass_fraction"],
        mu_U=mu_U,
    )


def verify_cover(balls, U, mu: AtomicMeasure, *, a, rho, b, kappa, delta) -> dict:
    """Direct recomputation of the five cover properties; returns a report.

    Checks pairwise geometric disjointness, the overlap count of the
    (C1/2)-dilates (reported as D0), C1-dilate containment in U together
    with C2-dilate contact with the complement, per-ball doubling and
    small-boundary regularity, and the 1/(2b) mass share of U.
    """
    pts = mu.points
    n = pts.shape[0]
    mask = _as_mask(U, n)
    C1, C2 = whitney_constants(rho, delta)
    k = len(balls)
    centers = np.array([ball.center for ball in balls]) if k else np.zeros((0, pts.shape[1]))
    radii = np.array([ball.radius for ball in balls]) if k else np.zeros(0)

    disjoint = True
    overlap_max = 0
    for i in range(k):
        gaps = np.sqrt(((centers - centers[i]) ** 2).sum(axis=1))
        touching = gaps <= radii + radii[i]
        if int(np.count_nonzero(touching)) > 1:
            disjoint = False
        half = gaps <= 0.5 * C1 * (radii + radii[i])
        overlap_max = max(overlap_max, int(np.count_nonzero(half)))

    inside_ok = True
    contact_ok = True
    comp_pts = pts[~mask]
    for i in range(k):
        d_atoms = np.sqrt(((pts - centers[i]) ** 2).sum(axis=1))
        covered = d_atoms <= C1 * radii[i]
        if np.any(covered & ~mask):
            inside_ok = False
        d_comp = np.sqrt(((comp_pts - centers[i]) ** 2).sum(axis=1))
        if not np.any(d_comp <= C2 * radii[i]):
            contact_ok = False

    regular_ok = all(
        is_doubling(mu, ball, a, b) and has_small_boundary(mu, ball, kappa)
        for ball in balls
    )

    union = np.zeros(n, dtype=bool)
    for ball in balls:
        union |= ball.contains(pts)
    covered_mass = math.fsum(mu.weights[union].tolist())
    mu_U = math.fsum(mu.weights[mask].tolist())
    frac = covered_mass / mu_U if mu_U > 0 else 0.0
    mass_ok = covered_mass >= mu_U / (2.0 * b)

    return {
        "disjoint": disjoint,
        "D0": overlap_max,
        "dilates_inside_U": inside_ok,
        "dilates_touch_complement": contact_ok,
        "balls_regular": regular_ok,
        "mass_ok": mass_ok,
        "mass_fraction": frac,
        "all_pass": disjoint and inside_ok and contact_ok and regular_ok and mass_ok,
    }


def cover_records(cover: WhitneyCover, mu: AtomicMeasure) -> list:
    """Per-ball dump: center, radius, doubling ratio, boundary profile."""
    out = []
    for ball, key in zip(cover.balls, cover.cube_keys):
        inner = ball_mass(mu, ball)
        outer = ball_mass(mu, ball.dilate(cover.a))
        ratio = outer / inner if inner > 0 else math.inf
        out.append(
            {
                "cube": list(key),
                "center": [float(c) for c in ball.center],
                "radius": float(ball.radius),
                "doubling_ratio": float(ratio),
                "boundary_ratio": float(boundary_ratio(mu, ball)),
            }
        )
    return out
