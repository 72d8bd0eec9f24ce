"""Suppression thresholds, carved region, and the big-piece set.

The density radius is checked against closed forms and a dense grid
scan; quadrature-level claims (domination, agreement off the exceptional
set) compare suppressed and plain values computed from the same sample
streams, so they are float-exact, not statistical.
"""

import math

import numpy as np
import pytest

from conesq.geometry import BallSpec, PointCloud
from conesq.measure import AtomicMeasure
from conesq.operators import (QuadratureConfig, inverse_power_kernel,
                              kernel_estimate_check, square_function)
from conesq.suppression import (BigPieceSet, build_big_piece,
                                build_suppression, compute_thresholds,
                                suppress_kernel, suppressed_square_function,
                                threshold_radius, truncation_threshold)

N_ATOMS = 24
HEAVY = 12
S_MIN = 0.01
CONFIG = QuadratureConfig(seed=3, samples_per_shell=256,
                          target_rel_stderr=0.2, max_rounds=1, max_shells=40)


def peak_scene():
    pts = np.column_stack([np.linspace(0.0, 1.0, N_ATOMS), np.zeros(N_ATOMS)])
    w = np.full(N_ATOMS, 1.0 / N_ATOMS)
    w[HEAVY] = 3.0
    mu = AtomicMeasure(pts, w)
    kern = inverse_power_kernel(1.0, 1.0)
    b = np.ones(N_ATOMS, dtype=complex)
    ball = BallSpec(pts[N_ATOMS // 2], 0.4, closed=True)
    return pts, mu, kern, b, ball


@pytest.fixture(scope="module")
def wide():
    pts, mu, kern, b, ball = peak_scene()
    sup = build_suppression(kern, b, mu, ball, 40.0, 2.0, S_MIN, CONFIG)
    return pts, mu, kern, b, ball, sup


@pytest.fixture(scope="module")
def narrow():
    pts, mu, kern, b, ball = peak_scene()
    sup = build_suppression(kern, b, mu, ball, 200.0, 50.0, S_MIN, CONFIG)
    return pts, mu, kern, b, ball, sup


def test_density_radius_single_atom_closed_form():
    mu = AtomicMeasure(np.array([[0.0, 0.0]]), np.array([0.7]))
    assert threshold_radius(mu, [0.0, 0.0], 2.0, 1.0) == \
        pytest.approx(0.7 / 22.0, rel=1e-14)
    assert threshold_radius(mu, [0.0, 0.0], 2.0, 2.0) == \
        pytest.approx(math.sqrt(0.7 / 242.0), rel=1e-14)
    # mass at distance 1 that never reaches the bar: empty set, radius zero
    far = AtomicMeasure(np.array([[1.0]]), np.array([0.5]))
    assert threshold_radius(far, [0.0], 1.0, 1.0) == 0.0
    with pytest.raises(ValueError, match="positive"):
        threshold_radius(mu, [0.0, 0.0], 0.0, 1.0)


def test_density_radius_matches_grid_scan():
    mu = AtomicMeasure(np.array([[0.0], [1.0], [3.0]]),
                       np.array([0.5, 5.0, 40.0]))
    r = threshold_radius(mu, [0.0], 1.0, 1.0)
    # qualifying radii re-trigger at the far atom: sup sits on the last piece
    assert r == pytest.approx(45.5 / 11.0, rel=1e-14)
    dists = mu.distances_to(np.array([0.0]))
    grid = np.linspace(1e-6, 10.0, 20001)
    qualifying = [g for g in grid
                  if math.fsum(mu.weights[dists <= g].tolist()) >= 11.0 * g]
    assert abs(max(qualifying) - r) <= grid[1] - grid[0]
    # the middle piece does not qualify even though the first one does
    assert math.fsum(mu.weights[dists <= 1.0].tolist()) < 11.0 * 1.0


def test_thresholds_empty_when_lambda_huge(wide):
    pts, mu, kern, b, ball = peak_scene()
    sup = build_suppression(kern, b, mu, ball, 600.0, 2.0, S_MIN, CONFIG)
    assert not sup.s0_mask.any()
    assert not sup.s_mask.any()
    assert sup.region.size == 0
    assert (sup.t_vals == 0.0).all()
    # empty region: the suppressed call is the plain call, same numbers
    for i in (3, HEAVY):
        plain = square_function(kern, mu, b, pts[i], S_MIN, math.inf, CONFIG,
                                point_key=i)
        supp = suppressed_square_function(kern, sup.region, mu, b, pts[i],
                                          S_MIN, math.inf, CONFIG,
                                          point_key=i)
        assert supp.value == plain.value
        assert supp.stderr == plain.stderr
    # the stored values come from the same streams as direct calls
    assert sup.values[HEAVY] == pytest.approx(485.46146900214137, rel=1e-6)


def test_threshold_input_validation():
    pts, mu, kern, b, ball = peak_scene()
    with pytest.raises(ValueError, match="positive"):
        compute_thresholds(kern, b, mu, ball, 0.0, 2.0, S_MIN, CONFIG)
    with pytest.raises(ValueError, match="positive"):
        compute_thresholds(kern, b, mu, ball, 40.0, 2.0, 0.0, CONFIG)


def test_wide_peak_pattern_and_dichotomy(wide):
    pts, mu, kern, b, ball, sup = wide
    assert sorted(np.flatnonzero(sup.s0_mask)) == list(range(7, 19))
    peaks = np.flatnonzero(sup.s0_mask)
    # peaks carry a positive truncation threshold, at least the floor
    assert (sup.t_vals[peaks] >= S_MIN).all()
    assert (sup.t_vals[~sup.s0_mask] == 0.0).all()
    # cap dichotomy: twice the truncation threshold against density radius
    for j, i in enumerate(peaks):
        t, r = sup.t_vals[i], sup.r_vals[i]
        assert sup.region.caps[j] == (2.0 * t if t >= r else r)
    # the heavy atom sits in the density branch with an exact piece value
    assert sup.r_vals[HEAVY] == pytest.approx(3.25 / 22.0, rel=1e-12)
    assert sup.t_vals[HEAVY] < sup.r_vals[HEAVY]
    # the peak set is inside its own exceptional neighborhood
    assert (sup.s_mask[peaks]).all()


def test_truncation_bisection_matches_grid(wide):
    pts, mu, kern, b, ball, sup = wide
    lam0 = 40.0
    grid = np.linspace(S_MIN, 2.0, 101)
    over = [t for t in grid
            if square_function(kern, mu, b, pts[HEAVY], t, math.inf, CONFIG,
                               point_key=HEAVY).value > lam0]
    assert over
    assert abs(sup.t_vals[HEAVY] - max(over)) <= grid[1] - grid[0]
    # direct call agrees with the stored threshold
    t_direct = truncation_threshold(kern, mu, b, pts[HEAVY], lam0, S_MIN,
                                    CONFIG, point_key=HEAVY)
    assert t_direct == sup.t_vals[HEAVY]


def test_suppressed_bounded_and_dominated(wide):
    pts, mu, kern, b, ball, sup = wide
    lam0 = sup.lam0
    for i in np.flatnonzero(sup.ball_mask):
        plain = square_function(kern, mu, b, pts[i], S_MIN, math.inf, CONFIG,
                                point_key=int(i))
        supp = suppressed_square_function(kern, sup.region, mu, b, pts[i],
                                          S_MIN, math.inf, CONFIG,
                                          point_key=int(i))
        assert supp.value <= plain.value
        assert supp.value <= lam0 + 3.0 * supp.stderr
        if sup.s0_mask[i]:
            # suppression actually bites at the peaks
            assert supp.value < plain.value


def test_exact_agreement_off_exceptional_set(narrow):
    pts, mu, kern, b, ball, sup = narrow
    assert sorted(np.flatnonzero(sup.s0_mask)) == [11, 12, 13]
    free = np.flatnonzero(sup.ball_mask & ~sup.s_mask)
    assert sorted(free) == [3, 4, 5, 6, 18, 19, 20, 21]
    for i in free:
        plain = square_function(kern, mu, b, pts[i], S_MIN, math.inf, CONFIG,
                                point_key=int(i))
        supp = suppressed_square_function(kern, sup.region, mu, b, pts[i],
                                          S_MIN, math.inf, CONFIG,
                                          point_key=int(i))
        assert supp.value == plain.value


def test_region_membership_scan_oracle(wide):
    pts, mu, kern, b, ball, sup = wide
    E = PointCloud(pts)
    rng = np.random.default_rng(17)
    xs = np.column_stack([rng.uniform(-0.2, 1.2, 400),
                          rng.uniform(-0.3, 0.3, 400)])
    got = sup.region.contains(xs)
    for x, flag in zip(xs, got):
        d = E.distance(x[None, :])[0]
        hit = any(
            np.sqrt(((x - c) ** 2).sum()) < 2.0 * d and d < cap
            for c, cap in zip(sup.region.centers, sup.region.caps))
        assert hit == flag
    assert got.any() and not got.all()


def test_suppressed_kernel_keeps_estimates(wide):
    pts, mu, kern, b, ball, sup = wide
    kern2 = suppress_kernel(kern, sup.region)
    assert kern2.name == kern.name + "-suppressed"
    assert (kern2.K1, kern2.K2) == (kern.K1, kern.K2)
    check = kernel_estimate_check(kern2, PointCloud(pts), 2000)
    assert check["passes"]
    # a point straight above a peak center, below its cap, is zeroed
    center = sup.region.centers[0]
    cap = sup.region.caps[0]
    x = center + np.array([0.0, 0.5 * cap])
    assert sup.region.contains(x[None, :])[0]
    assert kern2.evaluate(x, pts[0]) == 0.0
    assert kern.evaluate(x, pts[0]) != 0.0


def test_big_piece_trivial_full_ball():
    pts, mu, kern, b, ball = peak_scene()
    zeros = np.zeros(N_ATOMS, dtype=bool)
    bp = build_big_piece([zeros] * 5, zeros, zeros, mu, ball, 0.25)
    assert isinstance(bp, BigPieceSet)
    assert (bp.p0 == 1.0).all()
    assert (bp.g_mask == bp.ball_mask).all()
    assert bp.report["holds"]
    assert bp.report["mu_big_piece"] == pytest.approx(bp.report["mu_ball"])
    assert bp.report["exceptional_fractions"] == (0.0,) * 5


def test_big_piece_engineered_half_split():
    pts, mu, kern, b, ball = peak_scene()
    left = pts[:, 0] < 0.5
    masks = [left, ~left, left, ~left]
    zeros = np.zeros(N_ATOMS, dtype=bool)
    bp = build_big_piece(masks, zeros, zeros, mu, ball, 0.5)
    assert bp.tau == pytest.approx(1.0 / 12.0)
    assert (bp.p0 == 0.5).all()
    assert (bp.g_mask == bp.ball_mask).all()
    assert bp.report["holds"]
    ball_mask = ball.contains(pts)
    mu_ball = math.fsum(mu.weights[ball_mask].tolist())
    frac_left = math.fsum(mu.weights[ball_mask & left].tolist()) / mu_ball
    assert bp.report["exceptional_fractions"] == \
        pytest.approx((frac_left, 1.0 - frac_left) * 2)


def test_big_piece_reports_violation_without_crash():
    pts, mu, kern, b, ball = peak_scene()
    ones = np.ones(N_ATOMS, dtype=bool)
    zeros = np.zeros(N_ATOMS, dtype=bool)
    bp = build_big_piece([ones, ones], zeros, zeros, mu, ball, 0.2)
    assert (bp.p0 == 0.0).all()
    assert not bp.g_mask.any()
    assert not bp.report["holds"]
    assert not bp.report["fractions_within_hypothesis"]
    assert bp.report["max_exceptional_fraction"] == 1.0


def test_big_piece_validation():
    pts, mu, kern, b, ball = peak_scene()
    zeros = np.zeros(N_ATOMS, dtype=bool)
    with pytest.raises(ValueError, match="empty"):
        build_big_piece([], zeros, zeros, mu, ball, 0.25)
    with pytest.raises(ValueError, match="cover the atoms"):
        build_big_piece([zeros], zeros[:-1], zeros, mu, ball, 0.25)
    with pytest.raises(ValueError, match="cover the atoms"):
        build_big_piece([zeros[:-1]], zeros, zeros, mu, ball, 0.25)
    with pytest.raises(ValueError, match="delta0"):
        build_big_piece([zeros], zeros, zeros, mu, ball, 1.0)


def test_suppression_records(wide):
    pts, mu, kern, b, ball, sup = wide
    records = sup.records()
    assert len(records) == N_ATOMS
    for rec in records:
        i = rec["atom"]
        assert rec["in_ball"] == bool(sup.ball_mask[i])
        assert rec["t"] == float(sup.t_vals[i])
        assert rec["r"] == float(sup.r_vals[i])
        assert rec["in_peak_set"] == bool(sup.s0_mask[i])
        assert rec["in_exceptional_set"] == bool(sup.s_mask[i])
    assert sum(r["in_peak_set"] for r in records) == 12
