"""Height-lambda decomposition oracles and the non-doubling helper checks.

Every postcondition of cz_decompose is recomputed here with plain loops
over the raw atom arrays (math.dist + math.fsum only), independent of the
package's vectorized paths.
"""

import math
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conesq.czdecomp import (cz_decompose, cz_records,
                             nondoubling_annulus_bound_check,
                             smallest_doubling_dilate, verify_decomposition,
                             weak11_experiment)
from conesq.geometry import BallSpec
from conesq.measure import (AtomicMeasure, ComplexAtomicMeasure, ball_mass,
                            is_doubling)
from conesq.operators import QuadratureConfig, inverse_power_kernel


def segment_points(n):
    return np.stack([np.linspace(0.0, 1.0, n), np.zeros(n)], axis=1)


def uniform_segment(n):
    return AtomicMeasure(segment_points(n), np.full(n, 1.0 / n))


def density_holds(nu_pts, nu_absw, mu_pts, mu_w, center, s, lam, dim):
    """The height-lambda density predicate, recomputed with plain loops."""
    lhs = math.fsum(w for p, w in zip(nu_pts, nu_absw)
                    if math.dist(p, center) <= s)
    rhs = math.fsum(w for p, w in zip(mu_pts, mu_w)
                    if math.dist(p, center) <= 2.0 * s)
    return lhs > 2.0 ** (-(dim + 1)) * lam * rhs


def predicate_criticals(nu_pts, mu_pts, center):
    vals = {0.0}
    vals.update(math.dist(p, center) for p in nu_pts)
    vals.update(math.dist(p, center) / 2.0 for p in mu_pts)
    return sorted(vals)


def ball_counts(balls, pts):
    return [sum(1 for b in balls if math.dist(p, b.center) <= b.radius)
            for p in pts]


def two_spike_scenario():
    n = 60
    pts = segment_points(n)
    w = 1.0 + 0.5 * np.sin(np.arange(n))
    mu = AtomicMeasure(pts, w / math.fsum(w.tolist()))
    wn = 0.002 * np.exp(1j * 0.7 * np.arange(n))
    wn[15] += 0.45
    wn[40] += 0.35j
    return mu, ComplexAtomicMeasure(pts, wn), 12.0


def test_lambda_threshold_is_enforced():
    mu = uniform_segment(40)
    nu = ComplexAtomicMeasure(mu.points, mu.weights.astype(np.complex128))
    # threshold 2^(n+1) |nu| / mu(total) = 8 here
    with pytest.raises(ValueError):
        cz_decompose(nu, mu, 8.0, m=1.0)
    with pytest.raises(ValueError):
        cz_decompose(nu, mu, 7.9, m=1.0)
    cz_decompose(nu, mu, 8.01, m=1.0)
    zero = AtomicMeasure(mu.points, np.zeros(40))
    with pytest.raises(ValueError):
        cz_decompose(nu, zero, 100.0, m=1.0)
    nu3 = ComplexAtomicMeasure(np.zeros((2, 3)) + np.arange(2)[:, None],
                               np.ones(2, dtype=np.complex128))
    with pytest.raises(ValueError):
        cz_decompose(nu3, mu, 100.0, m=1.0)


def test_identical_measures_need_no_balls():
    """nu = mu above threshold: the density predicate would force a ball
    mass to exceed the bigger ball's, so no atom qualifies and f = 1."""
    mu = uniform_segment(40)
    nu = ComplexAtomicMeasure(mu.points, mu.weights.astype(np.complex128))
    lam = 8.0 * 1.01
    dec = cz_decompose(nu, mu, lam, m=1.0)
    assert dec.balls == ()
    assert dec.companions == ()
    assert dec.overlap == 0
    assert dec.c1_measured == 0.0
    assert np.all(dec.f == 1.0 + 0.0j)
    assert dec.g_inf == pytest.approx(1.0 / lam, rel=1e-12)
    assert verify_decomposition(dec)["all_pass"]


def test_single_spike_ball_and_bookkeeping():
    n = 50
    mu = uniform_segment(n)
    wn = np.zeros(n, dtype=np.complex128)
    wn[25] = 1.0
    nu = ComplexAtomicMeasure(mu.points, wn)
    dec = cz_decompose(nu, mu, 20.0, m=1.0)
    assert dec.size == 1
    ball = dec.balls[0]
    assert np.array_equal(ball.center, mu.points[25])
    # the density run ends where the doubled ball reaches 20 atoms:
    # 2s = 10 spacings, so the chosen radius is half of 5 spacings
    assert ball.radius == pytest.approx(5.0 / 98.0, rel=1e-9)
    assert density_holds(nu.points, np.abs(nu.weights), mu.points, mu.weights,
                         ball.center, ball.radius, 20.0, 2)
    assert not density_holds(nu.points, np.abs(nu.weights), mu.points,
                             mu.weights, ball.center, 2.0 * ball.radius,
                             20.0, 2)
    # the bump restores the full spike mass
    phi = dec.phi_values(0)
    integral = math.fsum((phi * mu.weights).real.tolist())
    assert integral == pytest.approx(1.0, rel=1e-12)
    assert math.fsum((phi * mu.weights).imag.tolist()) == pytest.approx(0.0, abs=1e-15)
    companion = dec.companions[0]
    assert companion.radius > 4.0 * ball.radius
    assert is_doubling(mu, companion, 6.0, 36.0)
    (rec,) = cz_records(dec)
    assert rec["nu_mass"] == 1.0
    assert 0.15 < rec["mu_2B"] < 0.25
    assert rec["companion_radius"] == companion.radius
    assert verify_decomposition(dec)["all_pass"]


def test_two_spike_background_oracle():
    """Full independent recheck of every postcondition on a mixed-phase
    measure with two spikes over a nonuniform background."""
    mu, nu, lam = two_spike_scenario()
    dec = cz_decompose(nu, mu, lam, m=1.0)
    assert dec.size == 3
    assert dec.overlap == 2
    nu_absw = np.abs(nu.weights)

    for ball in dec.balls:
        assert density_holds(nu.points, nu_absw, mu.points, mu.weights,
                             ball.center, ball.radius, lam, 2)
        crits = predicate_criticals(nu.points, mu.points, ball.center)
        for s in [2.0 * ball.radius] + [c for c in crits
                                        if c > 2.0 * ball.radius]:
            assert not density_holds(nu.points, nu_absw, mu.points,
                                     mu.weights, ball.center, s, lam, 2)

    counts = ball_counts(dec.balls, nu.points)
    assert max(counts) == dec.overlap
    # master identity: f mu + sum of ball shares reproduces nu atomwise
    for j in range(nu.size):
        share = math.fsum(
            [nu.weights[j].real / counts[j]] * counts[j]) if counts[j] else 0.0
        share_im = math.fsum(
            [nu.weights[j].imag / counts[j]] * counts[j]) if counts[j] else 0.0
        got = dec.f[j] * mu.weights[j] + complex(share, share_im)
        assert abs(got - nu.weights[j]) <= 1e-12
        if counts[j]:
            assert dec.f[j] == 0.0

    assert float(np.abs(dec.f).max()) <= lam

    phi_total = np.zeros(mu.size)
    for i, (ball, companion) in enumerate(zip(dec.balls, dec.companions)):
        phi = dec.phi_values(i)
        inside = [math.dist(p, companion.center) <= companion.radius
                  for p in mu.points]
        for j in range(mu.size):
            if phi[j] != 0.0:
                assert inside[j]
        # bump integral equals the ball's equal-split nu share
        share = complex(
            math.fsum(nu.weights[j].real / counts[j]
                      for j in range(nu.size)
                      if counts[j] and math.dist(nu.points[j], ball.center)
                      <= ball.radius),
            math.fsum(nu.weights[j].imag / counts[j]
                      for j in range(nu.size)
                      if counts[j] and math.dist(nu.points[j], ball.center)
                      <= ball.radius))
        integral = complex(math.fsum((phi * mu.weights).real.tolist()),
                           math.fsum((phi * mu.weights).imag.tolist()))
        assert abs(integral - share) <= 1e-12
        # bump size against the ball's variation mass
        mass_R = math.fsum(mu.weights[j] for j in range(mu.size) if inside[j])
        nu_B = math.fsum(nu_absw[j] for j in range(nu.size)
                         if math.dist(nu.points[j], ball.center) <= ball.radius)
        assert abs(dec.alphas[i]) * mass_R <= (1.0 + 1e-12) * nu_B
        assert companion.radius > 4.0 * ball.radius
        assert is_doubling(mu, companion, 6.0, 36.0)
        assert abs(dec.bad_piece(i).total) <= 1e-12
        phi_total += np.abs(phi)

    assert float(phi_total.max()) <= dec.c1_measured * lam * (1.0 + 1e-12)
    g = dec.good_function()
    assert float(np.abs(g).max()) == pytest.approx(dec.g_inf * lam, rel=1e-12)
    assert verify_decomposition(dec)["all_pass"]


def test_verification_flags_tampering():
    mu, nu, lam = two_spike_scenario()
    dec = cz_decompose(nu, mu, lam, m=1.0)
    doubled = replace(dec, alphas=tuple(2.0 * a for a in dec.alphas))
    report = verify_decomposition(doubled)
    assert not report["cz5_bump_integral"]
    assert not report["all_pass"]
    shifted = replace(dec, f=dec.f + 0.5)
    report = verify_decomposition(shifted)
    assert not report["cz3_leftover_identity"]
    assert not report["all_pass"]


def test_smallest_doubling_dilate_frozen_cases():
    # all mass at the center: no critical dilates, fallback 2 * min_dilate
    mu = AtomicMeasure(np.array([[0.0, 0.0]]), np.array([2.0]))
    R = smallest_doubling_dilate(mu, BallSpec([0.0, 0.0], 0.5, closed=True),
                                 6.0, 36.0, m=1.0)
    assert R.radius == 1.0
    # mass on a far circle: the scan must stretch to reach it
    th = np.linspace(0.0, 2.0 * np.pi, 12, endpoint=False)
    sphere = AtomicMeasure(5.0 * np.stack([np.cos(th), np.sin(th)], axis=1),
                           np.ones(12))
    R = smallest_doubling_dilate(sphere, BallSpec([0.0, 0.0], 1.0, closed=True),
                                 6.0, 36.0, m=1.0)
    assert R.radius == 5.0
    for s in np.linspace(1.001, 4.999, 40):
        assert not is_doubling(sphere, BallSpec([0.0, 0.0], float(s),
                                               closed=True), 6.0, 36.0)
    # minimality among critical dilates on a uniform grid
    mu = uniform_segment(30)
    B = BallSpec(mu.points[15], 1.0 / 29.0, closed=True)
    R = smallest_doubling_dilate(mu, B, 6.0, 36.0, m=1.0, min_dilate=4.0)
    assert R.radius > 4.0 * B.radius
    d = mu.distances_to(B.center)
    crits = sorted(set((d / B.radius).tolist())
                   | set((d / (6.0 * B.radius)).tolist()))
    for s in crits:
        if 4.0 < s and s * B.radius < R.radius:
            assert not is_doubling(
                mu, BallSpec(B.center, s * B.radius, closed=True), 6.0, 36.0)
    assert is_doubling(mu, R, 6.0, 36.0)


def test_smallest_doubling_dilate_validation():
    mu = uniform_segment(5)
    B = BallSpec([0.0, 0.0], 1.0, closed=True)
    with pytest.raises(ValueError):
        smallest_doubling_dilate(mu, B, 1.0, 36.0)
    with pytest.raises(ValueError):
        smallest_doubling_dilate(mu, B, 6.0, 0.0)
    with pytest.raises(ValueError):
        smallest_doubling_dilate(mu, B, 6.0, 6.0, m=1.0)
    with pytest.raises(ValueError):
        smallest_doubling_dilate(mu, BallSpec([0.0, 0.0], 0.0, closed=True),
                                 6.0, 36.0)
    with pytest.raises(ValueError):
        smallest_doubling_dilate(mu, B, 6.0, 36.0, min_dilate=0.9)


def test_annulus_bound_trivial_empty():
    # no intermediate dilates fit between the radii, annulus holds no atoms
    mu = AtomicMeasure(np.array([[0.5, 0.0], [7.0, 0.0]]), np.array([1.0, 1.0]))
    report = nondoubling_annulus_bound_check(mu, [0.0, 0.0], 1.0, 5.0,
                                             6.0, 36.0, m=1.0)
    assert report == {"skipped": False, "lhs": 0.0, "rhs": 0.2, "ratio": 0.0,
                      "powers": []}


def test_annulus_bound_geometric_chain():
    """Masses growing by 40x along radii growing by 6x: every intermediate
    dilate fails (6, 36)-doubling and the kernel integral stays within a
    small multiple of the outer density."""
    radii = [1.0, 6.0, 36.0, 216.0, 1296.0]
    pts = np.array([[r, 0.0] for r in radii] + [[7000.0, 0.0]])
    w = np.array([40.0 ** k for k in range(5)] + [40.0 ** 5])
    mu = AtomicMeasure(pts, w)
    report = nondoubling_annulus_bound_check(mu, [0.0, 0.0], 1.0, 1296.0,
                                             6.0, 36.0, m=1.0)
    assert report["skipped"] is False
    assert report["powers"] == [1, 2, 3, 4]
    lhs = math.fsum(40.0 ** k / radii[k] for k in range(1, 5))
    assert report["lhs"] == lhs
    rhs = Fraction(sum(40 ** k for k in range(5)), 1296)
    assert report["rhs"] == pytest.approx(float(rhs), rel=1e-15)
    assert report["ratio"] == lhs / report["rhs"]
    assert 1.0 < report["ratio"] < 1.3


def test_annulus_bound_skips_on_doubling():
    mu = AtomicMeasure(np.array([[1.0, 0.0], [6.0, 0.0]]),
                       np.array([1.0, 1.0]))
    report = nondoubling_annulus_bound_check(mu, [0.0, 0.0], 1.0, 36.0,
                                             6.0, 36.0, m=1.0)
    assert report == {"skipped": True, "doubling_power": 1, "powers": [1, 2]}


def test_annulus_bound_validation():
    mu = uniform_segment(5)
    with pytest.raises(ValueError):
        nondoubling_annulus_bound_check(mu, [0.0, 0.0], 2.0, 1.0, 6.0, 36.0,
                                        m=1.0)
    with pytest.raises(ValueError):
        nondoubling_annulus_bound_check(mu, [0.0, 0.0], 1.0, 2.0, 1.0, 36.0,
                                        m=1.0)
    with pytest.raises(ValueError):
        nondoubling_annulus_bound_check(mu, [0.0, 0.0], 1.0, 2.0, 6.0, 6.0,
                                        m=1.0)


WEAK_CONFIG = QuadratureConfig(seed=11, samples_per_shell=512,
                               target_rel_stderr=0.1, max_rounds=2,
                               max_shells=40)


def test_weak11_zero_measure():
    mu = uniform_segment(12)
    nu = ComplexAtomicMeasure(mu.points, np.zeros(12, dtype=np.complex128))
    kernel = inverse_power_kernel(m=1.0, alpha=1.0)
    report = weak11_experiment(kernel, mu, nu, [1.0, 2.0], s=0.05, m=1.0,
                               config=WEAK_CONFIG)
    assert report["weak_ratios"] == [0.0, 0.0]
    assert report["weak_sup"] == 0.0
    assert report["cz_lambda"] is None
    assert report["single_ball"] == []


def test_weak11_spike_stays_bounded():
    n = 24
    mu = uniform_segment(n)
    wn = np.zeros(n, dtype=np.complex128)
    wn[n // 2] = 1.0
    nu = ComplexAtomicMeasure(mu.points, wn)
    kernel = inverse_power_kernel(m=1.0, alpha=1.0)
    report = weak11_experiment(kernel, mu, nu, [0.5, 2.0, 8.0, 20.0, 60.0],
                               s=0.05, m=1.0, config=WEAK_CONFIG)
    assert len(report["weak_ratios"]) == 5
    assert all(r >= 0.0 and math.isfinite(r) for r in report["weak_ratios"])
    assert 1.0 <= report["weak_sup"] <= 8.0
    assert report["cz_lambda"] == 60.0
    assert len(report["single_ball"]) == 1
    record = report["single_ball"][0]
    assert record["nu_mass"] == 1.0
    assert 0.0 < record["ratio"] < 10.0
    assert record["integral"] == record["ratio"]


def test_weak11_budget_and_validation():
    mu = uniform_segment(24)
    wn = np.zeros(24, dtype=np.complex128)
    wn[12] = 1.0
    nu = ComplexAtomicMeasure(mu.points, wn)
    kernel = inverse_power_kernel(m=1.0, alpha=1.0)
    with pytest.raises(ValueError, match="budget"):
        weak11_experiment(kernel, mu, nu, [1.0], s=0.05, m=1.0,
                          config=WEAK_CONFIG, max_quadratures=10)
    with pytest.raises(ValueError):
        weak11_experiment(kernel, mu, nu, [], s=0.05, m=1.0,
                          config=WEAK_CONFIG)
    with pytest.raises(ValueError):
        weak11_experiment(kernel, mu, nu, [1.0, -2.0], s=0.05, m=1.0,
                          config=WEAK_CONFIG)
    with pytest.raises(ValueError):
        weak11_experiment(kernel, mu, nu, [1.0], s=0.0, m=1.0,
                          config=WEAK_CONFIG)


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_decomposition_identity_random(data):
    """cz_decompose self-verifies; on top of that the reconstruction
    f mu + sum of shares must reproduce nu exactly, for any atom layout."""
    n = data.draw(st.integers(3, 14))
    mu_w = np.array(data.draw(st.lists(
        st.floats(0.01, 2.0), min_size=n, max_size=n)))
    mags = np.array(data.draw(st.lists(
        st.floats(0.0, 1.0), min_size=n, max_size=n)))
    phases = np.array(data.draw(st.lists(
        st.floats(0.0, 2.0 * math.pi), min_size=n, max_size=n)))
    factor = data.draw(st.floats(1.05, 6.0))
    pts = segment_points(n)
    mu = AtomicMeasure(pts, mu_w)
    nu = ComplexAtomicMeasure(pts, mags * np.exp(1j * phases))
    tv = nu.total_variation.total_mass
    lam = 8.0 * tv / mu.total_mass * factor if tv > 0.0 else 1.0
    dec = cz_decompose(nu, mu, lam, m=1.0)
    counts = ball_counts(dec.balls, pts)
    for j in range(n):
        got = dec.f[j] * mu.weights[j] + (nu.weights[j] if counts[j] else 0.0)
        assert abs(got - nu.weights[j]) <= 1e-9 * max(1.0, abs(nu.weights[j]))
