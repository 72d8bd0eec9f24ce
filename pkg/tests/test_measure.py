"""Masses, regularity predicates, and maximal operators against brute oracles.

Exactness contract: public mass and maximal values must agree bit-for-bit
with independently coded fsum oracles (fsum is exactly rounded, so the
summation order cannot separate two correct implementations).
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conesq.geometry import BallSpec, PointCloud
from conesq.measure import (
    AtomicMeasure,
    ComplexAtomicMeasure,
    RegularityParams,
    ball_mass,
    boundary_ratio,
    default_regularity,
    enumerate_regular_balls,
    find_small_boundary_radius,
    has_small_boundary,
    is_doubling,
    maximal_centred,
    maximal_radial,
    order_m_constant,
    order_m_off_support,
    _maximal_centred_all,
    _maximal_radial_all,
)

RNG = np.random.default_rng(414243)

def edist(a, b):
    # the distance primitive of the package contract: float64 sqrt of the
    # summed squares (math.dist rescales via hypot and can differ by 1 ulp)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.sqrt(((a - b) ** 2).sum()))



def random_measure(n_atoms, dim, rng, complex_w=False):
    pts = rng.normal(size=(n_atoms, dim))
    if complex_w:
        w = rng.normal(size=n_atoms) + 1j * rng.normal(size=n_atoms)
        return ComplexAtomicMeasure(pts, w)
    return AtomicMeasure(pts, rng.uniform(0.1, 2.0, size=n_atoms))


# ------------------------------------------------------------- construction


def test_measure_validation():
    with pytest.raises(ValueError):
        AtomicMeasure(np.zeros((2, 2)), np.array([1.0, -0.5]))
    with pytest.raises(ValueError):
        AtomicMeasure(np.array([[0.0, 0.0], [0.0, 0.0]]), np.ones(2))
    with pytest.raises(ValueError):
        AtomicMeasure(np.array([[0.0, 0.0]]), np.array([math.nan]))


def test_total_mass_is_fsum():
    w = RNG.uniform(0.0, 1.0, size=300)
    mu = AtomicMeasure(RNG.normal(size=(300, 2)), w)
    assert mu.total_mass == math.fsum(w)


def test_check_supported_exact_zero():
    cloud = RNG.normal(size=(20, 2))
    E = PointCloud(cloud)
    mu = AtomicMeasure(cloud[:10], np.ones(10))
    mu.check_supported(E)
    off = AtomicMeasure(cloud[:10] + 1e-9, np.ones(10))
    with pytest.raises(ValueError):
        off.check_supported(E)


def test_complex_polar_decomposition():
    nu = random_measure(50, 2, np.random.default_rng(5), complex_w=True)
    b = nu.polar_values()
    var = nu.total_variation
    assert np.allclose(np.abs(b), 1.0, rtol=0.0, atol=1e-15)
    assert np.allclose(b * var.weights, nu.weights, rtol=1e-15)
    assert var.total_mass == math.fsum(np.abs(nu.weights))


# ------------------------------------------------------------------ masses


def oracle_ball_mass(mu, center, radius, closed):
    picked = []
    for p, w in zip(mu.points, mu.weights):
        d = edist(p, center)
        if (d <= radius) if closed else (d < radius):
            picked.append(w)
    picked.sort()  # different summation order; fsum is exactly rounded
    return math.fsum(picked)


def test_ball_mass_point_examples():
    one = AtomicMeasure(np.array([[0.0, 0.0]]), np.array([1.0]))
    assert ball_mass(one, BallSpec([0.0, 0.0], 1.0, closed=False)) == 1.0
    edge = AtomicMeasure(np.array([[1.0, 0.0]]), np.array([1.0]))
    assert ball_mass(edge, BallSpec([0.0, 0.0], 1.0, closed=False)) == 0.0
    assert ball_mass(edge, BallSpec([0.0, 0.0], 1.0, closed=True)) == 1.0


def test_ball_mass_matches_oracle_bitwise():
    rng = np.random.default_rng(99)
    mu = random_measure(50, 3, rng)
    for _ in range(40):
        c = rng.normal(size=3)
        r = rng.uniform(0.1, 3.0)
        closed = bool(rng.integers(2))
        B = BallSpec(c, r, closed=closed)
        assert ball_mass(mu, B) == oracle_ball_mass(mu, c, r, closed)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), closed=st.booleans())
def test_ball_mass_oracle_property(seed, closed):
    rng = np.random.default_rng(seed)
    mu = random_measure(int(rng.integers(1, 40)), 2, rng)
    c = rng.normal(size=2)
    r = float(rng.uniform(0.05, 2.5))
    assert ball_mass(mu, BallSpec(c, r, closed=closed)) == \
        oracle_ball_mass(mu, c, r, closed)


def test_complex_ball_mass_splits_parts():
    nu = random_measure(60, 2, np.random.default_rng(3), complex_w=True)
    B = BallSpec([0.0, 0.0], 1.2)
    got = ball_mass(nu, B)
    mask = np.sqrt((nu.points ** 2).sum(-1)) <= 1.2
    assert got == complex(math.fsum(nu.weights.real[mask]),
                          math.fsum(nu.weights.imag[mask]))


# --------------------------------------------------------- order-m constant


def oracle_order_m(mu, m):
    best = 0.0
    for i in range(mu.size):
        for j in range(mu.size):
            r = edist(mu.points[i], mu.points[j])
            if r > 0.0:
                mass = math.fsum(
                    w for p, w in zip(mu.points, mu.weights)
                    if edist(p, mu.points[i]) <= r)
                best = max(best, mass / r ** m)
    return best


def test_order_m_single_atom_blows_up():
    one = AtomicMeasure(np.array([[0.5, 0.5]]), np.array([1.0]))
    val, details = order_m_constant(one, 1.0, return_details=True)
    assert math.isinf(val)
    assert details["radius"] == 0.0


def test_order_m_zero_measure():
    zero = AtomicMeasure(np.array([[0.0, 0.0], [1.0, 0.0]]), np.zeros(2))
    assert order_m_constant(zero, 1.0) == 0.0


def test_order_m_uniform_grid():
    # N equal atoms on a line grid: the first closed critical ball at an
    # interior centre holds 3 atoms over one spacing, so the exact constant
    # is 3(N-1)/N, approaching 3 from below.
    N = 51
    pts = np.stack([np.arange(N) / (N - 1.0), np.zeros(N)], axis=1)
    mu = AtomicMeasure(pts, np.full(N, 1.0 / N))
    got = order_m_constant(mu, 1.0)
    assert got == pytest.approx(oracle_order_m(mu, 1.0), rel=1e-12)
    assert got == pytest.approx(3.0 * (N - 1) / N, rel=1e-9)


def test_order_m_matches_oracle_random():
    mu = random_measure(40, 2, np.random.default_rng(12))
    for m in (0.5, 1.0, 1.7):
        assert order_m_constant(mu, m) == pytest.approx(
            oracle_order_m(mu, m), rel=1e-12)


def test_order_m_details_point_at_argmax():
    mu = random_measure(30, 2, np.random.default_rng(8))
    val, details = order_m_constant(mu, 1.0, return_details=True)
    i, r = details["center_index"], details["radius"]
    mass = math.fsum(
        w for p, w in zip(mu.points, mu.weights)
        if edist(p, mu.points[i]) <= r)
    assert val == pytest.approx(mass / r, rel=1e-12)


def test_order_m_rejects_bad_m():
    mu = random_measure(5, 2, np.random.default_rng(0))
    with pytest.raises(ValueError):
        order_m_constant(mu, 0.0)


def test_order_m_off_support():
    mu = AtomicMeasure(np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([1.0, 1.0]))
    vals = order_m_off_support(mu, 1.0, np.array([[0.5, 0.0], [0.0, 0.0]]))
    # centre between the atoms: best of 1/0.5 and 2/0.5
    assert vals[0] == pytest.approx(4.0)
    assert math.isinf(vals[1])


# ------------------------------------------------- doubling / small boundary


def test_is_doubling_examples():
    N = 1000
    pts = np.stack([np.arange(N) / (N - 1.0), np.zeros(N)], axis=1)
    mu = AtomicMeasure(pts, np.full(N, 1.0 / N))
    B = BallSpec([0.5, 0.0], 0.1, closed=True)
    assert is_doubling(mu, B, 10.0, 12.0)
    ratio = ball_mass(mu, B.dilate(10.0)) / ball_mass(mu, B)
    assert ratio <= 10.0

    # zero denominator: fails unless the dilated ball is empty too
    far = AtomicMeasure(np.array([[5.0, 0.0]]), np.array([1.0]))
    B_small = BallSpec([0.0, 0.0], 0.4)
    assert not is_doubling(far, B_small, 20.0, 1e9)
    assert is_doubling(far, B_small, 2.0, 1.0)

    one = AtomicMeasure(np.array([[0.0, 0.0]]), np.array([3.0]))
    assert is_doubling(one, BallSpec([0.0, 0.0], 1.0), 50.0, 1.0)


def test_is_doubling_rejects_bad_a():
    mu = random_measure(5, 2, np.random.default_rng(0))
    with pytest.raises(ValueError):
        is_doubling(mu, BallSpec([0.0, 0.0], 1.0), 0.5, 2.0)


def oracle_small_boundary(mu, center, r, kappa, closed3=True):
    # second exact route: walk atoms ordered by jump location with a
    # running prefix, one comparison per jump
    d = [edist(p, center) for p in mu.points]
    jumps = sorted(
        (abs(di / r - 1.0), wi) for di, wi in zip(d, mu.weights) if wi > 0)
    mass3 = oracle_ball_mass(mu, center, 3.0 * r, closed3)
    prefix = []
    k = 0
    while k < len(jumps):
        s = jumps[k][0]
        if s >= 1.0:
            break
        while k < len(jumps) and jumps[k][0] == s:
            prefix.append(jumps[k][1])
            k += 1
        if math.fsum(prefix) > kappa * s * mass3:
            return False
    return True


def test_small_boundary_no_annulus_atoms():
    mu = AtomicMeasure(
        np.array([[0.0, 0.0], [5.0, 0.0], [0.0, 6.0]]), np.ones(3))
    B = BallSpec([0.0, 0.0], 1.0)
    assert has_small_boundary(mu, B, 1e-6)


def test_small_boundary_atom_on_sphere_fails():
    mu = AtomicMeasure(np.array([[1.0, 0.0], [4.0, 0.0]]), np.ones(2))
    B = BallSpec([0.0, 0.0], 1.0)
    assert not has_small_boundary(mu, B, 1e6)


def test_small_boundary_segment_measure():
    N = 400
    pts = np.stack([np.arange(N) / (N - 1.0), np.zeros(N)], axis=1)
    mu = AtomicMeasure(pts, np.full(N, 1.0 / N))
    B = BallSpec([0.5, 0.0], 0.25 + 1e-4, closed=True)
    assert has_small_boundary(mu, B, 50.0)
    assert has_small_boundary(mu, B, 50.0) == \
        oracle_small_boundary(mu, [0.5, 0.0], B.radius, 50.0)


def test_small_boundary_matches_oracle_random():
    rng = np.random.default_rng(77)
    for _ in range(60):
        mu = random_measure(int(rng.integers(2, 60)), 2, rng)
        c = rng.normal(size=2)
        r = float(rng.uniform(0.2, 2.0))
        kappa = float(10.0 ** rng.uniform(-2, 2))
        got = has_small_boundary(mu, BallSpec(c, r, closed=True), kappa)
        assert got == oracle_small_boundary(mu, c, r, kappa)


def test_find_small_boundary_radius_trivial():
    mu = AtomicMeasure(
        np.array([[0.0, 0.0], [9.0, 0.0], [0.0, 9.0]]), np.ones(3))
    assert find_small_boundary_radius(mu, [0.0, 0.0], 1.0, 0.01) == 1.0


def test_find_small_boundary_radius_segment():
    N = 300
    pts = np.stack([np.arange(N) / (N - 1.0), np.zeros(N)], axis=1)
    mu = AtomicMeasure(pts, np.full(N, 1.0 / N))
    R = find_small_boundary_radius(mu, [0.5, 0.0], 0.2, 100.0)
    assert R is not None and 0.2 <= R <= 0.24
    assert has_small_boundary(mu, BallSpec([0.5, 0.0], R), 100.0)
    # dense-scan oracle: some radius passes, and none below R by more
    # than the dense grid can see
    dense = np.linspace(0.2, 0.24, 10001)
    passing = [
        float(x) for x in dense
        if oracle_small_boundary(mu, [0.5, 0.0], float(x), 100.0)]
    assert passing
    assert passing[0] <= R * (1.0 + 1e-9)


def test_find_small_boundary_radius_adversarial():
    th = np.linspace(0.0, 2.0 * math.pi, 61)[:-1]
    r0 = 1.1
    pts = r0 * np.stack([np.cos(th), np.sin(th)], axis=1)
    mu = AtomicMeasure(pts, np.full(60, 1.0 / 60))
    assert find_small_boundary_radius(mu, [0.0, 0.0], 1.0, 0.01) is None
    dense = np.linspace(1.0, 1.2, 2001)
    assert not any(
        oracle_small_boundary(mu, [0.0, 0.0], float(x), 0.01) for x in dense)


def test_boundary_ratio_is_the_small_boundary_threshold():
    pts = np.array([[0.0, 0.0], [0.9, 0.0], [1.2, 0.0], [2.5, 0.0]])
    mu = AtomicMeasure(pts, np.array([0.5, 1.0, 2.0, 0.25]))
    B = BallSpec([0.0, 0.0], 1.0)
    k = boundary_ratio(mu, B)
    # worst annulus: s just past 0.2 captures the atoms at 0.9 and 1.2,
    # total 3.0, against s * mu(3B) = 0.2 * 3.75
    assert math.isclose(k, 4.0, rel_tol=1e-12)
    assert has_small_boundary(mu, B, k * (1.0 + 1e-9))
    assert not has_small_boundary(mu, B, k * (1.0 - 1e-9))
    # dense-scan oracle approaches the ratio from below and never beats it
    d = np.sqrt(((pts - np.array([0.0, 0.0])) ** 2).sum(axis=1))
    mass3 = math.fsum(mu.weights[d <= 3.0].tolist())
    worst = 0.0
    for s in np.concatenate([np.linspace(0.005, 1.0, 400),
                             np.abs(d - 1.0) + 1e-9]):
        if not (0.0 < s <= 1.0):
            continue
        annulus = math.fsum(
            mu.weights[(d > 1.0 - s) & (d < 1.0 + s)].tolist())
        worst = max(worst, annulus / (s * mass3))
    assert worst <= k * (1.0 + 1e-9)
    assert worst >= k * (1.0 - 1e-6)


def test_boundary_ratio_degenerate_shapes():
    far = AtomicMeasure(np.array([[0.0, 0.0], [9.0, 0.0]]), np.ones(2))
    assert boundary_ratio(far, BallSpec([0.0, 0.0], 1.0)) == 0.0
    sphere = AtomicMeasure(np.array([[0.0, 0.0], [1.0, 0.0]]), np.ones(2))
    assert boundary_ratio(sphere, BallSpec([0.0, 0.0], 1.0)) == math.inf


def test_regularity_params_validation():
    with pytest.raises(ValueError):
        RegularityParams(a=0.5, b=2.0, kappa=1.0, m=1.0)
    with pytest.raises(ValueError):
        RegularityParams(a=2.0, b=2.0, kappa=-1.0, m=1.0)
    p = default_regularity(2, 1.0)
    assert p.a == 10.0 and p.b == 100.0 and p.kappa == 200.0


def test_enumerate_regular_balls_self_consistent():
    N = 120
    pts = np.stack([np.arange(N) / (N - 1.0), np.zeros(N)], axis=1)
    mu = AtomicMeasure(pts, np.full(N, 1.0 / N))
    params = default_regularity(2, 1.0)
    balls = enumerate_regular_balls(mu, params, max_balls=25)
    assert balls
    for B in balls:
        assert is_doubling(mu, B, params.a, params.b)
        assert has_small_boundary(mu, B, params.kappa)


# ------------------------------------------------------- maximal operators


def oracle_maximal_centred(mu, nu, y):
    var_w = np.abs(nu.weights)
    radii = sorted(
        {edist(p, y) for p in mu.points} |
        {edist(p, y) for p in nu.points})
    best = 0.0
    for r in radii:
        den = math.fsum(
            w for p, w in zip(mu.points, mu.weights)
            if edist(p, y) <= r)
        if den > 0.0:
            num = math.fsum(
                w for p, w in zip(nu.points, var_w)
                if edist(p, y) <= r)
            best = max(best, num / den)
    return best


def oracle_maximal_radial(nu, y, m):
    var_w = np.abs(nu.weights)
    if any(edist(p, y) == 0.0 and w > 0 for p, w in zip(nu.points, var_w)):
        return math.inf
    best = 0.0
    for q in nu.points:
        r = edist(q, y)
        if r > 0.0:
            num = math.fsum(
                w for p, w in zip(nu.points, var_w)
                if edist(p, y) <= r)
            best = max(best, num / r ** m)
    return best


def test_maximal_centred_of_own_density_is_one():
    mu = random_measure(80, 2, np.random.default_rng(21))
    for i in (0, 17, 63):
        assert maximal_centred(mu, mu, mu.points[i]) == 1.0


def test_maximal_radial_single_atom_formula():
    z = np.array([0.7, -0.3])
    nu = AtomicMeasure(z[None, :], np.array([1.0]))
    y = np.array([0.0, 0.0])
    d = edist(y, z)
    for m in (0.5, 1.0, 2.0):
        assert maximal_radial(nu, y, m) == 1.0 / d ** m
    assert math.isinf(maximal_radial(nu, z, 1.0))


def test_maximal_operators_match_oracles():
    rng = np.random.default_rng(31)
    mu = random_measure(200, 2, rng)
    nu = random_measure(200, 2, rng, complex_w=True)
    for _ in range(15):
        y = mu.points[rng.integers(mu.size)]
        assert maximal_centred(mu, nu, y) == oracle_maximal_centred(mu, nu, y)
        assert maximal_radial(nu, y, 1.0) == oracle_maximal_radial(nu, y, 1.0)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_maximal_centred_oracle_property(seed):
    rng = np.random.default_rng(seed)
    mu = random_measure(int(rng.integers(1, 25)), 2, rng)
    nu = random_measure(int(rng.integers(1, 25)), 2, rng, complex_w=True)
    y = rng.normal(size=2) if rng.integers(2) else mu.points[0]
    assert maximal_centred(mu, nu, y) == oracle_maximal_centred(mu, nu, y)


def test_bulk_maximal_matches_public():
    rng = np.random.default_rng(47)
    mu = random_measure(150, 2, rng)
    nu = random_measure(120, 2, rng, complex_w=True)
    centers = mu.points[:40]
    bulk_r = _maximal_radial_all(nu, centers, 1.3)
    bulk_c = _maximal_centred_all(mu, nu, centers)
    for k, y in enumerate(centers):
        assert bulk_r[k] == pytest.approx(maximal_radial(nu, y, 1.3), rel=1e-12)
        assert bulk_c[k] == pytest.approx(maximal_centred(mu, nu, y), rel=1e-12)


def test_radial_dominated_by_centred_times_order_constant():
    # nu = f mu with f vanishing on the probed atoms: every radial
    # candidate factors through a centred candidate and an order-m ratio
    rng = np.random.default_rng(53)
    mu = random_measure(150, 2, rng)
    m = 1.0
    c_order = order_m_constant(mu, m)
    f = rng.normal(size=150) * (rng.uniform(size=150) < 0.7)
    probe = np.nonzero(f == 0.0)[0][:20]
    nu = ComplexAtomicMeasure(mu.points, f * mu.weights)
    for i in probe:
        y = mu.points[i]
        lhs = maximal_radial(nu, y, m)
        rhs = c_order * maximal_centred(mu, nu, y)
        assert lhs <= rhs * (1.0 + 1e-9)


def test_weak_one_one_of_centred_maximal():
    # lambda mu({M_mu nu > lambda}) <= C |nu|(E): the measured C on a
    # 2-dimensional cloud stays below the dimensional Besicovitch bound
    rng = np.random.default_rng(61)
    mu = random_measure(250, 2, rng)
    worst = 0.0
    for trial in range(3):
        nu = random_measure(250, 2, np.random.default_rng(100 + trial),
                            complex_w=True)
        total_var = nu.total_variation.total_mass
        vals = _maximal_centred_all(mu, nu, mu.points)
        lams = np.geomspace(np.median(vals) / 16, np.median(vals) * 16, 12)
        for lam in lams:
            mass = math.fsum(mu.weights[vals > lam])
            worst = max(worst, lam * mass / total_var)
    assert worst <= 25.0
