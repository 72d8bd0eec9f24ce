"""Conical square functions via stratified Monte Carlo cone quadrature.

The reference measure sigma has density d(x, E)^(-n) against Lebesgue
measure on the complement of E. Integrals over truncated cones are
estimated shell by shell: the height window (s, t] is split along the
absolute dyadic grid (2^j, 2^(j+1)], each piece is sampled uniformly in
the ball B(y, 2^(j+2)) that contains its cone slice, and exact rejection
keeps only points inside the cone and the height window.

Sample streams are keyed by (purpose, point key, shell index, round), never
by the window endpoints, so nested truncation windows of one apex consume
identical draws. For a nonnegative integrand that makes monotonicity in the
window exact rather than statistical: widening the window only widens the
per-sample acceptance mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from . import _core
from .geometry import ClosedSet, PointCloud, as_point
from .measure import AtomicMeasure, ComplexAtomicMeasure
from .rng import stream

__all__ = [
    "Kernel",
    "SigmaMeasure",
    "QuadratureConfig",
    "MCEstimate",
    "ShellStat",
    "DEFAULT_CONFIG",
    "inverse_power_kernel",
    "signed_directional_kernel",
    "custom_kernel",
    "kernel_from_spec",
    "KERNEL_BUILDERS",
    "apply_T",
    "cone_sigma_integral",
    "square_function",
    "cone_symmetric_difference",
    "kernel_estimate_check",
    "ball_volume",
]

# Dyadic shell exponents are signed; stream contexts must be non-negative.
_SHELL_KEY_OFFSET = 1 << 20

_CUSTOM_EVAL_CHUNK = 256


def ball_volume(dim: int, radius: float) -> float:
    """Lebesgue volume of the Euclidean ball of the given radius."""
    if dim < 1 or radius < 0:
        raise ValueError("dimension must be >= 1 and radius nonnegative")
    unit = math.pi ** (dim / 2.0) / math.gamma(dim / 2.0 + 1.0)
    return unit * radius ** dim


@dataclass(frozen=True)
class Kernel:
    """Power-law controlled kernel S(x, y), defined for x off the set.

    m is the dimension parameter of the measures the kernel integrates
    against, alpha in (0, 1] the smoothing gain, beta in (0, 1] the Holder
    exponent in y. K1 bounds |S(x, y)| |x-y|^(m+alpha); K2 bounds the
    y-Holder quotient for |y-y'| <= |x-y|/2. Both claims are checked by
    sampling in kernel_estimate_check, not trusted.

    kind selects the evaluation path: the two built-ins run through the
    compiled backend; "custom" uses fn(xs, ys) -> (S, N) complex matrix.
    """

    name: str
    m: float
    alpha: float
    beta: float
    K1: float
    K2: float
    kind: str = "custom"
    fn: Optional[Callable] = None

    def __post_init__(self):
        if not (self.m > 0 and math.isfinite(self.m)):
            raise ValueError("m must be positive and finite")
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError("alpha must lie in (0, 1]")
        if not (0.0 < self.beta <= 1.0):
            raise ValueError("beta must lie in (0, 1]")
        if not (self.K1 > 0 and self.K2 > 0):
            raise ValueError("size and Holder constants must be positive")
        if self.kind not in ("inverse_power", "signed_directional", "custom"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "custom" and self.fn is None:
            raise ValueError("custom kernels need an evaluator fn")

    @property
    def size_exponent(self) -> float:
        return self.m + self.alpha

    def weighted_sums(self, pts, atoms, coeffs) -> np.ndarray:
        """sum_i coeffs_i S(x, z_i) for every sample point x; exact sums.

        pts is (S, n), atoms (N, n), coeffs (N,) complex. Built-in kinds
        run in the compiled backend with a fixed summation order.
        """
        pts = np.ascontiguousarray(pts, dtype=np.float64)
        atoms = np.ascontiguousarray(atoms, dtype=np.float64)
        coeffs = np.ascontiguousarray(coeffs, dtype=np.complex128)
        if self.kind == "inverse_power":
            return _core.pow_kernel_sum(pts, atoms, coeffs, self.size_exponent)
        if self.kind == "signed_directional":
            return _core.signed_kernel_sum(pts, atoms, coeffs, self.size_exponent)
        out = np.empty(pts.shape[0], dtype=np.complex128)
        for lo in range(0, pts.shape[0], _CUSTOM_EVAL_CHUNK):
            hi = min(lo + _CUSTOM_EVAL_CHUNK, pts.shape[0])
            block = np.asarray(self.fn(pts[lo:hi], atoms), dtype=np.complex128)
            if block.shape != (hi - lo, atoms.shape[0]):
                raise ValueError("custom kernel fn returned a wrong shape")
            out[lo:hi] = block @ coeffs
        return out

    def pairwise(self, xs, ys) -> np.ndarray:
        """S(x_i, y_i) for matched rows of xs and ys."""
        xs = np.ascontiguousarray(xs, dtype=np.float64)
        ys = np.ascontiguousarray(ys, dtype=np.float64)
        if xs.shape != ys.shape:
            raise ValueError("matched batches must share a shape")
        if self.kind in ("inverse_power", "signed_directional"):
            diff = xs - ys
            rr = np.sqrt((diff ** 2).sum(axis=-1))
            if self.kind == "inverse_power":
                return (rr ** (-self.size_exponent)).astype(np.complex128)
            return (diff[:, 0] * rr ** (-(self.size_exponent + 1.0))).astype(np.complex128)
        out = np.empty(xs.shape[0], dtype=np.complex128)
        for lo in range(0, xs.shape[0], _CUSTOM_EVAL_CHUNK):
            hi = min(lo + _CUSTOM_EVAL_CHUNK, xs.shape[0])
            block = np.asarray(self.fn(xs[lo:hi], ys[lo:hi]), dtype=np.complex128)
            out[lo:hi] = np.diagonal(block)
        return out

    def evaluate(self, x, y) -> complex:
        """S(x, y) at a single pair of points."""
        x = np.asarray(x, dtype=np.float64).reshape(1, -1)
        y = np.asarray(y, dtype=np.float64).reshape(1, -1)
        return complex(self.pairwise(x, y)[0])


def inverse_power_kernel(m: float, alpha: float) -> Kernel:
    """S(x, y) = |x-y|^(-(m+alpha)); the size bound holds with equality.

    K1 = 1 is sharp. The gradient bound |grad_y S| <= (m+alpha) r^(-(m+alpha+1))
    along the segment from y to y', where r >= |x-y|/2, gives the mean value
    constant K2 = (m+alpha) 2^(m+alpha+1) with beta = 1.
    """
    p = m + alpha
    return Kernel(
        name="inverse_power",
        m=m,
        alpha=alpha,
        beta=1.0,
        K1=1.0,
        K2=p * 2.0 ** (p + 1.0),
        kind="inverse_power",
    )


def signed_directional_kernel(m: float, alpha: float) -> Kernel:
    """S(x, y) = (x_1 - y_1) |x-y|^(-(m+alpha+1)); odd in the first axis.

    |S| <= |x-y|^(-(m+alpha)) so K1 = 1; the y-gradient is bounded by
    (m+alpha+2) r^(-(m+alpha+1)), giving K2 = (m+alpha+2) 2^(m+alpha+1).
    """
    p = m + alpha
    return Kernel(
        name="signed_directional",
        m=m,
        alpha=alpha,
        beta=1.0,
        K1=1.0,
        K2=(p + 2.0) * 2.0 ** (p + 1.0),
        kind="signed_directional",
    )


def custom_kernel(name, m, alpha, beta, K1, K2, fn) -> Kernel:
    """User kernel behind the same sampled estimate checks as the built-ins."""
    return Kernel(name=name, m=m, alpha=alpha, beta=beta, K1=K1, K2=K2, kind="custom", fn=fn)


KERNEL_BUILDERS = {
    "inverse_power": inverse_power_kernel,
    "signed_directional": signed_directional_kernel,
}


def kernel_from_spec(spec: dict) -> Kernel:
    """Build a kernel from a scenario parameter block {kind, m, alpha}."""
    kind = spec.get("kind")
    if kind not in KERNEL_BUILDERS:
        raise ValueError(f"unknown kernel kind {kind!r}; have {sorted(KERNEL_BUILDERS)}")
    return KERNEL_BUILDERS[kind](float(spec["m"]), float(spec["alpha"]))


@dataclass(frozen=True)
class SigmaMeasure:
    """The measure with density d(x, E)^(-n) off E, n the ambient dimension."""

    E: ClosedSet

    def density(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        d = self.E.distance(pts)
        if np.any(d <= 0.0):
            raise ValueError("sigma density is undefined on the set itself")
        return d ** (-float(self.E.dim))


@dataclass(frozen=True)
class QuadratureConfig:
    """Sampling budget and reproducibility knobs for cone quadrature.

    Every (shell, round) pair owns its own RNG substream, derived from the
    master seed, the caller's purpose tag, and the caller-supplied point
    key; enlarging a budget never perturbs draws already taken, and the
    reduction over shells is an exactly rounded sum, so a fixed seed gives
    bit-identical estimates.

    When target_rel_stderr is set, shells double their budget (largest
    error contribution first) until the pooled relative standard error
    meets the target or every shell has used max_rounds rounds. Exact
    stream sharing across nested truncation windows requires equal budgets,
    so pass target_rel_stderr=None when asserting monotonicity.
    """

    seed: int = 0
    samples_per_shell: int = 4096
    target_rel_stderr: Optional[float] = 0.02
    max_rounds: int = 3
    max_shells: int = 64
    tail_rel_tol: float = 1e-3

    def __post_init__(self):
        if self.samples_per_shell < 2:
            raise ValueError("samples_per_shell must be at least 2")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")
        if self.target_rel_stderr is not None and not self.target_rel_stderr > 0:
            raise ValueError("target_rel_stderr must be positive or None")
        if self.max_shells < 1:
            raise ValueError("max_shells must be at least 1")
        if not self.tail_rel_tol > 0:
            raise ValueError("tail_rel_tol must be positive")


DEFAULT_CONFIG = QuadratureConfig()


class ShellStat(NamedTuple):
    """Per-shell quadrature diagnostics for the report stream."""

    index: int
    lo: float
    hi: float
    samples: int
    accepted: int
    value: float
    stderr: float


@dataclass(frozen=True)
class MCEstimate:
    """Monte Carlo estimate that unpacks as the pair (value, stderr).

    tail_bound covers mass outside the sampled shells whenever a bound is
    available (rigorous for square_function upper tails, a documented
    geometric-decay heuristic for cone_symmetric_difference); shells holds
    the per-shell diagnostics.
    """

    value: float
    stderr: float
    tail_bound: float = 0.0
    shells: tuple = ()

    def __iter__(self):
        return iter((self.value, self.stderr))


def _uniform_ball(rng, center, radius, count):
    # Draw order is fixed (normals, then radii) so that extending a round
    # count reuses earlier draws as an exact prefix.
    dim = center.size
    dirs = rng.standard_normal((count, dim))
    norms = np.sqrt((dirs ** 2).sum(axis=1))
    norms[norms == 0.0] = 1.0
    radii = radius * rng.random(count) ** (1.0 / dim)
    return center[None, :] + dirs * (radii / norms)[:, None]


class _Shell:
    """One stratum: dyadic height slice with its sampling ball and stream key."""

    __slots__ = ("key", "lo", "hi", "radius", "volume", "value_fn", "vals", "rounds")

    def __init__(self, key, lo, hi, radius, dim, value_fn):
        self.key = key
        self.lo = lo
        self.hi = hi
        self.radius = radius
        self.volume = ball_volume(dim, radius)
        self.value_fn = value_fn
        self.vals = []
        self.rounds = 0

    def extend(self, E, y, config, purpose, point_key):
        n = config.samples_per_shell * (1 << self.rounds)
        rng = stream(
            config.seed,
            purpose,
            point_key,
            _SHELL_KEY_OFFSET + self.key,
            self.rounds,
        )
        pts = _uniform_ball(rng, y, self.radius, n)
        d = E.distance(pts)
        self.vals.append(np.asarray(self.value_fn(pts, d), dtype=np.float64))
        self.rounds += 1

    def stat(self) -> ShellStat:
        vals = np.concatenate(self.vals)
        n = vals.size
        mean = vals.mean()
        var = vals.var(ddof=1) / n if n > 1 else 0.0
        return ShellStat(
            index=self.key,
            lo=self.lo,
            hi=self.hi,
            samples=n,
            accepted=int(np.count_nonzero(vals)),
            value=self.volume * mean,
            stderr=self.volume * math.sqrt(max(var, 0.0)),
        )


def _run_shells(E, y, shells, config, purpose, point_key):
    """Round 0 everywhere, then adaptive doubling; exactly rounded reduction."""
    for sh in shells:
        sh.extend(E, y, config, purpose, point_key)
    return _adaptive_pool(E, y, shells, config, purpose, point_key)


def _dyadic_window(s: float, t: float, max_shells: int):
    """Clipped dyadic shells (max(2^j, s), min(2^(j+1), t)] covering (s, t]."""
    plan = []
    j = math.floor(math.log2(s))
    while 2.0 ** j < t:
        lo = max(2.0 ** j, s)
        hi = min(2.0 ** (j + 1), t)
        if lo < hi:
            plan.append((j, lo, hi))
        j += 1
        if len(plan) > max_shells:
            raise ValueError(
                "truncation window spans more dyadic shells than max_shells allows"
            )
    return plan


def _cone_value_fn(y, lo, hi, g, dim):
    def value_fn(pts, d):
        rad = np.sqrt(((pts - y) ** 2).sum(axis=1))
        # same strict comparisons as geometry.cone_contains
        acc = (rad < 2.0 * d) & (d > lo) & (d <= hi)
        out = np.zeros(d.size, dtype=np.float64)
        idx = np.flatnonzero(acc)
        if idx.size:
            gv = np.asarray(g(pts[idx], d[idx]), dtype=np.float64)
            out[idx] = gv * d[idx] ** (-float(dim))
        return out

    return value_fn


def cone_sigma_integral(E: ClosedSet, y, s, t, g, config: QuadratureConfig = DEFAULT_CONFIG,
                        *, point_key: int = 0, purpose: str = "cone-mc") -> MCEstimate:
    """Stratified MC estimate of the sigma integral of g over the cone window.

    The region is the truncated cone at apex y with heights d(x, E) in
    (s, t]; g(points, dists) maps a sample batch and its distances to real
    values. Per shell, samples are uniform in the ball whose radius is twice
    the top of the full dyadic shell; the ball contains the shell's cone
    slice because |x - y| < 2 d(x, E) there, so rejection is exact and the
    per-shell estimator is unbiased. The sampling ball ignores the window
    clipping on purpose: nested windows then share sample streams exactly.

    Returns an MCEstimate; value and stderr unpack as a pair.
    """
    y = as_point(y, E.dim)
    s = float(s)
    t = float(t)
    if not s > 0.0:
        raise ValueError("lower truncation must be positive")
    if not s < t:
        raise ValueError("lower truncation must lie below the upper")
    if not math.isfinite(t):
        raise ValueError("upper truncation must be finite here; see square_function")
    if point_key < 0:
        raise ValueError("point_key must be nonnegative")
    if not callable(g):
        raise ValueError("integrand g must be callable")
    shells = [
        _Shell(j, lo, hi, 2.0 ** (j + 2), E.dim, _cone_value_fn(y, lo, hi, g, E.dim))
        for j, lo, hi in _dyadic_window(s, t, config.max_shells)
    ]
    total, err, stats = _run_shells(E, y, shells, config, purpose, point_key)
    return MCEstimate(value=total, stderr=err, shells=stats)


def _as_atom_values(f, points, count):
    vals = np.asarray(f(points) if callable(f) else f, dtype=np.complex128)
    if vals.shape == ():
        vals = np.full(count, complex(vals))
    if vals.shape != (count,):
        raise ValueError("f must give one value per atom")
    return vals


def apply_T(kernel: Kernel, mu, f, x) -> complex:
    """T f(x) = sum_i S(x, z_i) f(z_i) w_i over the atoms of the measure.

    An exact finite sum, no quadrature. x must keep positive distance to
    the atom set; the kernel size estimate blows up on it. f is an array
    aligned with mu.points, a scalar, or a callable evaluated on the atoms.
    """
    atoms = mu.points
    x = as_point(x, atoms.shape[1])
    if float(_core.min_dist(x[None, :], atoms)[0]) <= 0.0:
        raise ValueError("x lies on the support; the kernel sum is singular there")
    coeffs = _as_atom_values(f, atoms, atoms.shape[0]) * mu.weights
    return complex(kernel.weighted_sums(x[None, :], atoms, coeffs)[0])


def square_function(kernel: Kernel, mu, f, y, s, t, config: QuadratureConfig = DEFAULT_CONFIG,
                    *, E: Optional[ClosedSet] = None, point_key: int = 0,
                    reject=None) -> MCEstimate:
    """Truncated conical square function of f at apex y.

    Estimates the square root of the sigma integral of
    |T f(x)|^2 d(x, E)^(2 alpha) over the cone window (s, t] at y, with the
    standard error propagated to first order through the square root. E
    defaults to the atom cloud of mu; pass a larger closed set to evaluate
    cones relative to it.

    reject, if given, maps a sample batch to a bool mask; flagged samples
    contribute zero to the integrand. The call draws the same sample
    streams as without it, so a rejected evaluation is dominated by the
    plain one number-by-number, not just in expectation.

    t may be math.inf: shells are then extended upward until the rigorous
    power-law tail bound (the integrand is at most K1^2 (sum |f| w)^2
    d^(-2m), and each cone slice has sigma measure at most the volume ratio
    of its sampling ball) drops below tail_rel_tol of the running value, or
    max_shells is hit. The leftover bound is reported in tail_bound on the
    value scale.
    """
    atoms = mu.points
    y = as_point(y, atoms.shape[1])
    s = float(s)
    t = float(t)
    if not s > 0.0:
        raise ValueError("lower truncation must be positive")
    if not s < t:
        raise ValueError("lower truncation must lie below the upper")
    if E is None:
        E = PointCloud(atoms)
    dim = E.dim
    coeffs = _as_atom_values(f, atoms, atoms.shape[0]) * mu.weights
    abs_sum = math.fsum(np.abs(coeffs).tolist())
    two_alpha = 2.0 * kernel.alpha

    def g(pts, d):
        tv = kernel.weighted_sums(pts, atoms, coeffs)
        vals = (tv.real ** 2 + tv.imag ** 2) * d ** two_alpha
        if reject is not None:
            vals = np.where(reject(pts), 0.0, vals)
        return vals

    if math.isfinite(t):
        inner = cone_sigma_integral(E, y, s, t, g, config, point_key=point_key, purpose="sqfn")
        tail = 0.0
        stats = inner.shells
        total, err = inner.value, inner.stderr
    else:
        # Tail of the sigma integral above height T: each dyadic slice of the
        # cone has sigma measure at most vol(B(y, 4h)) h^(-n) = omega_n 4^n,
        # and the integrand is at most K1^2 abs_sum^2 h^(-2m) there.
        shell_cap = ball_volume(dim, 4.0) * (kernel.K1 * abs_sum) ** 2
        decay = 2.0 ** (-2.0 * kernel.m)

        def tail_above(height):
            return shell_cap * height ** (-2.0 * kernel.m) / (1.0 - decay)

        shells = []
        stats_list = []
        total = 0.0
        j = math.floor(math.log2(s))
        while True:
            lo = max(2.0 ** j, s)
            hi = 2.0 ** (j + 1)
            sh = _Shell(j, lo, hi, 2.0 ** (j + 2), dim, _cone_value_fn(y, lo, hi, g, dim))
            sh.extend(E, y, config, "sqfn", point_key)
            shells.append(sh)
            total = math.fsum(s2.stat().value for s2 in shells)
            tail = tail_above(hi)
            if tail <= config.tail_rel_tol * total and len(shells) >= 4:
                break
            if tail == 0.0 or len(shells) >= config.max_shells:
                break
            j += 1
        total, err, stats = _adaptive_pool(E, y, shells, config, "sqfn", point_key)

    if total <= 0.0:
        value = 0.0
        stderr = math.sqrt(max(err, 0.0))
    else:
        value = math.sqrt(total)
        stderr = err / (2.0 * value)
    if tail > 0.0:
        tail_value = math.sqrt(total + tail) - value if total > 0.0 else math.sqrt(tail)
    else:
        tail_value = 0.0
    return MCEstimate(value=value, stderr=stderr, tail_bound=tail_value, shells=stats)


def _adaptive_pool(E, y, shells, config, purpose, point_key):
    """Adaptive doubling over shells that already ran round 0."""
    if config.target_rel_stderr is not None:
        while True:
            stats = [sh.stat() for sh in shells]
            total = math.fsum(st.value for st in stats)
            err = math.sqrt(math.fsum(st.stderr ** 2 for st in stats))
            if err <= config.target_rel_stderr * abs(total) or err == 0.0:
                break
            order = sorted(
                range(len(shells)),
                key=lambda i: (-stats[i].stderr, shells[i].key),
            )
            grew = False
            for i in order:
                if shells[i].rounds < config.max_rounds:
                    shells[i].extend(E, y, config, purpose, point_key)
                    grew = True
                    break
            if not grew:
                break
    stats = tuple(sh.stat() for sh in shells)
    total = math.fsum(st.value for st in stats)
    err = math.sqrt(math.fsum(st.stderr ** 2 for st in stats))
    return total, err, stats


def cone_symmetric_difference(E: ClosedSet, y, yp, t, r, config: QuadratureConfig = DEFAULT_CONFIG,
                              *, point_key: int = 0) -> MCEstimate:
    """Sigma measure of the symmetric difference of two cones above height t*r.

    Both cones are truncated below at height t*r; the estimate stratifies
    the heights (t*r*2^k, t*r*2^(k+1)] and samples each slice uniformly in
    a ball around y wide enough to contain both cones' slices. A point of
    the difference satisfies |x-y| < 2 d(x, E) <= |x-y'| < |x-y| + r (or the
    same with y and y' swapped), which is why the slice estimates decay
    geometrically in k; tail_bound reports the last sampled shell's value
    as the documented heuristic for the unsampled remainder. The scale-free
    quantity to compare across ladders is value * t.
    """
    y = as_point(y, E.dim)
    yp = as_point(yp, E.dim)
    t = float(t)
    r = float(r)
    if not t >= 10.0:
        raise ValueError("height multiplier t must be at least 10")
    if not r > 0.0:
        raise ValueError("r must be positive")
    gap = float(np.sqrt(((y - yp) ** 2).sum()))
    if not gap < r:
        raise ValueError("the apexes must be closer than r")
    if np.array_equal(y, yp):
        return MCEstimate(value=0.0, stderr=0.0)
    dim = E.dim
    h0 = t * r
    n_shells = min(config.max_shells, 16)

    def make_value_fn(lo, hi):
        def value_fn(pts, d):
            rad_y = np.sqrt(((pts - y) ** 2).sum(axis=1))
            rad_yp = np.sqrt(((pts - yp) ** 2).sum(axis=1))
            in_y = rad_y < 2.0 * d
            in_yp = rad_yp < 2.0 * d
            acc = (d > lo) & (d <= hi) & (in_y ^ in_yp)
            out = np.zeros(d.size, dtype=np.float64)
            idx = np.flatnonzero(acc)
            if idx.size:
                out[idx] = d[idx] ** (-float(dim))
            return out

        return value_fn

    shells = []
    for k in range(n_shells):
        lo = h0 * 2.0 ** k
        hi = h0 * 2.0 ** (k + 1)
        radius = 2.0 * hi + gap
        shells.append(_Shell(k, lo, hi, radius, dim, make_value_fn(lo, hi)))
    total, err, stats = _run_shells(E, y, shells, config, "cone-sym", point_key)
    tail = stats[-1].value if stats else 0.0
    return MCEstimate(value=total, stderr=err, tail_bound=max(tail, 0.0), shells=stats)


def kernel_estimate_check(kernel: Kernel, E: ClosedSet, n_samples: int = 2000,
                          *, seed: int = 0, scale_range=(1e-3, 10.0)) -> dict:
    """Sampled verification of the size and Holder estimates of a kernel.

    Draws base points y on E, evaluation points x = y + R * direction with
    R log-uniform over scale_range, and companion points y' on E filtered to
    |y - y'| <= |x - y| / 2. Reports the worst observed ratios
    |S(x,y)| |x-y|^(m+alpha) / K1 and the Holder quotient over K2; the check
    passes iff both stay at or below 1. Pairs with |y - y'| = 0 are skipped,
    so a one-point set verifies the size estimate only.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    lo, hi = float(scale_range[0]), float(scale_range[1])
    if not (0 < lo < hi):
        raise ValueError("scale_range must be increasing and positive")
    rng = stream(seed, "kernel-check")
    ys = E.sample(n_samples, rng)
    dirs = rng.standard_normal((n_samples, E.dim))
    norms = np.sqrt((dirs ** 2).sum(axis=1))
    norms[norms == 0.0] = 1.0
    radii = np.exp(rng.uniform(math.log(lo), math.log(hi), size=n_samples))
    xs = ys + dirs * (radii / norms)[:, None]
    d = E.distance(xs)
    keep = d > 0.0
    xs, ys = xs[keep], ys[keep]
    rr = np.sqrt(((xs - ys) ** 2).sum(axis=1))
    p = kernel.size_exponent

    s_xy = kernel.pairwise(xs, ys)
    size_ratios = np.abs(s_xy) * rr ** p / kernel.K1

    yps = E.sample(n_samples, rng)[keep]
    gap = np.sqrt(((ys - yps) ** 2).sum(axis=1))
    pair_ok = (gap > 0.0) & (gap <= rr / 2.0)
    holder_ratios = np.empty(0, dtype=np.float64)
    if np.any(pair_ok):
        s_xyp = kernel.pairwise(xs[pair_ok], yps[pair_ok])
        num = np.abs(s_xy[pair_ok] - s_xyp) * rr[pair_ok] ** (p + kernel.beta)
        holder_ratios = num / (kernel.K2 * gap[pair_ok] ** kernel.beta)

    size_max = float(size_ratios.max()) if size_ratios.size else 0.0
    holder_max = float(holder_ratios.max()) if holder_ratios.size else 0.0
    slack = 1.0 + 1e-9
    return {
        "kernel": kernel.name,
        "size_max_ratio": size_max,
        "holder_max_ratio": holder_max,
        "size_pairs": int(size_ratios.size),
        "holder_pairs": int(holder_ratios.size),
        "passes": bool(size_max <= slack and holder_max <= slack),
    }
