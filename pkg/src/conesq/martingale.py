"""Accretivity-adapted martingale differences on restricted lattices.

Given a bounded complex density b on the atoms, the cubes where the
b-integral falls under an accretivity threshold are cut away (maximal
stopping cubes); on the remaining transit tree the two-branch martingale
differences of a function f telescope exactly back to f, have zero mean
on their cube, and their squared norms reproduce the L2 norm of f up to
measured constants. The module also carries the scale-separation
coefficient matrix and its l2 operator-norm ladder, and the Carleson-sum
check driven by cone quadrature of a supplied operator evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import GoodnessParams, RestrictedLattice, is_good
from .measure import AtomicMeasure
from .operators import DEFAULT_CONFIG, cone_sigma_integral

__all__ = [
    "BAdaptedSystem",
    "compute_stopping_and_transit",
    "MartingaleDecomposition",
    "decompose",
    "norm_equivalence",
    "decomposition_records",
    "matrix_coefficients",
    "matrix_operator_norm",
    "matrix_norm_estimate",
    "carleson_check",
]


def _fsum_c(values) -> complex:
    vals = list(values)
    return complex(math.fsum(v.real for v in vals),
                   math.fsum(v.imag for v in vals))


def cube_mass(mu: AtomicMeasure, cube) -> float:
    return math.fsum(mu.weights[cube.atom_indices].tolist())


def cube_integral(values, mu: AtomicMeasure, cube) -> complex:
    idx = cube.atom_indices
    return _fsum_c((np.asarray(values)[idx] * mu.weights[idx]).tolist())


def cube_average(values, mu: AtomicMeasure, cube) -> complex:
    """<g>_Q, with the zero-mass convention <g>_Q = 0."""
    mass = cube_mass(mu, cube)
    if mass == 0.0:
        return 0.0 + 0.0j
    return cube_integral(values, mu, cube) / mass


@dataclass(frozen=True)
class BAdaptedSystem:
    """A density b over a restricted lattice with its stopping structure.

    stopping_keys are the maximal cubes where |integral of b| falls under
    c_acc times the cube mass; t_mask flags their atoms. A cube is transit
    when it is not contained (as an atom set) in that union joined with
    the exceptional set; empty cubes are vacuously contained, hence never
    transit.
    """

    b: np.ndarray
    lattice: RestrictedLattice
    mu: AtomicMeasure
    c_acc: float
    h_mask: np.ndarray
    stopping_keys: tuple
    t_mask: np.ndarray
    transit: dict

    def is_transit(self, key) -> bool:
        return self.transit[key]

    def transit_keys(self) -> list:
        return sorted(k for k, v in self.transit.items() if v)

    @property
    def exceptional_fraction(self) -> float:
        """mu(T union H) over mu(top cube); the hypothesis wants it small."""
        bad = self.t_mask | self.h_mask
        num = math.fsum(self.mu.weights[bad].tolist())
        den = cube_mass(self.mu, self.lattice.top)
        return num / den if den > 0.0 else 0.0


def compute_stopping_and_transit(b, lattice: RestrictedLattice,
                                 mu: AtomicMeasure, c_acc: float,
                                 H=None) -> BAdaptedSystem:
    """Top-down maximal stopping scan and per-cube transit flags.

    A cube stops when |integral_Q b dmu| < c_acc mu(Q), strictly; the scan
    does not descend below a stopping cube, making the recorded cubes
    maximal. Zero-mass cubes never stop (0 < 0 fails) so the scan keeps
    descending through them. The top cube must come out transit, per the
    big-piece hypothesis; anything else raises.
    """
    ground = lattice.lattice.nets.ground.points
    b = np.asarray(b, dtype=np.complex128)
    if b.shape != (ground.shape[0],):
        raise ValueError("b must give one value per atom")
    if not np.all(np.isfinite(b.real) & np.isfinite(b.imag)):
        raise ValueError("b must be finite")
    if not np.array_equal(mu.points, ground):
        raise ValueError("mu must live on the lattice's atom set")
    if c_acc <= 0.0:
        raise ValueError("accretivity threshold must be positive")
    if H is None:
        H = np.zeros(ground.shape[0], dtype=bool)
    h_mask = np.asarray(H, dtype=bool)
    if h_mask.shape != (ground.shape[0],):
        raise ValueError("H must be a boolean mask over the atoms")

    stopping = []
    stack = [lattice.top_key]
    while stack:
        key = stack.pop()
        cube = lattice.cubes[key]
        integral = cube_integral(b, mu, cube)
        if abs(integral) < c_acc * cube_mass(mu, cube):
            stopping.append(key)
            continue
        stack.extend(k for k in cube.children_keys if k in lattice.cubes)

    t_mask = np.zeros(ground.shape[0], dtype=bool)
    for key in stopping:
        t_mask[lattice.cubes[key].atom_indices] = True

    excluded = t_mask | h_mask
    transit = {key: bool((~excluded[cube.atom_indices]).any())
               for key, cube in lattice.cubes.items()}
    system = BAdaptedSystem(b=b, lattice=lattice, mu=mu, c_acc=c_acc,
                            h_mask=h_mask, stopping_keys=tuple(sorted(stopping)),
                            t_mask=t_mask, transit=transit)
    if not transit[lattice.top_key]:
        raise ValueError("top cube is not transit; the stopping set or the "
                         "exceptional set swallows the whole ball")
    return system


@dataclass(frozen=True)
class MartingaleDecomposition:
    """f = (top term) + sum of per-transit-cube differences, exactly.

    entries[Q] lists (branch, child_key, scalar): a "transit" branch
    contributes scalar * b on the child's atoms, an "absorb" branch
    contributes f - scalar * b there (scalar is then the parent ratio
    <f>_Q / <b>_Q); childless transit cubes absorb themselves, which is
    where the finite tree replaces the vanishing-scale limit.
    """

    system: BAdaptedSystem
    f: np.ndarray
    top_ratio: complex
    ratios: dict
    entries: dict

    def top_values(self) -> np.ndarray:
        out = np.zeros(self.f.shape[0], dtype=np.complex128)
        top = self.system.lattice.top
        out[top.atom_indices] = self.top_ratio * self.system.b[top.atom_indices]
        return out

    def delta_values(self, key) -> np.ndarray:
        out = np.zeros(self.f.shape[0], dtype=np.complex128)
        cubes = self.system.lattice.cubes
        for branch, child_key, scalar in self.entries[key]:
            idx = cubes[child_key].atom_indices
            if branch == "transit":
                out[idx] = scalar * self.system.b[idx]
            else:
                out[idx] = self.f[idx] - scalar * self.system.b[idx]
        return out

    def reconstruct(self) -> np.ndarray:
        total = self.top_values()
        for key in self.entries:
            total = total + self.delta_values(key)
        return total

    def delta_norm_sq(self, key) -> float:
        vals = self.delta_values(key)
        return math.fsum(
            (np.abs(vals) ** 2 * self.system.mu.weights).tolist())

    def delta_integral(self, key) -> complex:
        vals = self.delta_values(key)
        return _fsum_c((vals * self.system.mu.weights).tolist())


def _ratio(f, system, cube) -> complex:
    """<f>_Q / <b>_Q with the zero-mass convention, guarded on transit Q."""
    mass = cube_mass(system.mu, cube)
    if mass == 0.0:
        return 0.0 + 0.0j
    b_avg = cube_average(system.b, system.mu, cube)
    if abs(b_avg) < system.c_acc * (1.0 - 1e-9):
        raise ValueError(
            f"transit cube {cube.key} has b average {abs(b_avg):.3g} under "
            f"the accretivity threshold {system.c_acc}; stopping scan bug")
    return cube_average(f, system.mu, cube) / b_avg


def decompose(f, system: BAdaptedSystem) -> MartingaleDecomposition:
    """Two-branch martingale differences of f over the transit tree.

    Transit children carry (ratio(child) - ratio(parent)) * b; non-transit
    children absorb f - ratio(parent) * b pointwise and the recursion
    stops below them. Both branches integrate to the same cube increment,
    which is what makes every difference mean-zero regardless of the mix.
    """
    ground = system.lattice.lattice.nets.ground.points
    f = np.asarray(f, dtype=np.complex128)
    if f.shape != (ground.shape[0],):
        raise ValueError("f must give one value per atom")
    lattice = system.lattice
    top = lattice.top
    top_ratio = _ratio(f, system, top)
    ratios = {lattice.top_key: top_ratio}
    entries = {}
    stack = [lattice.top_key]
    while stack:
        key = stack.pop()
        cube = lattice.cubes[key]
        children = [k for k in cube.children_keys if k in lattice.cubes]
        rows = []
        if not children:
            rows.append(("absorb", key, ratios[key]))
        for child_key in children:
            child = lattice.cubes[child_key]
            if system.transit[child_key]:
                child_ratio = _ratio(f, system, child)
                ratios[child_key] = child_ratio
                rows.append(("transit", child_key, child_ratio - ratios[key]))
                stack.append(child_key)
            else:
                rows.append(("absorb", child_key, ratios[key]))
        entries[key] = tuple(rows)
    return MartingaleDecomposition(system=system, f=f, top_ratio=top_ratio,
                                   ratios=ratios, entries=entries)


def norm_equivalence(dec: MartingaleDecomposition) -> dict:
    """Both sides of the L2 norm equivalence and their ratio."""
    w = dec.system.mu.weights
    f_norm_sq = math.fsum((np.abs(dec.f) ** 2 * w).tolist())
    top_norm_sq = math.fsum((np.abs(dec.top_values()) ** 2 * w).tolist())
    delta_sum = math.fsum(dec.delta_norm_sq(key) for key in dec.entries)
    rhs = top_norm_sq + delta_sum
    if f_norm_sq == 0.0 and rhs == 0.0:
        ratio = 1.0
    elif rhs == 0.0:
        ratio = math.inf
    else:
        ratio = math.sqrt(f_norm_sq / rhs)
    return {"f_norm_sq": f_norm_sq, "top_norm_sq": top_norm_sq,
            "delta_norm_sq_sum": delta_sum, "rhs_sq": rhs, "ratio": ratio}


def decomposition_records(dec: MartingaleDecomposition) -> list:
    """Per-cube dump: coefficients per child and the mean-zero residual."""
    out = []
    for key in sorted(dec.entries):
        rows = [{"child": list(child_key), "branch": branch,
                 "coefficient": [scalar.real, scalar.imag]}
                for branch, child_key, scalar in dec.entries[key]]
        out.append({"level": key[0], "slot": key[1], "children": rows,
                    "integral_residual": abs(dec.delta_integral(key))})
    return out


# ------------------------------------------------- coefficient matrices


def _cube_set_distance(cube_a, cube_b, points) -> float:
    pa = points[cube_a.atom_indices]
    pb = points[cube_b.atom_indices]
    diff = pa[:, None, :] - pb[None, :, :]
    return float(np.sqrt((diff ** 2).sum(-1)).min())


def matrix_coefficients(cubes_q, cubes_r, mu: AtomicMeasure, s: float,
                        m: float) -> np.ndarray:
    """Scale-separation coefficients between two nonempty cube families.

    Entry (i, j) is side_i^(s/2) side_j^(s/2) D^-(m+s) mass_i^(1/2)
    mass_j^(1/2) with D = side_i + side_j + d(Q_i, R_j); distances are
    min distances between the atom sets.
    """
    if s <= 0.0:
        raise ValueError("separation exponent s must be positive")
    cubes_q = list(cubes_q)
    cubes_r = list(cubes_r)
    if any(c.size == 0 for c in cubes_q + cubes_r):
        raise ValueError("coefficient matrices need nonempty cubes")
    pts = mu.points
    A = np.zeros((len(cubes_q), len(cubes_r)))
    for i, Q in enumerate(cubes_q):
        mass_q = cube_mass(mu, Q)
        for j, R in enumerate(cubes_r):
            D = Q.side + R.side + _cube_set_distance(Q, R, pts)
            A[i, j] = (Q.side ** (0.5 * s) * R.side ** (0.5 * s)
                       / D ** (m + s)
                       * math.sqrt(mass_q) * math.sqrt(cube_mass(mu, R)))
    return A


def matrix_operator_norm(A, *, max_iters: int = 2000,
                         tol: float = 1e-12) -> dict:
    """Largest singular value by power iteration on the Gram matrix.

    Deterministic all-ones start; convergence is declared when the Gram
    eigen-residual falls under tol relative to the eigenvalue. Reports
    convergence instead of raising, with the residual attached.
    """
    A = np.asarray(A, dtype=float)
    if A.size == 0 or not A.any():
        return {"norm": 0.0, "converged": True, "iters": 0, "residual": 0.0}
    G = A @ A.T if A.shape[0] <= A.shape[1] else A.T @ A
    v = np.ones(G.shape[0]) / math.sqrt(G.shape[0])
    lam = 0.0
    residual = math.inf
    iters = 0
    for iters in range(1, max_iters + 1):
        w = G @ v
        norm_w = float(np.sqrt((w ** 2).sum()))
        if norm_w == 0.0:
            return {"norm": 0.0, "converged": True, "iters": iters,
                    "residual": 0.0}
        v_next = w / norm_w
        lam = float(v_next @ (G @ v_next))
        residual = float(np.sqrt(((G @ v_next - lam * v_next) ** 2).sum()))
        v = v_next
        if residual <= tol * max(lam, 1e-300):
            return {"norm": math.sqrt(lam), "converged": True,
                    "iters": iters, "residual": residual}
    return {"norm": math.sqrt(lam), "converged": False, "iters": iters,
            "residual": residual}


def matrix_norm_estimate(ladder, s: float, m: float, *,
                         growth_limit: float = 0.05, max_iters: int = 2000,
                         tol: float = 1e-12) -> dict:
    """Operator norms along a ladder of lattice discretization sizes.

    ladder holds (cubes_q, cubes_r, mu) triples for the same geometric
    scene sampled at doubling atom counts with mass-matched weights; the
    boundedness claim is that the norm settles, growing by less than
    growth_limit per size doubling. Entries over scales finer than the
    atom spacing are where an atomic measure stops looking
    m-dimensional, so the cube families should stay above it.
    """
    norms, sizes, details = [], [], []
    for cubes_q, cubes_r, mu in ladder:
        A = matrix_coefficients(cubes_q, cubes_r, mu, s, m)
        result = matrix_operator_norm(A, max_iters=max_iters, tol=tol)
        norms.append(result["norm"])
        sizes.append((len(list(cubes_q)), len(list(cubes_r)), mu.size))
        details.append(result)
    growth = [norms[i + 1] / norms[i] - 1.0 if norms[i] > 0.0 else math.inf
              for i in range(len(norms) - 1)]
    return {"sizes": sizes, "norms": norms, "growth": growth,
            "bounded": all(g < growth_limit for g in growth),
            "converged": all(d["converged"] for d in details),
            "details": details}


# --------------------------------------------------------- Carleson sums


def carleson_check(system: BAdaptedSystem, tb, reference_cubes, *,
                   params: GoodnessParams, alpha: float,
                   config=DEFAULT_CONFIG, side_range=None, tops=None,
                   max_quadratures: int = 4000) -> dict:
    """Dyadic Carleson sums of the per-cube cone energies of tb.

    Each qualifying reference cube R (nonempty, meeting the ball,
    transit against this system's stopping and exceptional sets, good for
    the restricted lattice, and fine enough that its ancestor at the
    goodness depth exists) charges the cube Q at params.r levels above it
    with the mu-weighted cone-annulus energy of tb over the window
    (delta side(R), side(R)] at each of R's atoms inside the ball. The
    quadrature uses purpose "carleson" with the atom index as the stream
    key, so annulus pieces at one atom share sample streams and add
    exactly across disjoint windows. tb maps a batch of points to complex
    operator values.

    Reports a_Q per charged cube and, per top cube, the subtree sum
    against the top's mass.
    """
    lattice = system.lattice
    mu = system.mu
    ball = lattice.ball
    delta = lattice.lattice.delta
    excluded = system.t_mask | system.h_mask
    ground = lattice.lattice.nets.ground.points

    pairs = []
    for R in reference_cubes:
        if R.size == 0:
            continue
        if side_range is not None:
            lo, hi = side_range
            if not (lo < R.side <= hi):
                continue
        if R.level <= lattice.k0 + params.r:
            continue
        in_ball = ball.contains(ground[R.atom_indices])
        if not in_ball.any():
            continue
        if not (~excluded[R.atom_indices]).any():
            continue
        if not is_good(R, lattice, params):
            continue
        up_level = R.level - params.r
        slots = np.unique(
            lattice.lattice.assignments[up_level][R.atom_indices])
        if slots.shape[0] != 1:
            continue
        q_key = (up_level, int(slots[0]))
        if q_key not in lattice.cubes or not system.transit[q_key]:
            continue
        atoms = [int(i) for i, inside in
                 zip(R.atom_indices, in_ball) if inside
                 and mu.weights[int(i)] > 0.0]
        if atoms:
            pairs.append((R, q_key, atoms))

    n_quads = sum(len(atoms) for _, _, atoms in pairs)
    if n_quads > max_quadratures:
        raise ValueError(
            f"quadrature budget exceeded: {n_quads} cone integrals needed, "
            f"{max_quadratures} allowed")

    def integrand(pts, dists):
        return np.abs(tb(pts)) ** 2 * dists ** (2.0 * alpha)

    E = lattice.lattice.nets.ground
    a = {}
    a_var = {}
    for R, q_key, atoms in pairs:
        for idx in atoms:
            est = cone_sigma_integral(
                E, ground[idx], delta * R.side, R.side, integrand, config,
                point_key=idx, purpose="carleson")
            w = float(mu.weights[idx])
            a[q_key] = a.get(q_key, 0.0) + w * est.value
            a_var[q_key] = a_var.get(q_key, 0.0) + (w * est.stderr) ** 2

    if tops is None:
        tops = [lattice.top_key]
    per_top = {}
    for top_key in tops:
        subtree = []
        stack = [top_key]
        while stack:
            key = stack.pop()
            if system.transit.get(key, False):
                subtree.append(key)
            stack.extend(k for k in lattice.cubes[key].children_keys
                         if k in lattice.cubes)
        total = math.fsum(a.get(key, 0.0) for key in subtree)
        mass = cube_mass(mu, lattice.cubes[top_key])
        per_top[top_key] = {
            "sum": total,
            "mass": mass,
            "ratio": total / mass if mass > 0.0 else
            (0.0 if total == 0.0 else math.inf),
        }
    constant = max((rec["ratio"] for rec in per_top.values()), default=0.0)
    return {"a": a, "a_stderr": {k: math.sqrt(v) for k, v in a_var.items()},
            "per_top": per_top, "constant": constant, "pairs": n_quads}
