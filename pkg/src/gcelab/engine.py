"""Generalized currents and continuity-law verification for stacked solutions.

Every operation here consumes exact piecewise solutions and checks, rather
than assumes, the continuity structure: the stationary residual combines the
analytic i(E_i - E_j) time term, a second-order finite difference of the
spatial current (one-sided at delta barriers and grid edges), and the
structure-constant source built from the potential decomposition.  Currents
and densities are reported at t = 0; the stationary phases enter only through
the energy-weighted time term.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import simpson

from .solvers import (
    Convention,
    DeltaBarrier,
    PiecewiseSolution,
    PotentialProfile,
    Segment,
    get_convention,
)
from .sun import PotentialDecomposition, SunBasis, decompose, source_operator

_SNAP = 1e-9


class DegenerateEnergiesError(ValueError):
    """Raised when an operation needs two distinct stationary energies."""


# ---------------------------------------------------------------------------
# Solution stacks


class SolutionStack:
    """Uniform view over a joint N-system solution or N single-system ones."""

    def __init__(self, sols):
        if isinstance(sols, PiecewiseSolution):
            self.joint = sols
            self.sols = None
            self.model = sols.model
            self.n_systems = sols.n_systems
            self.energies = np.full(sols.n_systems, sols.energy)
            self.convention = sols.convention
            self.mass = sols.mass
            self.profile = sols.profile
        else:
            sols = list(sols)
            if not sols:
                raise ValueError("empty solution stack")
            for s in sols:
                if s.n_systems != 1:
                    raise ValueError(
                        "a stack built from a sequence needs single-system solutions"
                    )
                if s.model != sols[0].model:
                    raise ValueError("mixed models in one stack")
            if sols[0].model == "dirac":
                names = {s.convention.name for s in sols}
                if len(names) > 1:
                    raise ValueError(f"mixed conventions in one stack: {sorted(names)}")
            else:
                masses = {s.mass for s in sols}
                if len(masses) > 1:
                    raise ValueError(f"mixed masses in one stack: {sorted(masses)}")
            self.joint = None
            self.sols = sols
            self.model = sols[0].model
            self.n_systems = len(sols)
            self.energies = np.array([s.energy for s in sols])
            self.convention = sols[0].convention
            self.mass = sols[0].mass
            self.profile = _combined_profile([s.profile for s in sols])

    def values(self, xs, side: str = "right") -> np.ndarray:
        """Stacked samples, shape (len(xs), N, 2) Dirac or (len(xs), 2, N) wave.

        For the wave model the middle axis is (value, derivative).
        """
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        n = self.n_systems
        if self.joint is not None:
            raw = self.joint.evaluate(xs, side)
            if self.model == "dirac":
                return raw.reshape(len(xs), n, 2)
            return raw.reshape(len(xs), 2, n)
        cols = [s.evaluate(xs, side) for s in self.sols]
        if self.model == "dirac":
            return np.stack(cols, axis=1)
        return np.stack(cols, axis=2)

    def system_values(self, i: int, xs, side: str = "right") -> np.ndarray:
        """Single-system samples (len, 2); shares arithmetic with ``values``."""
        if self.sols is not None:
            return self.sols[i - 1].evaluate(xs, side)
        if self.model == "dirac":
            return self.values(xs, side)[:, i - 1, :]
        return self.values(xs, side)[:, :, i - 1]


def as_stack(sols) -> SolutionStack:
    return sols if isinstance(sols, SolutionStack) else SolutionStack(sols)


def _merge_sorted(points: np.ndarray) -> np.ndarray:
    pts = np.sort(np.asarray(points, dtype=float))
    if len(pts) == 0:
        return pts
    keep = [pts[0]]
    for p in pts[1:]:
        if p - keep[-1] > _SNAP * max(1.0, abs(p)):
            keep.append(p)
    return np.array(keep)


def _combined_profile(profiles) -> PotentialProfile:
    """Diagonal N-system profile assembled from N single-system profiles."""
    n = len(profiles)
    bps = _merge_sorted(np.concatenate([p.breakpoints for p in profiles]))
    if len(bps) < 2:
        bps = np.array([bps[0], bps[0] + 1.0])
    segments = []
    for lo, hi in zip(bps[:-1], bps[1:]):
        mid = 0.5 * (lo + hi)
        diag = [profiles[i].matrix_at(mid)[0, 0] for i in range(n)]
        segments.append(Segment(lo, hi, np.diag(diag)))
    delta_pos = _merge_sorted(
        np.concatenate([p.delta_positions for p in profiles])
        if any(len(p.deltas) for p in profiles)
        else np.zeros(0)
    )
    deltas = []
    for x0 in delta_pos:
        diag = np.zeros(n, dtype=complex)
        for i, p in enumerate(profiles):
            d = p.delta_at(x0)
            if d is not None:
                diag[i] = d.strength[0, 0]
        deltas.append(DeltaBarrier(x0, np.diag(diag)))
    return PotentialProfile(segments, deltas)


# ---------------------------------------------------------------------------
# Finite differences on uniform grids


def uniform_spacing(xs: np.ndarray) -> float:
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 1 or len(xs) < 5:
        raise ValueError("need a 1-D grid with at least 5 points")
    h = xs[1] - xs[0]
    if h <= 0 or np.abs(np.diff(xs) - h).max() > 1e-9 * h:
        raise ValueError("difference stencils require a uniform ascending grid")
    return float(h)


def residual_cuts(profile: PotentialProfile) -> np.ndarray:
    """Positions where a current loses smoothness: interior breakpoints and deltas.

    The current itself jumps only at delta barriers, but its derivative kinks
    wherever the potential steps, so difference stencils must not straddle
    either kind of point.
    """
    return _merge_sorted(
        np.concatenate([profile.interior_cuts, profile.delta_positions])
    )


def snap_to_cuts(xs, cuts) -> np.ndarray:
    """Copy of ``xs`` with points just left of a cut moved onto it.

    ``piecewise_derivative`` assigns a point within its snap window below a
    cut to the right cell; evaluating potentials or states at the raw
    coordinate would pick the left side instead.  Snapping the evaluation
    coordinate keeps both choices, and hence the residual arithmetic,
    one-sided consistent when a grid point lands a rounding error short of a
    segment boundary.
    """
    out = np.atleast_1d(np.asarray(xs, dtype=float)).copy()
    for c in np.asarray(cuts, dtype=float):
        near = (out >= c - _SNAP * max(1.0, abs(c))) & (out < c)
        out[near] = c
    return out


def piecewise_derivative(values: np.ndarray, xs: np.ndarray, cuts=()) -> np.ndarray:
    """Second-order d/dx of sampled values, one-sided at cuts and grid edges.

    ``cuts`` are positions where the sampled field or its derivative may jump;
    a grid point sitting exactly on a cut belongs to the right cell, matching
    the right-continuous evaluation convention.
    """
    values = np.asarray(values)
    xs = np.asarray(xs, dtype=float)
    h = uniform_spacing(xs)
    starts = [0]
    for c in np.asarray(cuts, dtype=float):
        k = int(np.searchsorted(xs, c - _SNAP * max(1.0, abs(c))))
        if 0 < k < len(xs):
            starts.append(k)
    starts = sorted(set(starts))
    bounds = starts + [len(xs)]
    out = np.empty_like(values, dtype=complex)
    for s, e in zip(bounds[:-1], bounds[1:]):
        if e - s < 3:
            raise ValueError(
                f"need at least 3 grid points per smooth cell, got {e - s} "
                f"in [{xs[s]}, {xs[e - 1]}]"
            )
        cell = values[s:e]
        out[s + 1:e - 1] = (cell[2:] - cell[:-2]) / (2.0 * h)
        out[s] = (-3.0 * cell[0] + 4.0 * cell[1] - cell[2]) / (2.0 * h)
        out[e - 1] = (3.0 * cell[-1] - 4.0 * cell[-2] + cell[-3]) / (2.0 * h)
    return out


# ---------------------------------------------------------------------------
# Bilinear kernels shared by every current/residual path


def _dirac_generator_current(vals: np.ndarray, conv: Convention, t_a: np.ndarray):
    kernel = conv.current_matrix
    j0 = np.einsum("xsi,st,xti->x", vals.conj(), t_a, vals)
    j1 = np.einsum("xsi,ij,st,xtj->x", vals.conj(), kernel, t_a, vals)
    return j0, j1

def _wave_generator_current(vals: np.ndarray, mass: float, t_a: np.ndarray):
    v, d = vals[:, 0, :], vals[:, 1, :]
    j0 = np.einsum("xs,st,xt->x", v.conj(), t_a, v)
    j1 = (0.5j / mass) * (
        np.einsum("xs,st,xt->x", d.conj(), t_a, v)
        - np.einsum("xs,st,xt->x", v.conj(), t_a, d)
    )
    return j0, j1


def _time_term(vals: np.ndarray, energies: np.ndarray, t_a: np.ndarray, model: str):
    w = 1j * (energies[:, None] - energies[None, :]) * t_a
    if model == "dirac":
        return np.einsum("xsi,st,xti->x", vals.conj(), w, vals)
    v = vals[:, 0, :]
    return np.einsum("xs,st,xt->x", v.conj(), w, v)


def _source_term(vals, s_mats, conv, model: str, mass: float):
    """Bilinear of the per-sample source matrices S_a(x) in the stacked state."""
    if model == "dirac":
        spinor = conv.gamma0 @ conv.coupling_matrix
        return np.einsum("xsi,ij,xtj,xst->x", vals.conj(), spinor, vals, s_mats)
    v = vals[:, 0, :]
    return np.einsum("xs,xst,xt->x", v.conj(), s_mats, v)


# ---------------------------------------------------------------------------
# Current profiles


@dataclass(frozen=True)
class DomainStat:
    domain: "Domain"
    mean: complex
    max_dev: float
    rel_dev: float


@dataclass(frozen=True)
class DomainVerdict:
    domain: "Domain"
    mean: complex
    max_dev: float
    rel_dev: float
    tol: float
    passed: bool


@dataclass(frozen=True)
class CurrentProfile:
    """Sampled generalized current: spatial j1 and density j0 at t = 0."""

    kind: str
    index: object
    grid: np.ndarray
    j1: np.ndarray
    j0: np.ndarray
    domain_stats: tuple = ()


def interval_stats(grid, values, x_lo: float, x_hi: float):
    """(mean, max deviation, relative deviation) over grid points strictly inside."""
    grid = np.asarray(grid, dtype=float)
    snap = _SNAP * max(1.0, float(np.abs(grid).max()))
    mask = (grid > x_lo + snap) & (grid < x_hi - snap)
    if not mask.any():
        raise ValueError(f"no grid points strictly inside ({x_lo}, {x_hi})")
    vals = np.asarray(values)[mask]
    mean = complex(vals.mean())
    max_dev = float(np.abs(vals - mean).max())
    return mean, max_dev, max_dev / max(abs(mean), 1e-30)


def _attach_stats(profile: CurrentProfile, domains) -> CurrentProfile:
    if not domains:
        return profile
    stats = []
    for dom in domains:
        mean, max_dev, rel = interval_stats(profile.grid, profile.j1, dom.x_lo, dom.x_hi)
        stats.append(DomainStat(dom, mean, max_dev, rel))
    return replace(profile, domain_stats=tuple(stats))


def _current(sols, basis, index, grid, domains, model: str) -> CurrentProfile:
    stack = as_stack(sols)
    if stack.model != model:
        raise ValueError(f"expected a {model} stack, got {stack.model}")
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if isinstance(index, (tuple, list)):
        i, j = index
        for k in (i, j):
            if not 1 <= k <= stack.n_systems:
                raise ValueError(f"system index {k} outside 1..{stack.n_systems}")
        a_vals = stack.system_values(i, grid)
        b_vals = stack.system_values(j, grid)
        if model == "dirac":
            kernel = stack.convention.current_matrix
            j1 = np.einsum("xi,ij,xj->x", a_vals.conj(), kernel, b_vals)
            j0 = np.einsum("xi,xi->x", a_vals.conj(), b_vals)
        else:
            j1 = (0.5j / stack.mass) * (
                a_vals[:, 1].conj() * b_vals[:, 0] - a_vals[:, 0].conj() * b_vals[:, 1]
            )
            j0 = a_vals[:, 0].conj() * b_vals[:, 0]
        prof = CurrentProfile("pair", (int(i), int(j)), grid, j1, j0)
    else:
        if basis is None or basis.n != stack.n_systems:
            raise ValueError("basis rank must match the number of systems")
        t_a = basis.generator(int(index))
        vals = stack.values(grid)
        if model == "dirac":
            j0, j1 = _dirac_generator_current(vals, stack.convention, t_a)
        else:
            j0, j1 = _wave_generator_current(vals, stack.mass, t_a)
        prof = CurrentProfile("generator", int(index), grid, j1, j0)
    return _attach_stats(prof, domains)


def dirac_current(sols, basis: SunBasis | None, index, grid, domains=None) -> CurrentProfile:
    """Generalized Dirac current for generator index a (int) or pair (i, j).

    The pair form is the conjugate bilinear psi_i^dag gamma0 gamma1 psi_j and
    shares its arithmetic with transformed_current, so the identity transform
    reproduces it bit for bit.  Pair indices are 1-based.
    """
    return _current(sols, basis, index, grid, domains, "dirac")


def schrodinger_current(sols, basis: SunBasis | None, index, grid, domains=None) -> CurrentProfile:
    """Generalized Schroedinger current; j1 uses the exact stored derivatives."""
    return _current(sols, basis, index, grid, domains, "schrodinger")


def ladder_pair_current(sols, basis: SunBasis, i: int, j: int, grid) -> CurrentProfile:
    """Pair current rebuilt from generator currents via the ladder combination.

    T_sym(i,j) + i T_asym(i,j) = E_ij, so J_ij = j_sym + i j_asym.  Kept as an
    independent cross-check of the direct bilinear path.
    """
    if i == j:
        raise ValueError("ladder combination needs two distinct systems")
    lo, hi = sorted((i, j))
    pos = (hi - 1) * (hi - 1) + 2 * (lo - 1)  # 1-based index of sym(lo, hi)
    stack = as_stack(sols)
    fn = dirac_current if stack.model == "dirac" else schrodinger_current
    sym = fn(stack, basis, pos, grid)
    asym = fn(stack, basis, pos + 1, grid)
    sign = 1.0 if i < j else -1.0
    return CurrentProfile(
        "pair", (i, j), sym.grid, sym.j1 + sign * 1j * asym.j1, sym.j0 + sign * 1j * asym.j0
    )


# ---------------------------------------------------------------------------
# Symmetry transforms and domains


@dataclass(frozen=True)
class TransformSpec:
    """Affine coordinate map F(x) = sigma x + rho with a spinor factor."""

    sigma: int
    rho: float
    spinor_factor: np.ndarray

    def __post_init__(self):
        if self.sigma not in (-1, 1):
            raise ValueError(f"sigma must be -1 or +1, got {self.sigma}")
        object.__setattr__(
            self, "spinor_factor", np.asarray(self.spinor_factor, dtype=complex)
        )
        if self.spinor_factor.shape != (2, 2):
            raise ValueError("spinor factor must be a 2x2 matrix")

    @property
    def is_identity(self) -> bool:
        return (
            self.sigma == 1
            and self.rho == 0.0
            and np.array_equal(self.spinor_factor, np.eye(2))
        )

    def map(self, xs):
        xs = np.asarray(xs, dtype=float)
        if self.sigma == 1 and self.rho == 0.0:
            return xs
        return self.sigma * xs + self.rho

    def inverse_map(self, ys):
        ys = np.asarray(ys, dtype=float)
        return self.sigma * ys - self.sigma * self.rho


def identity_transform() -> TransformSpec:
    return TransformSpec(1, 0.0, np.eye(2))


def parity_transform(convention: Convention | str, center: float = 0.0) -> TransformSpec:
    """Mirror about ``center``: F(x) = -x + 2 center, spinor factor gamma0."""
    conv = get_convention(convention) if isinstance(convention, str) else convention
    return TransformSpec(-1, 2.0 * center, conv.parity_matrix)


def translation_transform(shift: float) -> TransformSpec:
    """F(x) = x + shift with trivial spinor factor."""
    return TransformSpec(1, float(shift), np.eye(2))


def transform_from_sigma_rho(
    sigma: int, rho: float, convention: Convention | str | None = None
) -> TransformSpec:
    """Spec from the (sigma, rho) pair; mirrors pick up the parity spinor factor."""
    if sigma == 1 or convention is None:
        return TransformSpec(sigma, float(rho), np.eye(2))
    conv = get_convention(convention) if isinstance(convention, str) else convention
    return TransformSpec(sigma, float(rho), conv.parity_matrix)


@dataclass(frozen=True)
class Domain:
    """Maximal interval on which V_i(x) matches V_j(F(x)), deltas included."""

    x_lo: float
    x_hi: float
    pair: tuple[int, int]
    transform: TransformSpec


def detect_domains(
    profile: PotentialProfile, pair, spec: TransformSpec, tol: float = 1e-8
) -> list[Domain]:
    """Exact symmetry domains of a pair from segment breakpoints, not sampling.

    An interval belongs to a domain when |V_ii(x) - V_jj(F(x))| <= tol on it
    and every delta barrier inside matches its mapped partner in position and
    strength within tol; an unmatched delta splits the domain at its position.
    """
    i, j = pair
    for k in (i, j):
        if not 1 <= k <= profile.n_systems:
            raise ValueError(f"system index {k} outside 1..{profile.n_systems}")
    cuts = _merge_sorted(
        np.concatenate([profile.breakpoints, spec.inverse_map(profile.breakpoints)])
    )
    edges = np.concatenate([[-np.inf], cuts, [np.inf]])
    passing = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if np.isinf(lo) and np.isinf(hi):
            mid = 0.0
        elif np.isinf(lo):
            mid = hi - 1.0
        elif np.isinf(hi):
            mid = lo + 1.0
        else:
            mid = 0.5 * (lo + hi)
        vi = profile.matrix_at(mid)[i - 1, i - 1].real
        vj = profile.matrix_at(float(spec.map(mid)))[j - 1, j - 1].real
        passing.append(abs(vi - vj) <= tol)
    runs = []
    k = 0
    while k < len(passing):
        if passing[k]:
            start = k
            while k + 1 < len(passing) and passing[k + 1]:
                k += 1
            runs.append((float(edges[start]), float(edges[k + 1])))
        k += 1

    def strength(sys: int, x: float) -> float:
        d = profile.delta_at(x)
        return float(d.strength[sys - 1, sys - 1].real) if d is not None else 0.0

    candidates = set(profile.delta_positions)
    candidates.update(float(spec.inverse_map(x)) for x in profile.delta_positions)
    mismatches = sorted(
        x for x in candidates
        if abs(strength(i, x) - strength(j, float(spec.map(x)))) > tol
    )
    domains = []
    for lo, hi in runs:
        inner = [x for x in mismatches if lo + _SNAP < x < hi - _SNAP]
        for a, b in zip([lo] + inner, inner + [hi]):
            domains.append(Domain(a, b, (int(i), int(j)), spec))
    return domains


def transformed_current(
    sol1, sol2, spec: TransformSpec, grid, domains=None
) -> CurrentProfile:
    """Mixed current psi1bar(x) gamma1 P psi2(F(x)) for single-system Dirac solutions.

    Constant on every symmetry domain when the two energies coincide; the
    identity transform reduces to the plain pair current bit for bit.
    """
    for s in (sol1, sol2):
        if s.model != "dirac" or s.n_systems != 1:
            raise ValueError("transformed currents need single-system Dirac solutions")
    if sol1.convention.name != sol2.convention.name:
        raise ValueError("solutions use different conventions")
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    mapped = spec.map(grid)
    a_vals = sol1.evaluate(grid)
    b_vals = sol2.evaluate(mapped)
    if spec.is_identity:
        # Same expressions as the pair branch of dirac_current, so the two
        # agree bit for bit on identical solution objects.
        kernel = sol1.convention.current_matrix
        j1 = np.einsum("xi,ij,xj->x", a_vals.conj(), kernel, b_vals)
        j0 = np.einsum("xi,xi->x", a_vals.conj(), b_vals)
    else:
        kernel = sol1.convention.current_matrix @ spec.spinor_factor
        j1 = np.einsum("xi,ij,xj->x", a_vals.conj(), kernel, b_vals)
        j0 = np.einsum("xi,ij,xj->x", a_vals.conj(), spec.spinor_factor, b_vals)
    prof = CurrentProfile("transformed", (1, 2), grid, j1, j0)
    return _attach_stats(prof, domains)


@dataclass(frozen=True)
class DeltaRelation:
    c_minus: complex
    c_plus: complex
    predicted_c_plus: complex
    deviation: float
    rel_dev_minus: float
    rel_dev_plus: float


def delta_domain_relation(
    sol1,
    sol2,
    junction: np.ndarray,
    convention: Convention | str | None = None,
    *,
    x0: float | None = None,
    spec: TransformSpec | None = None,
    window: float = 1.5,
    samples: int = 401,
) -> DeltaRelation:
    """Domain constants across an unmatched delta and their junction prediction.

    The mirror-transformed current is constant on each side of the delta at
    x0; approaching from the left gives c_minus = psi1(x0-)^dag K psi2(x0+)
    with K = gamma0 gamma1 P, and inserting the junction matrix J that relates
    psi1(x0+) = J psi1(x0-) predicts c_plus = (J psi1(x0-))^dag K psi2(x0-).
    Both constants are also measured as domain means next to the delta.
    """
    conv = sol1.convention if convention is None else (
        get_convention(convention) if isinstance(convention, str) else convention
    )
    if x0 is None:
        pos = sol1.profile.delta_positions
        if len(pos) != 1:
            raise ValueError("x0 is required unless sol1 has exactly one delta barrier")
        x0 = float(pos[0])
    if spec is None:
        spec = parity_transform(conv, center=x0)
    prof = _combined_profile([sol1.profile, sol2.profile])
    domains = detect_domains(prof, (1, 2), spec)
    left_dom = next((d for d in domains if abs(d.x_hi - x0) <= _SNAP), None)
    right_dom = next((d for d in domains if abs(d.x_lo - x0) <= _SNAP), None)
    if left_dom is None or right_dom is None:
        # A matched (or absent) barrier leaves one domain covering x0; use it
        # for both one-sided means.
        spanning = next(
            (d for d in domains if d.x_lo < x0 - _SNAP and d.x_hi > x0 + _SNAP), None
        )
        if spanning is None:
            raise ValueError(f"no symmetry domains adjacent to the delta at {x0}")
        left_dom = left_dom or spanning
        right_dom = right_dom or spanning
    lo = max(left_dom.x_lo, x0 - window)
    hi = min(right_dom.x_hi, x0 + window)
    xs_minus = np.linspace(lo, x0, samples + 2)[1:-1]
    xs_plus = np.linspace(x0, hi, samples + 2)[1:-1]
    cur_minus = transformed_current(sol1, sol2, spec, xs_minus)
    cur_plus = transformed_current(sol1, sol2, spec, xs_plus)
    c_minus = complex(cur_minus.j1.mean())
    c_plus = complex(cur_plus.j1.mean())
    rel_minus = float(np.abs(cur_minus.j1 - c_minus).max()) / max(abs(c_minus), 1e-30)
    rel_plus = float(np.abs(cur_plus.j1 - c_plus).max()) / max(abs(c_plus), 1e-30)
    kernel = conv.current_matrix @ spec.spinor_factor
    psi1_left = sol1.evaluate([x0], side="left")[0]
    psi2_left = sol2.evaluate([spec.map(float(x0))], side="left")[0]
    junction = np.asarray(junction, dtype=complex)
    predicted = complex((junction @ psi1_left).conj() @ kernel @ psi2_left)
    return DeltaRelation(
        c_minus, c_plus, predicted, abs(c_plus - predicted), rel_minus, rel_plus
    )


# ---------------------------------------------------------------------------
# Charge / current relation


@dataclass(frozen=True)
class ChargeRelation:
    q: complex
    boundary_value: complex
    discrepancy: float


def charge_current_relation(
    sol1, sol2, x1: float, x2: float, n_points: int = 10001
) -> ChargeRelation:
    """Integrated mixed density against the current difference at the ends.

    For two single-system Dirac solutions of the same potential at distinct
    energies, int_{x1}^{x2} psi1^dag psi2 dx equals
    i (J_12(x2) - J_12(x1)) / (E_1 - E_2) with J_12 the pair current.
    Quadrature is composite Simpson on a uniform grid (odd point count,
    rounded up when needed).
    """
    for s in (sol1, sol2):
        if s.model != "dirac" or s.n_systems != 1:
            raise ValueError("charge relation needs single-system Dirac solutions")
    if sol1.convention.name != sol2.convention.name:
        raise ValueError("solutions use different conventions")
    if not x2 > x1:
        raise ValueError(f"need x2 > x1, got [{x1}, {x2}]")
    de = sol1.energy - sol2.energy
    if abs(de) <= 1e-12 * max(1.0, abs(sol1.energy)):
        raise DegenerateEnergiesError(
            "charge-current relation is singular at equal energies"
        )
    _check_same_profile(sol1.profile, sol2.profile)
    n = int(n_points)
    if n < 3:
        raise ValueError("n_points must be at least 3")
    if n % 2 == 0:
        n += 1
    xs = np.linspace(float(x1), float(x2), n)
    dens = np.einsum(
        "xi,xi->x", sol1.evaluate(xs).conj(), sol2.evaluate(xs)
    )
    q = complex(simpson(dens, x=xs))
    kernel = sol1.convention.current_matrix
    ends = [complex(sol1.evaluate([x]).conj()[0] @ kernel @ sol2.evaluate([x])[0])
            for x in (x1, x2)]
    boundary = 1j * (ends[1] - ends[0]) / de
    return ChargeRelation(q, boundary, abs(q - boundary))


def _check_same_profile(p1: PotentialProfile, p2: PotentialProfile) -> None:
    same = (
        len(p1.segments) == len(p2.segments)
        and np.allclose(p1.breakpoints, p2.breakpoints, atol=1e-12)
        and all(
            np.abs(a.v - b.v).max() <= 1e-12 for a, b in zip(p1.segments, p2.segments)
        )
        and len(p1.deltas) == len(p2.deltas)
        and all(
            abs(a.x0 - b.x0) <= 1e-12 and np.abs(a.strength - b.strength).max() <= 1e-12
            for a, b in zip(p1.deltas, p2.deltas)
        )
    )
    if not same:
        raise ValueError("the two solutions must share one potential profile")


# ---------------------------------------------------------------------------
# Continuity residuals


@dataclass(frozen=True)
class GceReport:
    """Sampled continuity residual for one generator index."""

    a: int
    grid: np.ndarray
    residual: np.ndarray
    residual_rms: float
    residual_max: float
    convergence_order: float | None = None
    domain_verdicts: tuple = ()


def _stationary_residual(stack, basis, a, grid, decomp, model):
    t_a = basis.generator(int(a))
    cuts = residual_cuts(stack.profile)
    eval_xs = snap_to_cuts(grid, cuts)
    vals = stack.values(eval_xs)
    if model == "dirac":
        _, j1 = _dirac_generator_current(vals, stack.convention, t_a)
    else:
        _, j1 = _wave_generator_current(vals, stack.mass, t_a)
    dj1 = piecewise_derivative(j1, grid, cuts)
    time_term = _time_term(vals, stack.energies, t_a, model)
    s_mats = source_operator(decomp, int(a))[decomp.segment_of(eval_xs)]
    source = _source_term(vals, s_mats, stack.convention, model, stack.mass)
    return time_term + dj1 - source, j1


def _residual_report(sols, basis, a, grid, decomp, domains, tol, fine_grid, model):
    stack = as_stack(sols)
    if stack.model != model:
        raise ValueError(f"expected a {model} stack, got {stack.model}")
    if basis.n != stack.n_systems:
        raise ValueError("basis rank must match the number of systems")
    grid = np.asarray(grid, dtype=float)
    if decomp is None:
        decomp = decompose(stack.profile, basis)
    residual, j1 = _stationary_residual(stack, basis, a, grid, decomp, model)
    rms = float(np.sqrt(np.mean(np.abs(residual) ** 2)))
    rmax = float(np.abs(residual).max())
    order = None
    if fine_grid is not None:
        fine_grid = np.asarray(fine_grid, dtype=float)
        h_c, h_f = uniform_spacing(grid), uniform_spacing(fine_grid)
        fine_res, _ = _stationary_residual(stack, basis, a, fine_grid, decomp, model)
        fine_rms = float(np.sqrt(np.mean(np.abs(fine_res) ** 2)))
        if fine_rms > 0 and rms > 0:
            order = float(np.log(rms / fine_rms) / np.log(h_c / h_f))
    verdicts = []
    for dom in domains or ():
        mean, max_dev, rel = interval_stats(grid, j1, dom.x_lo, dom.x_hi)
        verdicts.append(DomainVerdict(dom, mean, max_dev, rel, tol, rel <= tol))
    return GceReport(int(a), grid, residual, rms, rmax, order, tuple(verdicts))


def gce_residual_dirac(
    sols, basis: SunBasis, a: int, grid, decomp: PotentialDecomposition | None = None,
    *, domains=None, tol: float = 1e-8, fine_grid=None,
) -> GceReport:
    """Stationary Dirac continuity residual for generator a on a uniform grid.

    residual = i(E_i - E_j)-weighted density + d/dx j1_a - source_a; exact
    solutions leave only the second-order stencil truncation, so halving the
    spacing divides the norm by four.  ``fine_grid`` triggers the two-grid
    convergence-order estimate; ``domains`` adds per-domain constancy verdicts
    on j1_a at tolerance ``tol``.
    """
    return _residual_report(sols, basis, a, grid, decomp, domains, tol, fine_grid, "dirac")


def gce_residual_schrodinger(
    sols, basis: SunBasis, a: int, grid, decomp: PotentialDecomposition | None = None,
    *, domains=None, tol: float = 1e-8, fine_grid=None,
) -> GceReport:
    """Stationary Schroedinger continuity residual for generator a."""
    return _residual_report(
        sols, basis, a, grid, decomp, domains, tol, fine_grid, "schrodinger"
    )


# ---------------------------------------------------------------------------
# Gauge-field diagnostic


@dataclass(frozen=True)
class GaugeConfig:
    """Static gauge potentials A^a_mu sampled on a uniform x grid.

    ``a_fields`` has shape (N**2 - 1, 2, len(grid)) holding the lower-index
    components (A_0, A_1) per generator.  ``cuts`` lists the non-smooth
    positions of the sampled state, normally residual_cuts(profile), so the
    spatial stencil stays one-sided there.  ``t_grid`` switches the residual
    to a sampled-time path with centered differences in t.
    """

    grid: np.ndarray
    a_fields: np.ndarray
    cuts: tuple = ()
    t_grid: np.ndarray | None = None


def field_strength(config: GaugeConfig, basis: SunBasis) -> np.ndarray:
    """R_01^a = d_t A_1 - d_x A_0 - f_abc A^b_0 A^c_1 per sample (static d_t = 0)."""
    a0 = config.a_fields[:, 0, :]
    a1 = config.a_fields[:, 1, :]
    dx_a0 = np.stack(
        [piecewise_derivative(a0[d], config.grid, config.cuts).real
         for d in range(a0.shape[0])]
    )
    quad = np.einsum("abc,bm,cm->am", basis.structure_constants, a0, a1)
    return -dx_a0 - quad


def gauge_residual(
    psi: np.ndarray,
    config: GaugeConfig,
    basis: SunBasis,
    a: int,
    *,
    energies=None,
    decomp: PotentialDecomposition | None = None,
    convention: Convention | str = "default",
) -> GceReport:
    """Continuity residual with the gauge-corrected current, finite differences.

    Evaluates d_mu (jbar^mu_a - R^{mu nu d} f_abd A^b_nu) - source_a on the
    sampled super-spinor.  The correction uses the fixed index ordering
    f_{a b d}; raising with the metric diag(1, -1) gives the corrections
    K^0 = -R_01^d f_abd A^b_1 and K^1 = +R_01^d f_abd A^b_0.  With A = 0 both
    corrections vanish termwise and the arithmetic is identical to the
    ungauged residual path.  ``psi`` is (m, 2N) with per-system ``energies``
    (analytic time derivative), or (nt, m, 2N) with ``config.t_grid`` set
    (centered differences in t).
    """
    conv = get_convention(convention) if isinstance(convention, str) else convention
    t_a = basis.generator(int(a))
    grid = np.asarray(config.grid, dtype=float)
    psi = np.asarray(psi, dtype=complex)
    n = basis.n
    d = basis.dim
    if config.a_fields.shape != (d, 2, len(grid)):
        raise ValueError(
            f"a_fields must have shape ({d}, 2, {len(grid)}), got {config.a_fields.shape}"
        )
    r01 = field_strength(config, basis)
    f_a = basis.structure_constants[int(a) - 1]
    a0 = config.a_fields[:, 0, :]
    a1 = config.a_fields[:, 1, :]
    k0 = -np.einsum("bd,dm,bm->m", f_a, r01, a1)
    k1 = np.einsum("bd,dm,bm->m", f_a, r01, a0)
    if decomp is not None:
        lookup = snap_to_cuts(grid, config.cuts)
        s_mats = source_operator(decomp, int(a))[decomp.segment_of(lookup)]
    else:
        s_mats = np.zeros((len(grid), n, n))

    def assemble(vals):
        j0, j1 = _dirac_generator_current(vals, conv, t_a)
        source = _source_term(vals, s_mats, conv, "dirac", None)
        return j0, j1, source

    if psi.ndim == 2:
        if energies is None:
            raise ValueError("static psi needs per-system energies")
        vals = psi.reshape(len(grid), n, 2)
        j0, j1, source = assemble(vals)
        time_term = _time_term(vals, np.asarray(energies, dtype=float), t_a, "dirac")
        dj1 = piecewise_derivative(j1 - k1, grid, config.cuts)
        residual = time_term + dj1 - source
        out_grid = grid
    elif psi.ndim == 3:
        if config.t_grid is None:
            raise ValueError("sampled-time psi needs config.t_grid")
        ts = np.asarray(config.t_grid, dtype=float)
        j0s, j1s, sources = [], [], []
        for slab in psi:
            j0, j1, source = assemble(slab.reshape(len(grid), n, 2))
            j0s.append(j0 - k0)
            j1s.append(j1 - k1)
            sources.append(source)
        j0s, j1s, sources = np.array(j0s), np.array(j1s), np.array(sources)
        dt = np.stack([piecewise_derivative(j0s[:, m], ts) for m in range(len(grid))], axis=1)
        dx = np.stack([piecewise_derivative(j1s[t], grid, config.cuts) for t in range(len(ts))])
        residual = dt + dx - sources
        out_grid = grid
    else:
        raise ValueError("psi must be (m, 2N) or (nt, m, 2N)")
    rms = float(np.sqrt(np.mean(np.abs(residual) ** 2)))
    rmax = float(np.abs(residual).max())
    return GceReport(int(a), out_grid, residual, rms, rmax)
