"""Exact stationary solvers for stacked 1-D Dirac and Schroedinger systems.

Potentials are piecewise constant Hermitian N x N matrices with optional delta
barriers at segment boundaries.  Solutions are represented piecewise through
the matrix exponential of the constant first-order generator of each segment,
so evaluation anywhere on the line is exact up to matrix-exponential accuracy;
there is no ODE stepping.

State layout: the Dirac stack orders components system-major, psi[2i:2i+2] is
the 2-spinor of system i.  The Schroedinger stack carries (values, derivatives)
as u = (phi_1..phi_N, phi_1'..phi_N').  The leftmost/rightmost segment values
extend to -inf/+inf, so every solution covers the whole line.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import expm

from .sun import _hermitian_or_raise

_BOUNDARY_ATOL = 1e-9


class EvanescentChannelError(ValueError):
    """Scattering requested at an energy with a non-propagating asymptotic channel."""


class ProfileError(ValueError):
    """Inconsistent potential profile geometry or matrices."""


# ---------------------------------------------------------------------------
# Gamma-matrix conventions


@dataclass(frozen=True)
class Convention:
    """1+1 dimensional Clifford pair plus the potential coupling channel.

    ``gamma0`` must be Hermitian with square +1, ``gamma1`` anti-Hermitian with
    square -1, and the two must anticommute.  ``coupling`` selects whether the
    potential enters as V * identity ("scalar") or V * gamma0 ("vector").
    """

    name: str
    gamma0: np.ndarray
    gamma1: np.ndarray
    coupling: str = "scalar"

    def __post_init__(self):
        g0 = np.asarray(self.gamma0, dtype=complex)
        g1 = np.asarray(self.gamma1, dtype=complex)
        object.__setattr__(self, "gamma0", g0)
        object.__setattr__(self, "gamma1", g1)
        eye = np.eye(2)
        checks = [
            (np.abs(g0 - g0.conj().T).max(), "gamma0 must be Hermitian"),
            (np.abs(g0 @ g0 - eye).max(), "gamma0 squared must be +1"),
            (np.abs(g1 + g1.conj().T).max(), "gamma1 must be anti-Hermitian"),
            (np.abs(g1 @ g1 + eye).max(), "gamma1 squared must be -1"),
            (np.abs(g0 @ g1 + g1 @ g0).max(), "gamma0 and gamma1 must anticommute"),
        ]
        for err, msg in checks:
            if err > 1e-13:
                raise ValueError(f"{msg} (violation {err:.2e})")
        if self.coupling not in ("scalar", "vector"):
            raise ValueError(f"coupling must be 'scalar' or 'vector', got {self.coupling!r}")

    @property
    def gamma1_inv(self) -> np.ndarray:
        """(gamma1)^-1 = -gamma1 because gamma1 squares to -1."""
        return -self.gamma1

    @property
    def coupling_matrix(self) -> np.ndarray:
        """Spinor-space factor K multiplying the potential."""
        return np.eye(2, dtype=complex) if self.coupling == "scalar" else self.gamma0

    @property
    def parity_matrix(self) -> np.ndarray:
        """Spinor factor of the parity map psi(x) -> gamma0 psi(-x)."""
        return self.gamma0

    @property
    def current_matrix(self) -> np.ndarray:
        """Hermitian bilinear kernel gamma0 gamma1 of the spatial current."""
        return self.gamma0 @ self.gamma1


_SZ = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
_SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_SY = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)

CONVENTIONS: dict[str, Convention] = {
    "default": Convention("default", _SZ, 1j * _SX, "scalar"),
    "vector": Convention("vector", _SZ, 1j * _SX, "vector"),
    "rotated": Convention("rotated", _SX, 1j * _SY, "scalar"),
}


def get_convention(name: str) -> Convention:
    try:
        return CONVENTIONS[name]
    except KeyError:
        known = ", ".join(sorted(CONVENTIONS))
        raise ValueError(f"unknown convention {name!r}; known: {known}") from None


# ---------------------------------------------------------------------------
# Potential profiles


@dataclass(frozen=True)
class Segment:
    x_lo: float
    x_hi: float
    v: np.ndarray


@dataclass(frozen=True)
class DeltaBarrier:
    x0: float
    strength: np.ndarray


class PotentialProfile:
    """Ordered contiguous segments plus delta barriers at segment boundaries."""

    def __init__(self, segments, deltas=()):
        if not segments:
            raise ProfileError("profile needs at least one segment")
        segs = []
        n = np.asarray(segments[0].v).shape[0]
        prev_hi = None
        for s, seg in enumerate(segments):
            lo, hi = float(seg.x_lo), float(seg.x_hi)
            if not hi > lo:
                raise ProfileError(f"segment {s} has non-positive length [{lo}, {hi}]")
            if prev_hi is not None:
                if abs(lo - prev_hi) > _BOUNDARY_ATOL:
                    raise ProfileError(
                        f"segment {s} starts at {lo}, previous ends at {prev_hi}"
                    )
                lo = prev_hi
            v = _hermitian_or_raise(seg.v, n, what=f"segment {s} potential")
            segs.append(Segment(lo, hi, v))
            prev_hi = hi
        self.segments: tuple[Segment, ...] = tuple(segs)
        self.n_systems = n
        self.breakpoints = np.array(
            [s.x_lo for s in segs] + [segs[-1].x_hi], dtype=float
        )
        snapped = []
        for d, delta in enumerate(deltas):
            x0 = float(delta.x0)
            k = int(np.argmin(np.abs(self.breakpoints - x0)))
            if abs(self.breakpoints[k] - x0) > _BOUNDARY_ATOL:
                raise ProfileError(
                    f"delta {d} at {x0} does not sit on a segment boundary"
                )
            lam = _hermitian_or_raise(delta.strength, n, what=f"delta {d} strength")
            snapped.append(DeltaBarrier(float(self.breakpoints[k]), lam))
        snapped.sort(key=lambda d: d.x0)
        for a, b in zip(snapped, snapped[1:]):
            if a.x0 == b.x0:
                raise ProfileError(f"two delta barriers share position {a.x0}")
        self.deltas: tuple[DeltaBarrier, ...] = tuple(snapped)

    @property
    def extent(self) -> tuple[float, float]:
        return float(self.breakpoints[0]), float(self.breakpoints[-1])

    @property
    def interior_cuts(self) -> np.ndarray:
        return self.breakpoints[1:-1]

    @property
    def segment_matrices(self) -> np.ndarray:
        return np.array([s.v for s in self.segments])

    @property
    def delta_positions(self) -> np.ndarray:
        return np.array([d.x0 for d in self.deltas])

    def segment_index(self, x: float, side: str = "right") -> int:
        """Index of the segment ruling x, with asymptotic extension at the ends."""
        which = "right" if side == "right" else "left"
        k = int(np.searchsorted(self.interior_cuts, x, side=which))
        return k

    def matrix_at(self, x: float, side: str = "right") -> np.ndarray:
        return self.segments[self.segment_index(x, side)].v

    def delta_at(self, x: float) -> DeltaBarrier | None:
        for d in self.deltas:
            if abs(d.x0 - x) <= _BOUNDARY_ATOL:
                return d
        return None

    @cached_property
    def is_diagonal(self) -> bool:
        off = [s.v - np.diag(np.diag(s.v)) for s in self.segments]
        off += [d.strength - np.diag(np.diag(d.strength)) for d in self.deltas]
        return all(np.abs(o).max() == 0.0 for o in off)

    def system(self, i: int) -> "PotentialProfile":
        """Single-system sub-profile (1-based i); requires a diagonal profile."""
        if not 1 <= i <= self.n_systems:
            raise ValueError(f"system index must be in 1..{self.n_systems}, got {i}")
        if not self.is_diagonal:
            raise ProfileError("cannot extract a system from a coupled profile")
        segs = [
            Segment(s.x_lo, s.x_hi, np.array([[s.v[i - 1, i - 1]]])) for s in self.segments
        ]
        deltas = [
            DeltaBarrier(d.x0, np.array([[d.strength[i - 1, i - 1]]]))
            for d in self.deltas
            if d.strength[i - 1, i - 1] != 0.0
        ]
        return PotentialProfile(segs, deltas)


def uniform_profile(v, x_lo: float = 0.0, x_hi: float = 1.0) -> PotentialProfile:
    """Single-segment profile; with the asymptotic extension, V is constant on R."""
    return PotentialProfile([Segment(x_lo, x_hi, np.asarray(v, dtype=complex))])


# ---------------------------------------------------------------------------
# First-order generators and delta junctions


def dirac_generator(v, energy: float, convention: Convention) -> np.ndarray:
    """Generator M of psi' = M psi for a constant Hermitian potential block.

    M = -i (I_N kron gamma1^-1) (V kron K - E I_N kron gamma0), so for a free
    single system at energy E the eigenvalues are +-iE and exp(M x) rotates the
    spinor with period 2 pi / |E|.
    """
    v = np.asarray(v, dtype=complex)
    if v.ndim == 0:
        v = v.reshape(1, 1)
    n = v.shape[0]
    g1inv = convention.gamma1_inv
    k = convention.coupling_matrix
    return -1j * (
        np.kron(v, g1inv @ k) - energy * np.kron(np.eye(n), g1inv @ convention.gamma0)
    )


def schrodinger_generator(v, energy: float, mass: float = 1.0) -> np.ndarray:
    """Generator of u' = M u with u = (values, derivatives) stacked."""
    v = np.asarray(v, dtype=complex)
    if v.ndim == 0:
        v = v.reshape(1, 1)
    n = v.shape[0]
    m = np.zeros((2 * n, 2 * n), dtype=complex)
    m[:n, n:] = np.eye(n)
    m[n:, :n] = 2.0 * mass * (v - energy * np.eye(n))
    return m


def delta_junction(strength, convention: Convention) -> np.ndarray:
    """Dirac transfer matrix across a delta barrier of Hermitian strength.

    J = exp(-i strength kron gamma1^-1 K).  With vector coupling and the
    default gammas this is the rotation [[cos s, sin s], [-sin s, cos s]] per
    unit strength; with scalar coupling it is the Hermitian exp(-s sigma_x)
    family instead.
    """
    lam = np.asarray(strength, dtype=complex)
    if lam.ndim == 0:
        lam = lam.reshape(1, 1)
    return expm(-1j * np.kron(lam, convention.gamma1_inv @ convention.coupling_matrix))


def schrodinger_delta_junction(strength, mass: float = 1.0) -> np.ndarray:
    """Transfer across a delta: values continuous, derivative jump 2 m strength."""
    lam = np.asarray(strength, dtype=complex)
    if lam.ndim == 0:
        lam = lam.reshape(1, 1)
    n = lam.shape[0]
    j = np.eye(2 * n, dtype=complex)
    j[n:, :n] = 2.0 * mass * lam
    return j


# ---------------------------------------------------------------------------
# Boundary specifications


@dataclass(frozen=True)
class InitialValue:
    """Full stacked state at the left edge x_lo, before any junction there."""

    values: np.ndarray


@dataclass(frozen=True)
class Scattering:
    """Per-system incoming plane-wave amplitudes from the left, no inflow from the right.

    The incoming wave of system i is amplitudes[i] times the unit right-moving
    mode referenced at the profile's left edge, i.e. its phase is
    exp(i k (x - x_lo)).  Dirac modes have unit spinor norm, Schroedinger modes
    unit value, so a free system with amplitude 1 has |phi| = 1 everywhere.
    """

    amplitudes: np.ndarray


BoundarySpec = InitialValue | Scattering


# ---------------------------------------------------------------------------
# Piecewise solutions


class _Piece:
    __slots__ = ("anchor", "value", "matrix", "_eig")

    def __init__(self, anchor: float, value: np.ndarray, matrix: np.ndarray):
        self.anchor = anchor
        self.value = np.asarray(value, dtype=complex)
        self.matrix = np.asarray(matrix, dtype=complex)
        self._eig = self._try_eig()

    def _try_eig(self):
        m = self.matrix
        try:
            mu, p = np.linalg.eig(m)
            pinv = np.linalg.inv(p)
        except np.linalg.LinAlgError:
            return None
        scale = max(1.0, float(np.abs(m).max()))
        if np.abs(p @ np.diag(mu) @ pinv - m).max() > 1e-12 * scale:
            return None
        if np.linalg.cond(p) > 1e8:
            return None
        return mu, p, pinv

    def expand(self, dx: np.ndarray) -> np.ndarray:
        """State at anchor + dx for an array of offsets, shape (len(dx), dim)."""
        dx = np.asarray(dx, dtype=float)
        if self._eig is not None:
            mu, p, pinv = self._eig
            w0 = pinv @ self.value
            return (p @ (np.exp(np.outer(mu, dx)) * w0[:, None])).T
        out = np.empty((len(dx), len(self.value)), dtype=complex)
        cache: dict[float, np.ndarray] = {}
        for idx, d in enumerate(dx):
            key = float(d)
            if key not in cache:
                cache[key] = expm(self.matrix * key)
            out[idx] = cache[key] @ self.value
        return out


class PiecewiseSolution:
    """Piecewise-exponential solution of a first-order stacked system.

    ``pieces[j]`` rules [breakpoints[j-1], breakpoints[j]) for 1 <= j <= m, with
    pieces[0] the left tail and pieces[m+1] the right tail.  Values at a
    breakpoint follow the right-continuous convention; ``limits`` exposes both
    one-sided values, which differ exactly by the junction matrix at a delta.
    """

    model = "generic"

    def __init__(self, profile, energy, pieces, breakpoints, convention=None, mass=None):
        self.profile = profile
        self.energy = float(energy)
        self.pieces: list[_Piece] = pieces
        self.breakpoints = np.asarray(breakpoints, dtype=float)
        self.convention = convention
        self.mass = mass

    @property
    def n_systems(self) -> int:
        return self.profile.n_systems

    @property
    def dim(self) -> int:
        return 2 * self.n_systems

    def evaluate(self, xs, side: str = "right") -> np.ndarray:
        """Sampled stacked state, shape (len(xs), 2N)."""
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        which = "right" if side == "right" else "left"
        idx = np.searchsorted(self.breakpoints, xs, side=which)
        out = np.empty((len(xs), self.dim), dtype=complex)
        for j in np.unique(idx):
            mask = idx == j
            piece = self.pieces[j]
            out[mask] = piece.expand(xs[mask] - piece.anchor)
        return out

    def limits(self, x: float) -> tuple[np.ndarray, np.ndarray]:
        """(left limit, right limit) of the stacked state at x."""
        return self.evaluate([x], side="left")[0], self.evaluate([x], side="right")[0]

    def _slice(self, rows: list[int], sub_profile) -> "PiecewiseSolution":
        pieces = []
        for p in self.pieces:
            sub = p.matrix[np.ix_(rows, rows)]
            other = p.matrix[rows, :].copy()
            other[:, rows] = 0.0
            if np.abs(other).max() > 1e-13 * max(1.0, np.abs(p.matrix).max()):
                raise ProfileError("cannot extract a system: generator couples systems")
            pieces.append(_Piece(p.anchor, p.value[rows], sub))
        return type(self)(
            sub_profile, self.energy, pieces, self.breakpoints,
            convention=self.convention, mass=self.mass,
        )


class SpinorSolution(PiecewiseSolution):
    """Stacked Dirac solution; psi[2i:2i+2] is the 2-spinor of system i (0-based)."""

    model = "dirac"

    def psi(self, xs, side: str = "right") -> np.ndarray:
        """Spinors resolved per system, shape (len(xs), N, 2)."""
        vals = self.evaluate(xs, side)
        return vals.reshape(len(vals), self.n_systems, 2)

    def system(self, i: int) -> "SpinorSolution":
        """Single-system solution (1-based i); requires a decoupled stack."""
        return self._slice([2 * (i - 1), 2 * i - 1], self.profile.system(i))


class WaveSolution(PiecewiseSolution):
    """Stacked Schroedinger solution carrying exact values and derivatives."""

    model = "schrodinger"

    def value_and_derivative(self, xs, side: str = "right"):
        """(values, derivatives), each of shape (len(xs), N)."""
        vals = self.evaluate(xs, side)
        n = self.n_systems
        return vals[:, :n], vals[:, n:]

    def system(self, i: int) -> "WaveSolution":
        n = self.n_systems
        return self._slice([i - 1, n + i - 1], self.profile.system(i))


# ---------------------------------------------------------------------------
# Mode analysis for scattering boundaries


def _propagating_modes(m2: np.ndarray, current_kernel: np.ndarray):
    """Classify the 2x2 single-system generator into (right, left) unit modes.

    Modes are eigenvectors of the generator; propagating ones have purely
    imaginary eigenvalues and are labeled by the sign of the conserved current
    u^dag (kernel) u.  The phase is fixed by making the first significant
    component real positive, which keeps outputs platform-deterministic.
    """
    mu, vecs = np.linalg.eig(m2)
    scale = max(1.0, float(np.abs(mu).max()))
    if np.abs(mu.real).max() > 1e-9 * scale:
        raise EvanescentChannelError(
            "asymptotic channel is evanescent at this energy "
            f"(eigenvalues {mu}); scattering boundaries need propagating channels"
        )
    right = left = None
    for col in range(2):
        u = vecs[:, col]
        u = u / np.linalg.norm(u)
        lead = np.flatnonzero(np.abs(u) > 1e-9)[0]
        u = u * (np.abs(u[lead]) / u[lead])
        j = (u.conj() @ current_kernel @ u).real
        if abs(j) <= 1e-12:
            raise EvanescentChannelError("cannot classify a zero-current mode")
        if j > 0:
            right = u
        else:
            left = u
    if right is None or left is None:
        raise EvanescentChannelError("asymptotic channels do not split into left/right movers")
    return right, left


def _scattering_modes(profile, energy, convention, mass, model):
    """Per-system asymptotic mode matrices (U_in, U_ref, U_out), value-normalized."""
    n = profile.n_systems
    v_left = profile.segments[0].v
    v_right = profile.segments[-1].v
    for name, v in (("leftmost", v_left), ("rightmost", v_right)):
        if np.abs(v - np.diag(np.diag(v))).max() > 0.0:
            raise ProfileError(
                f"scattering boundaries need a diagonal {name} segment so that "
                "per-system channels are well defined"
            )
    dim = 2 * n
    u_in = np.zeros((dim, n), dtype=complex)
    u_ref = np.zeros((dim, n), dtype=complex)
    u_out = np.zeros((dim, n), dtype=complex)
    for i in range(n):
        if model == "dirac":
            rows = [2 * i, 2 * i + 1]
            kernel = convention.current_matrix
            m_l = dirac_generator(v_left[i, i].real, energy, convention)
            m_r = dirac_generator(v_right[i, i].real, energy, convention)
            r_l, l_l = _propagating_modes(m_l, kernel)
            r_r, _ = _propagating_modes(m_r, kernel)
        else:
            rows = [i, n + i]
            for v_edge in (v_left[i, i].real, v_right[i, i].real):
                if 2.0 * mass * (energy - v_edge) <= 1e-12 * max(1.0, abs(energy)):
                    raise EvanescentChannelError(
                        f"system {i + 1} is evanescent in an asymptotic region "
                        f"(E = {energy}, V = {v_edge})"
                    )
            k_l = np.sqrt(2.0 * mass * (energy - v_left[i, i].real))
            k_r = np.sqrt(2.0 * mass * (energy - v_right[i, i].real))
            r_l, l_l = np.array([1.0, 1j * k_l]), np.array([1.0, -1j * k_l])
            r_r = np.array([1.0, 1j * k_r])
        u_in[rows, i] = r_l
        u_ref[rows, i] = l_l
        u_out[rows, i] = r_r
    return u_in, u_ref, u_out


# ---------------------------------------------------------------------------
# Solver core


def _junction_table(profile, convention, mass, model) -> dict[int, np.ndarray]:
    table = {}
    for d in profile.deltas:
        k = int(np.argmin(np.abs(profile.breakpoints - d.x0)))
        if model == "dirac":
            table[k] = delta_junction(d.strength, convention)
        else:
            table[k] = schrodinger_delta_junction(d.strength, mass)
    return table


def _solve(profile, energy, boundary, model, convention, mass):
    n = profile.n_systems
    dim = 2 * n
    if model == "dirac":
        mats = [dirac_generator(s.v, energy, convention) for s in profile.segments]
    else:
        if not mass > 0.0:
            raise ValueError(f"mass must be positive, got {mass}")
        mats = [schrodinger_generator(s.v, energy, mass) for s in profile.segments]
    junctions = _junction_table(profile, convention, mass, model)
    b = profile.breakpoints
    n_seg = len(profile.segments)
    transfers = [expm(mats[k] * (b[k + 1] - b[k])) for k in range(n_seg)]

    if isinstance(boundary, Scattering):
        amps = np.asarray(boundary.amplitudes, dtype=complex)
        if amps.shape != (n,):
            raise ValueError(f"need {n} incoming amplitudes, got shape {amps.shape}")
        u_in, u_ref, u_out = _scattering_modes(profile, energy, convention, mass, model)
        total = np.eye(dim, dtype=complex)
        for k in range(n_seg):
            if k in junctions:
                total = junctions[k] @ total
            total = transfers[k] @ total
        if n_seg in junctions:
            total = junctions[n_seg] @ total
        lhs = np.hstack([total @ u_ref, -u_out])
        rhs = -total @ (u_in @ amps)
        try:
            sol = np.linalg.solve(lhs, rhs)
        except np.linalg.LinAlgError as exc:
            raise ValueError("scattering system is singular at this energy") from exc
        psi_left = u_in @ amps + u_ref @ sol[:n]
    elif isinstance(boundary, InitialValue):
        psi_left = np.asarray(boundary.values, dtype=complex)
        if psi_left.shape != (dim,):
            raise ValueError(f"initial values must have shape ({dim},), got {psi_left.shape}")
    else:
        raise TypeError(f"unsupported boundary spec {type(boundary).__name__}")

    pieces = [_Piece(float(b[0]), psi_left, mats[0])]
    val = junctions[0] @ psi_left if 0 in junctions else psi_left
    for k in range(n_seg):
        pieces.append(_Piece(float(b[k]), val, mats[k]))
        val = transfers[k] @ val
        if (k + 1) in junctions:
            val = junctions[k + 1] @ val
    pieces.append(_Piece(float(b[-1]), val, mats[-1]))

    cls = SpinorSolution if model == "dirac" else WaveSolution
    return cls(profile, energy, pieces, b, convention=convention, mass=mass)


def solve_dirac(
    profile: PotentialProfile,
    energy: float,
    boundary: BoundarySpec,
    convention: Convention | str = "default",
) -> SpinorSolution:
    """Solve the stationary stacked Dirac problem at a common energy.

    Parameters
    ----------
    profile : PotentialProfile
        Piecewise-constant Hermitian potential with optional delta barriers.
    energy : float
        Stationary energy shared by the stack; the time dependence is the
        analytic phase exp(-i E t) and never enters the spatial solve.
    boundary : InitialValue or Scattering
        Scattering requires diagonal leftmost/rightmost segments and an energy
        at which every asymptotic channel propagates.
    convention : Convention or str
        Gamma-matrix pair and coupling channel; see CONVENTIONS.
    """
    if isinstance(convention, str):
        convention = get_convention(convention)
    return _solve(profile, float(energy), boundary, "dirac", convention, None)


def solve_schrodinger(
    profile: PotentialProfile,
    energy: float,
    boundary: BoundarySpec,
    mass: float = 1.0,
) -> WaveSolution:
    """Solve the stationary stacked Schroedinger problem at a common energy.

    The state vector stacks (values, derivatives); delta barriers impose the
    derivative jump 2 * mass * strength * value across their position.
    """
    return _solve(profile, float(energy), boundary, "schrodinger", None, float(mass))


def evaluate(solution: PiecewiseSolution, grid, side: str = "right") -> np.ndarray:
    """Sample a solution on a grid; at a delta the two one-sided limits differ."""
    return solution.evaluate(grid, side=side)
