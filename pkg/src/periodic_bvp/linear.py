"""
Linear periodic boundary-value problem

    phi'(t) = -i H0 phi(t) + f(t),   phi(0) - phi(w) = alpha,

in the truncated space.  Substituting the variation-of-constants formula
reduces the problem to ``(I - U(w)) c = g`` with
``g = alpha + U(w) int_0^w U^{-1}(tau) f(tau) dtau``.  The system is solvable
iff the Cesaro projector kills ``g``; otherwise the least-squares
(pseudo)solutions are returned with residual equal to the projected
obstruction.

All quadratures are composite Simpson on a uniform grid of ``M`` panels
(``M`` even).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConditioningError,
    ConfigurationError,
    DomainError,
    NotSolvableError,
    ShapeError,
    VerificationError,
)
from .spectral import (
    DEFAULT_RESONANCE_TOL,
    BlockDiagonalMap,
    SpectralOperator,
    cesaro_projector_closed,
    euclidean_norm,
    evolve_grid,
    monodromy,
    phase_vector,
    resonance_flags,
)

DEFAULT_GRID_SIZE = 1024
DEFAULT_SOLVABILITY_TOL = 1e-8
DEFAULT_MU = 1.5
DEFAULT_SERIES_TERMS = 200
MIN_BLOCK_SINGULAR_VALUE = 1e-13

CLASSIFICATION_NOTE = (
    "finite truncation: the range of I - U(w) is closed, so strong generalized "
    "solutions coincide with classical ones; every problem yields either a "
    "solution family (solvable) or a minimal-residual pseudosolution family "
    "(pseudo_only)"
)


# ---------------------------------------------------------------------------
# Forcing and problem description
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrigTerm:
    """``a cos(omega t) + b sin(omega t)`` added to one slot of one mode.

    ``mode`` is 1-based, ``slot`` is 0 for the x-component and 1 for y.
    """

    mode: int
    slot: int
    a: float = 0.0
    b: float = 0.0
    omega: float = 0.0

    def __post_init__(self):
        if self.slot not in (0, 1):
            raise ValueError("slot must be 0 (x) or 1 (y)")
        if not all(np.isfinite([self.a, self.b, self.omega])):
            raise ValueError("trigonometric term parameters must be finite")


@dataclass(frozen=True)
class ForcingFunction:
    """Forcing ``f(t)`` given by trigonometric terms or by uniform-grid samples.

    Samples have shape ``(S+1, N, 2)`` and are taken on ``linspace(0, w, S+1)``.
    When both are given, they are added.
    """

    n_modes: int
    terms: tuple = ()
    samples: np.ndarray | None = None
    allow_interpolation: bool = False

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        for term in self.terms:
            if not 1 <= term.mode <= self.n_modes:
                raise ShapeError(f"forcing term refers to mode {term.mode} of {self.n_modes}")
        if self.samples is not None:
            s = np.array(self.samples, dtype=float)
            if s.ndim != 3 or s.shape[1:] != (self.n_modes, 2):
                raise ShapeError(f"forcing samples must have shape (S+1, {self.n_modes}, 2)")
            if s.shape[0] < 3 or (s.shape[0] - 1) % 2:
                raise ConfigurationError("forcing sample grid needs an even number (>= 2) of panels")
            if not np.all(np.isfinite(s)):
                raise ValueError("forcing samples must be finite")
            s.setflags(write=False)
            object.__setattr__(self, "samples", s)

    @classmethod
    def zero(cls, n_modes: int) -> "ForcingFunction":
        return cls(n_modes)

    @property
    def is_zero(self) -> bool:
        return not self.terms and self.samples is None

    @property
    def is_analytic(self) -> bool:
        return self.samples is None

    def evaluate(self, times, w: float) -> np.ndarray:
        """Forcing values at ``times``; shape ``(len(times), N, 2)``."""
        times = np.asarray(times, dtype=float)
        out = np.zeros(times.shape + (self.n_modes, 2))
        for term in self.terms:
            out[..., term.mode - 1, term.slot] += (
                term.a * np.cos(term.omega * times) + term.b * np.sin(term.omega * times)
            )
        if self.samples is not None:
            n_s = self.samples.shape[0]
            grid = np.linspace(0.0, w, n_s)
            if times.shape == grid.shape and np.allclose(times, grid, rtol=0, atol=1e-12 * w):
                out += self.samples
            elif self.allow_interpolation:
                flat = self.samples.reshape(n_s, -1)
                interp = np.stack([np.interp(times, grid, flat[:, j]) for j in range(flat.shape[1])], axis=-1)
                out += interp.reshape(times.shape + (self.n_modes, 2))
            else:
                raise ConfigurationError(
                    f"forcing sampled on {n_s - 1} panels but quadrature grid has "
                    f"{times.size - 1}; enable allow_interpolation or match the grids"
                )
        return out


@dataclass(frozen=True)
class BVPProblem:
    op: SpectralOperator
    w: float
    alpha: np.ndarray
    forcing: ForcingFunction

    def __post_init__(self):
        if not (np.isfinite(self.w) and self.w > 0):
            raise ValueError("period w must be positive and finite")
        alpha = phase_vector(self.alpha, self.op.n_modes)
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        if self.forcing.n_modes != self.op.n_modes:
            raise ShapeError("forcing and operator disagree on the number of modes")

    @classmethod
    def homogeneous(cls, op: SpectralOperator, w: float, alpha=None) -> "BVPProblem":
        alpha = np.zeros((op.n_modes, 2)) if alpha is None else alpha
        return cls(op, w, alpha, ForcingFunction.zero(op.n_modes))

    @property
    def n_modes(self) -> int:
        return self.op.n_modes


@dataclass
class SolvabilityReport:
    classification: str
    obstruction: np.ndarray
    obstruction_norm: float
    resonance_flags: np.ndarray
    g: np.ndarray
    tol: float
    quadrature_error: float | None = None
    note: str = CLASSIFICATION_NOTE

    @property
    def solvable(self) -> bool:
        return self.classification == "solvable"

    def to_dict(self) -> dict:
        return {
            "classification": self.classification,
            "obstruction": self.obstruction.tolist(),
            "obstruction_norm": self.obstruction_norm,
            "resonance_flags": [bool(v) for v in self.resonance_flags],
            "g": self.g.tolist(),
            "tol": self.tol,
            "quadrature_error": self.quadrature_error,
            "note": self.note,
        }


@dataclass
class Trajectory:
    """States on a uniform grid ``0 = t_0 < ... < t_M = w``; shape ``(M+1, N, 2)``."""

    grid: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim != 3 or self.states.shape[0] != self.grid.size or self.states.shape[2] != 2:
            raise ShapeError("states must have shape (len(grid), N, 2)")

    @property
    def n_modes(self) -> int:
        return self.states.shape[1]

    @property
    def step(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def __sub__(self, other: "Trajectory") -> "Trajectory":
        return Trajectory(self.grid, self.states - other.states)

    def __add__(self, other: "Trajectory") -> "Trajectory":
        return Trajectory(self.grid, self.states + other.states)

    def max_norm(self) -> float:
        return float(np.max(np.abs(self.states))) if self.states.size else 0.0


@dataclass
class TrajectoryCheck:
    ode_residual: float
    boundary_residual: float
    details: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

def uniform_grid(w: float, grid_size: int) -> np.ndarray:
    if grid_size < 2 or grid_size % 2:
        raise ConfigurationError(f"grid size must be even and >= 2 (Simpson), got {grid_size}")
    return np.linspace(0.0, w, grid_size + 1)


def simpson(values: np.ndarray, h: float) -> np.ndarray:
    """Composite Simpson integral along axis 0 (even number of panels)."""
    f = np.asarray(values, dtype=float)
    m = f.shape[0] - 1
    if m < 2 or m % 2:
        raise ConfigurationError("Simpson's rule needs an even number of panels")
    return h / 3.0 * (f[0] + f[-1] + 4.0 * f[1:-1:2].sum(axis=0) + 2.0 * f[2:-1:2].sum(axis=0))


def cumulative_simpson(values: np.ndarray, h: float) -> np.ndarray:
    """Running integral ``int_0^{t_j}`` at every grid node.

    Even nodes use composite Simpson, so the last entry equals :func:`simpson`.
    Odd nodes add the integral of the quadratic through the next three nodes
    over the first half-panel, ``h/12 (5 f0 + 8 f1 - f2)``.
    """
    f = np.asarray(values, dtype=float)
    m = f.shape[0] - 1
    if m < 2 or m % 2:
        raise ConfigurationError("Simpson's rule needs an even number of panels")
    out = np.zeros_like(f)
    panels = h / 3.0 * (f[0:-2:2] + 4.0 * f[1:-1:2] + f[2::2])
    out[2::2] = np.cumsum(panels, axis=0)
    out[1::2] = out[0:-1:2] + h / 12.0 * (5.0 * f[0:-1:2] + 8.0 * f[1::2] - f[2::2])
    return out


def _pulled_back(op, times, samples):
    return evolve_grid(op, times, samples, sign=-1.0)


def integrate_forcing(problem: BVPProblem, grid_size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    """Simpson approximation of ``int_0^w U^{-1}(tau) f(tau) dtau``."""
    times = uniform_grid(problem.w, grid_size)
    if problem.forcing.is_zero:
        return np.zeros((problem.n_modes, 2))
    f = problem.forcing.evaluate(times, problem.w)
    return simpson(_pulled_back(problem.op, times, f), times[1] - times[0])


def quadrature_error_estimate(problem: BVPProblem, grid_size: int = DEFAULT_GRID_SIZE) -> float | None:
    """Richardson estimate ``|I_{2M} - I_M| / 15``; None for sampled forcing."""
    if not problem.forcing.is_analytic:
        return None
    coarse = integrate_forcing(problem, grid_size)
    fine = integrate_forcing(problem, 2 * grid_size)
    return euclidean_norm(fine - coarse) / 15.0


def assemble_g(problem: BVPProblem, grid_size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    """Right-hand side ``g = alpha + U(w) int_0^w U^{-1} f`` of ``(I - U(w)) c = g``."""
    integral = integrate_forcing(problem, grid_size)
    return problem.alpha + monodromy(problem.op, problem.w).apply(integral)


def solvability_condition(problem: BVPProblem, grid_size: int = DEFAULT_GRID_SIZE,
                          tol: float = DEFAULT_SOLVABILITY_TOL,
                          resonance_tol: float = DEFAULT_RESONANCE_TOL) -> SolvabilityReport:
    """Project ``alpha + int U^{-1} f`` onto the resonant subspace and classify."""
    integral = integrate_forcing(problem, grid_size)
    proj = cesaro_projector_closed(problem.op, problem.w, resonance_tol)
    obstruction = proj.apply(problem.alpha + integral)
    g = problem.alpha + monodromy(problem.op, problem.w).apply(integral)

    # U0(w) U(w) = U0(w): projecting g or alpha + int U^{-1} f must agree.
    gap = euclidean_norm(proj.apply(g) - obstruction)
    allowed = (resonance_tol + 1e-12) * (euclidean_norm(integral) + 1.0) * 10.0
    if gap > allowed:
        raise VerificationError(f"projected g and projected data differ by {gap:.3e}")

    norm = euclidean_norm(obstruction)
    return SolvabilityReport(
        classification="solvable" if norm <= tol else "pseudo_only",
        obstruction=obstruction,
        obstruction_norm=norm,
        resonance_flags=resonance_flags(problem.op, problem.w, resonance_tol),
        g=g,
        tol=tol,
        quadrature_error=quadrature_error_estimate(problem, grid_size),
    )


# ---------------------------------------------------------------------------
# Generalized Green operator
# ---------------------------------------------------------------------------

def green_map(op: SpectralOperator, w: float,
              resonance_tol: float = DEFAULT_RESONANCE_TOL,
              min_singular: float = MIN_BLOCK_SINGULAR_VALUE) -> BlockDiagonalMap:
    """Blocks of ``(I - (U(w) - U0(w)))^{-1} - U0(w)``."""
    u = monodromy(op, w).blocks
    p = cesaro_projector_closed(op, w, resonance_tol).blocks
    a = np.eye(2) - (u - p)
    sv = np.linalg.svd(a, compute_uv=False)
    bad = np.flatnonzero(sv[:, -1] < min_singular)
    if bad.size:
        k = int(bad[0]) + 1
        raise ConditioningError(
            f"mode {k}: I - (U(w) - U0(w)) has singular value {sv[bad[0], -1]:.3e}; "
            "increase resonance_tol", mode=k)
    return BlockDiagonalMap(np.linalg.inv(a) - p)


def green_pseudoinverse(op: SpectralOperator, w: float, g,
                        resonance_tol: float = DEFAULT_RESONANCE_TOL) -> np.ndarray:
    """``G[g] = ((I - (U(w) - U0(w)))^{-1} - U0(w)) g``; zero on resonant modes."""
    g = phase_vector(g, op.n_modes)
    return green_map(op, w, resonance_tol).apply(g)


def _resolvent_norms(a_blocks: np.ndarray, mu: float) -> np.ndarray:
    res = np.linalg.inv(mu * np.eye(2) - a_blocks)
    return np.linalg.svd(res, compute_uv=False)[:, 0]


def series_ratio(op: SpectralOperator, w: float, mu: float = DEFAULT_MU,
                 resonance_tol: float = DEFAULT_RESONANCE_TOL) -> np.ndarray:
    """Per-mode outer-series ratio ``|mu - 1| * ||R_mu(U(w) - U0(w))||``."""
    a = monodromy(op, w).blocks - cesaro_projector_closed(op, w, resonance_tol).blocks
    return abs(mu - 1.0) * _resolvent_norms(a, mu)


def series_tail_bound(op: SpectralOperator, w: float, mu: float = DEFAULT_MU,
                      outer_terms: int = DEFAULT_SERIES_TERMS,
                      inner_terms: int = DEFAULT_SERIES_TERMS,
                      resonance_tol: float = DEFAULT_RESONANCE_TOL) -> float:
    """Geometric-tail estimate of the truncation error of :func:`green_series` per unit ``g``.

    Outer tail ``r q^K / (1 - q)`` with ``r = ||R_mu||``, ``q = |mu - 1| r``; the
    inner truncation ``mu^{-L-1} a^L / (1 - a/mu)`` (``a = ||U - U0|| <= 1``)
    is propagated through the ``K`` outer powers to first order.
    """
    a_blocks = monodromy(op, w).blocks - cesaro_projector_closed(op, w, resonance_tol).blocks
    r = _resolvent_norms(a_blocks, mu)
    q = abs(mu - 1.0) * r
    a = np.linalg.svd(a_blocks, compute_uv=False)[:, 0]
    inner = mu ** (-inner_terms - 1.0) * a**inner_terms / (1.0 - a / mu)
    k = np.arange(outer_terms)
    propagated = inner * np.array([np.sum((k + 1) * abs(mu - 1.0) ** k * ri ** k) for ri in r])
    outer = r * q**outer_terms / (1.0 - q)
    return float(np.max(outer + propagated))


def green_series(op: SpectralOperator, w: float, g, mu: float = DEFAULT_MU,
                 outer_terms: int = DEFAULT_SERIES_TERMS,
                 inner_terms: int = DEFAULT_SERIES_TERMS,
                 resonance_tol: float = DEFAULT_RESONANCE_TOL) -> np.ndarray:
    """Green operator by the truncated double series

        sum_{k<K} (mu - 1)^k { sum_{l<L} mu^{-l-1} (U(w) - U0(w))^l }^{k+1} - U0(w)

    applied to ``g``.  The inner sum approximates the resolvent
    ``R_mu = (mu - (U - U0))^{-1}`` and the outer sum ``(I - (U - U0))^{-1}``;
    ``mu`` must satisfy ``mu > 1`` and ``|1 - mu| ||R_mu|| < 1`` on every mode.
    """
    g = phase_vector(g, op.n_modes)
    if outer_terms < 1 or inner_terms < 1:
        raise ConfigurationError("series needs at least one inner and one outer term")
    if not mu > 1.0:
        raise DomainError(f"mu must exceed 1, got {mu}")
    ratio = series_ratio(op, w, mu, resonance_tol)
    if np.any(ratio >= 1.0):
        k = int(np.argmax(ratio)) + 1
        raise DomainError(f"mode {k}: |1 - mu| * ||R_mu|| = {ratio.max():.6g} >= 1, series diverges")

    p = cesaro_projector_closed(op, w, resonance_tol).blocks
    a = monodromy(op, w).blocks - p
    n = op.n_modes

    inner = np.zeros((n, 2, 2))
    power = np.broadcast_to(np.eye(2), (n, 2, 2)).copy()
    for l in range(inner_terms):
        inner += mu ** (-l - 1.0) * power
        power = power @ a

    outer = np.zeros((n, 2, 2))
    term = inner.copy()
    for _ in range(outer_terms):
        outer += term
        term = (mu - 1.0) * (term @ inner)

    return BlockDiagonalMap(outer - p).apply(g)


# ---------------------------------------------------------------------------
# Solutions
# ---------------------------------------------------------------------------

def green_operator(op: SpectralOperator, w: float, times, forcing_samples, alpha,
                   resonance_tol: float = DEFAULT_RESONANCE_TOL):
    """Generalized Green operator ``G[f, alpha](t)`` on a uniform grid.

    ``forcing_samples`` has shape ``(M+1, N, 2)``.  Returns ``(states, g)``
    where ``states[j] = U(t_j) (G[g] + int_0^{t_j} U^{-1} f)``.
    """
    times = np.asarray(times, dtype=float)
    h = times[1] - times[0]
    running = cumulative_simpson(_pulled_back(op, times, forcing_samples), h)
    g = np.asarray(alpha, dtype=float) + monodromy(op, w).apply(running[-1])
    base = green_pseudoinverse(op, w, g, resonance_tol)
    return evolve_grid(op, times, base[None] + running), g


def _particular(problem, c, grid_size):
    times = uniform_grid(problem.w, grid_size)
    if problem.forcing.is_zero:
        running = np.zeros((times.size, problem.n_modes, 2))
    else:
        f = problem.forcing.evaluate(times, problem.w)
        running = cumulative_simpson(_pulled_back(problem.op, times, f), times[1] - times[0])
    return Trajectory(times, evolve_grid(problem.op, times, c[None] + running))


def solve_linear(problem: BVPProblem, c_bar=None, grid_size: int = DEFAULT_GRID_SIZE,
                 tol: float = DEFAULT_SOLVABILITY_TOL,
                 resonance_tol: float = DEFAULT_RESONANCE_TOL) -> Trajectory:
    """Member of the solution family selected by the free constant ``c_bar``.

    ``phi(t) = U(t) (U0 c_bar + G[g]) + int_0^t U(t - tau) f(tau) dtau``.
    Raises :class:`NotSolvableError` when the problem is pseudo-only.
    """
    report = solvability_condition(problem, grid_size, tol, resonance_tol)
    if not report.solvable:
        raise NotSolvableError(
            f"solvability obstruction {report.obstruction_norm:.3e} exceeds {tol:.1e}; "
            "use pseudosolve for the minimal-residual family", report=report)
    c_bar = np.zeros((problem.n_modes, 2)) if c_bar is None else phase_vector(c_bar, problem.n_modes)
    proj = cesaro_projector_closed(problem.op, problem.w, resonance_tol)
    c = proj.apply(c_bar) + green_pseudoinverse(problem.op, problem.w, report.g, resonance_tol)
    return _particular(problem, c, grid_size)


def pseudosolve(problem: BVPProblem, c_bar=None, grid_size: int = DEFAULT_GRID_SIZE,
                resonance_tol: float = DEFAULT_RESONANCE_TOL):
    """Minimizers of ``||(I - U(w)) c - g||`` and their trajectories.

    Returns ``(trajectory, residual)``; the residual equals the norm of the
    projected obstruction ``||U0(w) g||``.
    """
    c_bar = np.zeros((problem.n_modes, 2)) if c_bar is None else phase_vector(c_bar, problem.n_modes)
    g = assemble_g(problem, grid_size)
    proj = cesaro_projector_closed(problem.op, problem.w, resonance_tol)
    c = green_pseudoinverse(problem.op, problem.w, g, resonance_tol) + proj.apply(c_bar)
    residual = euclidean_norm(c - monodromy(problem.op, problem.w).apply(c) - g)
    return _particular(problem, c, grid_size), residual


def generator_apply(op: SpectralOperator, states) -> np.ndarray:
    """Infinitesimal generator: ``(x, y) -> (sqrt(lambda) y, -sqrt(lambda) x)`` per mode."""
    states = np.asarray(states, dtype=float)
    freq = op.frequencies
    return np.stack([freq * states[..., 1], -freq * states[..., 0]], axis=-1)


def verify_trajectory(problem: BVPProblem, traj: Trajectory, forcing_values=None) -> TrajectoryCheck:
    """Central-difference ODE residual and boundary residual of a trajectory.

    ``forcing_values`` overrides the problem forcing on the trajectory grid
    (used for nonlinear right-hand sides).
    """
    h = traj.step
    if forcing_values is None:
        forcing_values = problem.forcing.evaluate(traj.grid, problem.w)
    deriv = (traj.states[2:] - traj.states[:-2]) / (2.0 * h)
    rhs = generator_apply(problem.op, traj.states[1:-1]) + forcing_values[1:-1]
    pointwise = np.linalg.norm((deriv - rhs).reshape(deriv.shape[0], -1), axis=1)
    boundary = euclidean_norm(traj.states[0] - traj.states[-1] - problem.alpha)
    return TrajectoryCheck(
        ode_residual=float(pointwise.max()) if pointwise.size else 0.0,
        boundary_residual=boundary,
        details={"worst_index": int(np.argmax(pointwise)) + 1 if pointwise.size else 0},
    )
