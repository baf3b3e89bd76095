"""
Weakly nonlinear periodic problems

    phi' = -i H0 phi + eps Z(phi, t, eps) + f,   phi(0) - phi(w) = alpha,

treated by Lyapunov-Schmidt reduction around the generating family
``phi0(t, c) = U(t) U0 c + G[f, alpha](t)``.

* :func:`generating_F` evaluates the bifurcation (generating amplitude) map
  ``F(c) = U0 int_0^w U^{-1}(tau) Z(phi0(tau, c), tau, 0) dtau``.
* :func:`B0_matrix` is its Jacobian on the resonant coordinates.
* :func:`ls_iterate` runs the correction iteration

      vbar_{k+1} = eps G[Z(phi0 + v_k, ., eps)]
      c_k        = -B0^+ U0 int U^{-1} (A1 vbar_k + R(v_k)) dtau
      v_{k+1}    = U(t) U0 c_k + vbar_{k+1}

  with ``R(v) = Z(phi0 + v, t, eps) - Z(phi0, t, 0) - A1 v``.

``Z`` is vectorized: it receives states of shape ``(M+1, N, 2)`` and times of
shape ``(M+1,)`` and returns an array shaped like the states.  The optional
``jacobian`` returns ``dZ/dphi`` at ``eps = 0`` as ``(M+1, 2N, 2N)`` in the
flattened ``(x1, y1, x2, y2, ...)`` ordering.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NonConvergenceError, NotSolvableError, ShapeError, VerificationError
from .linear import (
    DEFAULT_GRID_SIZE,
    DEFAULT_SOLVABILITY_TOL,
    BVPProblem,
    Trajectory,
    green_operator,
    simpson,
    solvability_condition,
    green_pseudoinverse,
    _particular,
)
from .spectral import (
    DEFAULT_RESONANCE_TOL,
    BlockDiagonalMap,
    cesaro_projector_closed,
    evolve_grid,
    monodromy,
    phase_vector,
    resonance_flags,
)

logger = logging.getLogger(__name__)

DEFAULT_RANK_TOL = 1e-10
DEFAULT_EPS0 = 0.1
DEFAULT_FD_STEP = 1e-5


@dataclass(frozen=True)
class NonlinearRHS:
    """Nonlinearity ``Z(phi, t, eps)`` with optional analytic Jacobian."""

    Z: Callable
    jacobian: Callable | None = None
    name: str = "custom"
    eps_dependent: bool = False

    def __call__(self, states, t, eps=0.0):
        return np.asarray(self.Z(states, t, eps), dtype=float)


@dataclass
class SufficientConditionReport:
    rank: int
    singular_values: np.ndarray
    condition_number: float
    pseudoinvertible: bool
    condition2_norm_U: float
    condition2_norm_U0: float
    condition2_holds_U: bool
    condition2_holds_U0: bool
    hypotheses_satisfied: bool
    messages: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "singular_values": self.singular_values.tolist(),
            "condition_number": self.condition_number,
            "pseudoinvertible": self.pseudoinvertible,
            "condition2_norm_U": self.condition2_norm_U,
            "condition2_norm_U0": self.condition2_norm_U0,
            "condition2_holds_U": self.condition2_holds_U,
            "condition2_holds_U0": self.condition2_holds_U0,
            "hypotheses_satisfied": self.hypotheses_satisfied,
            "messages": list(self.messages),
        }


@dataclass
class NewtonResult:
    x: np.ndarray
    residual: float
    jacobian: np.ndarray
    rank: int
    iterations: int
    residual_history: list


@dataclass
class GeneratingRoot:
    """Root ``c0`` of the generating amplitude map with its Jacobian data."""

    c0: np.ndarray
    F_residual: float
    B0: np.ndarray
    B0_rank: int
    condition2_norm: float
    resonant_indices: np.ndarray
    conditions: SufficientConditionReport | None = None


@dataclass
class IterationState:
    k: int
    v: Trajectory
    c: np.ndarray
    phi: Trajectory
    boundary_residual: float
    increment_norm: float
    obstruction_norm: float = 0.0

    def summary(self) -> dict:
        return {
            "k": self.k,
            "c": self.c.tolist(),
            "boundary_residual": self.boundary_residual,
            "increment_norm": self.increment_norm,
            "obstruction_norm": self.obstruction_norm,
            "v_max_norm": self.v.max_norm(),
        }


# ---------------------------------------------------------------------------
# Generating family and amplitude map
# ---------------------------------------------------------------------------

def resonant_indices(problem: BVPProblem, resonance_tol: float = DEFAULT_RESONANCE_TOL) -> np.ndarray:
    """Flattened coordinates ``(2k, 2k+1)`` of all resonant modes."""
    modes = np.flatnonzero(resonance_flags(problem.op, problem.w, resonance_tol))
    return np.stack([2 * modes, 2 * modes + 1], axis=1).ravel()


class GeneratingFamily:
    """The affine family ``phi0(., c) = U(t) U0 c + G[f, alpha]`` on a fixed grid."""

    def __init__(self, problem: BVPProblem, grid_size: int = DEFAULT_GRID_SIZE,
                 tol: float = DEFAULT_SOLVABILITY_TOL,
                 resonance_tol: float = DEFAULT_RESONANCE_TOL):
        report = solvability_condition(problem, grid_size, tol, resonance_tol)
        if not report.solvable:
            raise NotSolvableError("generating problem is not solvable; F is undefined", report=report)
        self.problem = problem
        self.grid_size = grid_size
        self.resonance_tol = resonance_tol
        self.projector = cesaro_projector_closed(problem.op, problem.w, resonance_tol)
        base = green_pseudoinverse(problem.op, problem.w, report.g, resonance_tol)
        self.particular = _particular(problem, base, grid_size)
        self.grid = self.particular.grid
        self.h = self.grid[1] - self.grid[0]
        self.indices = resonant_indices(problem, resonance_tol)

    def phi0(self, c_bar) -> Trajectory:
        c = self.projector.apply(phase_vector(c_bar, self.problem.n_modes))
        hom = evolve_grid(self.problem.op, self.grid, np.broadcast_to(c, self.particular.states.shape))
        return Trajectory(self.grid, self.particular.states + hom)

    def project_integral(self, samples) -> np.ndarray:
        """``U0 int_0^w U^{-1}(tau) h(tau) dtau`` for samples ``h`` on the grid."""
        pulled = evolve_grid(self.problem.op, self.grid, samples, sign=-1.0)
        return self.projector.apply(simpson(pulled, self.h))

    def F(self, rhs: NonlinearRHS, c_bar) -> np.ndarray:
        phi0 = self.phi0(c_bar)
        return self.project_integral(rhs(phi0.states, self.grid, 0.0))

    def embed(self, coords) -> np.ndarray:
        """Phase vector with resonant coordinates set from ``coords``, zero elsewhere."""
        flat = np.zeros(2 * self.problem.n_modes)
        flat[self.indices] = coords
        return flat.reshape(-1, 2)


def generating_F(problem: BVPProblem, rhs: NonlinearRHS, c_bar,
                 grid_size: int = DEFAULT_GRID_SIZE,
                 resonance_tol: float = DEFAULT_RESONANCE_TOL) -> np.ndarray:
    """Generating amplitude map ``F(c_bar)``; lies in the range of ``U0(w)``."""
    return GeneratingFamily(problem, grid_size, resonance_tol=resonance_tol).F(rhs, c_bar)


# ---------------------------------------------------------------------------
# Jacobians
# ---------------------------------------------------------------------------

def fd_state_jacobian(rhs: NonlinearRHS, states, t, h: float = 1e-6) -> np.ndarray:
    """Central-difference ``dZ/dphi`` at ``eps = 0``; shape ``(M+1, 2N, 2N)``."""
    states = np.asarray(states, dtype=float)
    m1, n, _ = states.shape
    jac = np.empty((m1, 2 * n, 2 * n))
    for j in range(2 * n):
        e = np.zeros((n, 2))
        e.flat[j] = h
        diff = rhs(states + e, t, 0.0) - rhs(states - e, t, 0.0)
        jac[:, :, j] = diff.reshape(m1, 2 * n) / (2.0 * h)
    return jac


def state_jacobian(rhs: NonlinearRHS, states, t) -> np.ndarray:
    if rhs.jacobian is not None:
        return np.asarray(rhs.jacobian(states, t), dtype=float)
    return fd_state_jacobian(rhs, states, t)


def _dense_rotations(problem, grid) -> np.ndarray:
    th = problem.op.angles(grid)
    c, s = np.cos(th), np.sin(th)
    n = problem.n_modes
    out = np.zeros((grid.size, 2 * n, 2 * n))
    k = np.arange(n)
    out[:, 2 * k, 2 * k] = c
    out[:, 2 * k, 2 * k + 1] = s
    out[:, 2 * k + 1, 2 * k] = -s
    out[:, 2 * k + 1, 2 * k + 1] = c
    return out


def B0_analytic(family: GeneratingFamily, rhs: NonlinearRHS, c0) -> np.ndarray:
    """``U0 int U^{-1}(tau) A1(tau) U(tau) dtau U0`` on the resonant coordinates."""
    phi0 = family.phi0(c0)
    a1 = state_jacobian(rhs, phi0.states, family.grid)
    rot = _dense_rotations(family.problem, family.grid)
    integrand = np.swapaxes(rot, 1, 2) @ a1 @ rot
    full = simpson(integrand, family.h)
    idx = family.indices
    return full[np.ix_(idx, idx)]


def B0_fd(family: GeneratingFamily, rhs: NonlinearRHS, c0, h: float = DEFAULT_FD_STEP) -> np.ndarray:
    idx = family.indices
    c0 = phase_vector(c0, family.problem.n_modes)
    out = np.empty((idx.size, idx.size))
    for col, j in enumerate(idx):
        e = np.zeros_like(c0)
        e.flat[j] = h
        diff = family.F(rhs, c0 + e) - family.F(rhs, c0 - e)
        out[:, col] = diff.ravel()[idx] / (2.0 * h)
    return out


def B0_matrix(problem: BVPProblem, rhs: NonlinearRHS, c0, h: float = DEFAULT_FD_STEP,
              grid_size: int = DEFAULT_GRID_SIZE,
              resonance_tol: float = DEFAULT_RESONANCE_TOL,
              check_tol: float = 1e-6, family: GeneratingFamily | None = None) -> np.ndarray:
    """Jacobian ``B0 = F'(c0)`` restricted to the resonant coordinates.

    Computed by central differences; when ``rhs`` carries an analytic Jacobian
    the integral form is evaluated as well and the two must agree to
    ``check_tol`` (relative to ``max(1, |B0|)``).
    """
    family = family or GeneratingFamily(problem, grid_size, resonance_tol=resonance_tol)
    fd = B0_fd(family, rhs, c0, h)
    if rhs.jacobian is not None and fd.size:
        exact = B0_analytic(family, rhs, c0)
        gap = float(np.max(np.abs(exact - fd)))
        scale = max(1.0, float(np.max(np.abs(exact))))
        if gap > check_tol * scale:
            raise VerificationError(f"finite-difference and analytic B0 differ by {gap:.3e}")
    return fd


def check_sufficient_conditions(B0, U0: BlockDiagonalMap, Uw: BlockDiagonalMap | None = None,
                                rank_tol: float = DEFAULT_RANK_TOL,
                                cond_tol: float = 1e-8) -> SufficientConditionReport:
    """Diagnose the pseudoinvertibility and range conditions on ``B0``.

    Pseudoinvertibility: in finite dimensions ``B0`` always has a
    Moore-Penrose pseudoinverse; the effective rank and condition number are
    reported.  Range condition: ``||P_{N(B0^T)} U(w)||`` on the range of ``U0``
    must vanish; the variant with ``U0`` in place of ``U(w)`` is computed
    alongside.
    """
    B0 = np.atleast_2d(np.asarray(B0, dtype=float))
    flat_p = U0.to_dense()
    idx = np.flatnonzero(np.diag(flat_p) > 0.5)
    if B0.shape != (idx.size, idx.size):
        if B0.size == 0 and idx.size == 0:
            B0 = np.zeros((0, 0))
        else:
            raise ShapeError(f"B0 has shape {B0.shape}, resonant subspace has dimension {idx.size}")
    uw = (Uw if Uw is not None else U0).to_dense()[np.ix_(idx, idx)]
    p0 = flat_p[np.ix_(idx, idx)]

    messages = []
    if idx.size == 0:
        return SufficientConditionReport(0, np.zeros(0), 1.0, True, 0.0, 0.0, True, True, True,
                                         ["no resonant modes: B0 acts on the zero space"])

    left, sv, _ = np.linalg.svd(B0)
    smax = sv[0] if sv.size else 0.0
    rank = int(np.sum(sv > rank_tol * smax)) if smax > 0 else 0
    cond = float(smax / sv[rank - 1]) if rank else float("inf")
    kernel = left[:, rank:]
    p_kernel = kernel @ kernel.T
    norm_u = float(np.linalg.norm(p_kernel @ uw, 2))
    norm_u0 = float(np.linalg.norm(p_kernel @ p0, 2))
    holds_u = norm_u <= cond_tol
    holds_u0 = norm_u0 <= cond_tol
    if holds_u != holds_u0:
        messages.append("range condition differs between the U(w) and U0(w) variants")
    if not holds_u:
        messages.append("sufficient-condition hypotheses not satisfied; iteration attempted anyway")
    return SufficientConditionReport(
        rank=rank, singular_values=sv, condition_number=cond, pseudoinvertible=True,
        condition2_norm_U=norm_u, condition2_norm_U0=norm_u0,
        condition2_holds_U=holds_u, condition2_holds_U0=holds_u0,
        hypotheses_satisfied=holds_u, messages=messages,
    )


# ---------------------------------------------------------------------------
# Root finding
# ---------------------------------------------------------------------------

def fd_jacobian(F: Callable, x, h: float = 1e-6) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(F(x), dtype=float)
    jac = np.empty((f0.size, x.size))
    for j in range(x.size):
        step = h * max(1.0, abs(x[j]))
        e = np.zeros_like(x)
        e[j] = step
        jac[:, j] = (np.asarray(F(x + e)) - np.asarray(F(x - e))).ravel() / (2.0 * step)
    return jac


def newton_roots(F: Callable, c_init, tol: float = 1e-12, max_iter: int = 50,
                 rank_tol: float = DEFAULT_RANK_TOL, h: float = 1e-6) -> NewtonResult:
    """Pseudoinverse Newton iteration ``c <- c - J^+ F(c)``.

    ``J`` is a central-difference Jacobian; singular values below
    ``rank_tol * sigma_max`` are discarded so rank-deficient Jacobians
    (continuous families of roots) give minimum-norm steps.
    """
    x = np.array(c_init, dtype=float).ravel()
    fx = np.asarray(F(x), dtype=float).ravel()
    history = [float(np.linalg.norm(fx))]
    for it in range(max_iter + 1):
        jac = fd_jacobian(F, x, h)
        if history[-1] <= tol:
            sv = np.linalg.svd(jac, compute_uv=False)
            rank = int(np.sum(sv > rank_tol * sv[0])) if sv.size and sv[0] > 0 else 0
            return NewtonResult(x, history[-1], jac, rank, it, history)
        if it == max_iter:
            break
        x = x - np.linalg.pinv(jac, rcond=rank_tol) @ fx
        fx = np.asarray(F(x), dtype=float).ravel()
        history.append(float(np.linalg.norm(fx)))
    raise NonConvergenceError(
        f"Newton did not reach |F| <= {tol:.1e} in {max_iter} steps (last {history[-1]:.3e})",
        history=history, last_residual=history[-1])


def find_generating_root(problem: BVPProblem, rhs: NonlinearRHS, c_init,
                         grid_size: int = DEFAULT_GRID_SIZE, tol: float = 1e-10,
                         max_iter: int = 50, rank_tol: float = DEFAULT_RANK_TOL,
                         resonance_tol: float = DEFAULT_RESONANCE_TOL,
                         newton: bool = True) -> GeneratingRoot:
    """Solve ``F(c) = 0`` on the resonant coordinates and attach ``B0`` diagnostics.

    With ``newton=False`` the start point is taken as is (used to probe what
    happens away from a root).
    """
    family = GeneratingFamily(problem, grid_size, resonance_tol=resonance_tol)
    idx = family.indices
    start = phase_vector(c_init, problem.n_modes).ravel()[idx]

    def reduced(coords):
        return family.F(rhs, family.embed(coords)).ravel()[idx]

    if newton and idx.size:
        coords = newton_roots(reduced, start, tol=tol, max_iter=max_iter, rank_tol=rank_tol).x
    else:
        coords = start
    c0 = family.embed(coords)
    residual = float(np.linalg.norm(family.F(rhs, c0)))
    B0 = B0_matrix(problem, rhs, c0, family=family)
    conditions = check_sufficient_conditions(
        B0, family.projector, monodromy(problem.op, problem.w), rank_tol)
    return GeneratingRoot(
        c0=c0, F_residual=residual, B0=B0, B0_rank=conditions.rank,
        condition2_norm=conditions.condition2_norm_U, resonant_indices=idx,
        conditions=conditions,
    )


# ---------------------------------------------------------------------------
# Iteration
# ---------------------------------------------------------------------------

def remainder_R(rhs: NonlinearRHS, phi0: Trajectory, A1, v, eps: float) -> np.ndarray:
    """``Z(phi0 + v, t, eps) - Z(phi0, t, 0) - A1(t) v`` at every grid point."""
    v = np.asarray(v.states if isinstance(v, Trajectory) else v, dtype=float)
    m1 = v.shape[0]
    lin = np.einsum("mij,mj->mi", A1, v.reshape(m1, -1)).reshape(v.shape)
    return rhs(phi0.states + v, phi0.grid, eps) - rhs(phi0.states, phi0.grid, 0.0) - lin


def ls_iterate(problem: BVPProblem, rhs: NonlinearRHS, root: GeneratingRoot, eps: float,
               tol: float = 1e-10, max_iter: int = 200, grid_size: int = DEFAULT_GRID_SIZE,
               boundary_tol: float = 1e-8, eps0: float = DEFAULT_EPS0,
               rank_tol: float = DEFAULT_RANK_TOL,
               resonance_tol: float = DEFAULT_RESONANCE_TOL,
               q: float = np.inf, literal_boundary: bool = False):
    """Lyapunov-Schmidt correction iteration around ``phi0(., root.c0)``.

    Converged means the increment ``max|v_{k+1} - v_k| <= tol`` and the
    boundary residual ``|phi(0) - phi(w) - alpha| <= boundary_tol``.  The
    correction Green solve uses homogeneous boundary data (``phi0`` already
    carries ``alpha``); ``literal_boundary=True`` passes ``alpha`` instead.

    Returns ``(phi, history)``.  Raises :class:`NonConvergenceError` (with the
    history attached) on divergence, on a stationary point that violates the
    boundary condition, or when ``max_iter`` is exhausted.
    """
    if abs(eps) > eps0:
        raise ValueError(f"|eps| = {abs(eps)} exceeds eps0 = {eps0}")
    family = GeneratingFamily(problem, grid_size, resonance_tol=resonance_tol)
    op, w, grid = problem.op, problem.w, family.grid
    phi0 = family.phi0(root.c0)
    n = problem.n_modes

    def boundary(traj):
        return float(np.linalg.norm(traj.states[0] - traj.states[-1] - problem.alpha))

    zero = Trajectory(grid, np.zeros_like(phi0.states))
    if eps == 0:
        state = IterationState(0, zero, np.zeros((n, 2)), phi0, boundary(phi0), 0.0)
        return phi0, [state]

    A1 = state_jacobian(rhs, phi0.states, grid)
    idx = family.indices
    B0_pinv = np.linalg.pinv(root.B0, rcond=rank_tol) if idx.size else np.zeros((0, 0))
    green_alpha = problem.alpha if literal_boundary else np.zeros((n, 2))

    v = np.zeros_like(phi0.states)
    vbar = np.zeros_like(v)
    history = []
    growth = 0
    prev_inc = np.inf
    for k in range(max_iter):
        lin = np.einsum("mij,mj->mi", A1, vbar.reshape(grid.size, -1)).reshape(v.shape)
        rem = remainder_R(rhs, phi0, A1, v, eps)
        proj = family.project_integral(lin + rem).ravel()[idx]
        c = family.embed(-B0_pinv @ proj) if idx.size else np.zeros((n, 2))

        z = rhs(phi0.states + v, grid, eps)
        vbar_next, g = green_operator(op, w, grid, eps * z, green_alpha, resonance_tol)
        obstruction = float(np.linalg.norm(family.projector.apply(g)))
        v_next = evolve_grid(op, grid, np.broadcast_to(family.projector.apply(c), v.shape)) + vbar_next

        inc = float(np.max(np.abs(v_next - v)))
        phi = Trajectory(grid, phi0.states + v_next)
        state = IterationState(k, Trajectory(grid, v_next), c, phi, boundary(phi), inc, obstruction)
        history.append(state)
        logger.debug("ls step %d: increment %.3e boundary %.3e", k, inc, state.boundary_residual)

        if np.max(np.abs(v_next)) > q:
            warnings.warn(f"correction left the neighbourhood |v| <= q = {q} at step {k}")

        if not np.isfinite(inc):
            raise NonConvergenceError("iteration produced non-finite values", history, inc)
        if inc <= tol:
            if state.boundary_residual <= boundary_tol:
                return phi, history
            raise NonConvergenceError(
                f"iteration is stationary but the boundary residual "
                f"{state.boundary_residual:.3e} exceeds {boundary_tol:.1e}",
                history, state.boundary_residual)
        growth = growth + 1 if inc > prev_inc else 0
        if growth >= 5:
            raise NonConvergenceError(
                f"increment grew for 5 consecutive steps (last {inc:.3e})", history, inc)
        prev_inc = inc
        v, vbar = v_next, vbar_next

    raise NonConvergenceError(
        f"no convergence in {max_iter} steps (increment {history[-1].increment_norm:.3e}, "
        f"boundary residual {history[-1].boundary_residual:.3e})",
        history, history[-1].increment_norm)


# ---------------------------------------------------------------------------
# Polynomial right-hand sides
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PolynomialTerm:
    """``coeff * cos(omega t + phase) * prod_j x_j^px_j y_j^py_j`` in one slot.

    ``powers`` has one ``(px, py)`` pair per mode; ``mode`` is 1-based.
    """

    mode: int
    slot: int
    coeff: float
    powers: tuple
    omega: float = 0.0
    phase: float = 0.0


def polynomial_rhs(terms, n_modes: int, name: str = "polynomial") -> NonlinearRHS:
    """Build an ``eps``-independent :class:`NonlinearRHS` from monomial terms."""
    terms = list(terms)
    pw = []
    for term in terms:
        p = np.asarray(term.powers, dtype=int).reshape(n_modes, 2)
        if np.any(p < 0):
            raise ValueError("monomial powers must be nonnegative")
        if not 1 <= term.mode <= n_modes or term.slot not in (0, 1):
            raise ShapeError(f"polynomial term targets invalid slot ({term.mode}, {term.slot})")
        pw.append(p.ravel())

    def time_factor(term, t):
        return term.coeff * np.cos(term.omega * np.asarray(t) + term.phase)

    def Z(states, t, eps):
        states = np.asarray(states, dtype=float)
        flat = states.reshape(states.shape[:-2] + (-1,))
        out = np.zeros_like(flat)
        for term, p in zip(terms, pw):
            mono = np.prod(flat**p, axis=-1)
            out[..., 2 * (term.mode - 1) + term.slot] += time_factor(term, t) * mono
        return out.reshape(states.shape)

    def jacobian(states, t):
        states = np.asarray(states, dtype=float)
        flat = states.reshape(states.shape[:-2] + (-1,))
        dim = flat.shape[-1]
        jac = np.zeros(flat.shape + (dim,))
        for term, p in zip(terms, pw):
            row = 2 * (term.mode - 1) + term.slot
            scale = time_factor(term, t)
            for j in np.flatnonzero(p):
                q = p.copy()
                q[j] -= 1
                jac[..., row, j] += scale * p[j] * np.prod(flat**q, axis=-1)
        return jac

    return NonlinearRHS(Z=Z, jacobian=jacobian, name=name)
