"""
Galerkin van der Pol system

    x_k' = sqrt(l_k) y_k
    y_k' = -sqrt(l_k) x_k + eps sqrt(l_k) (1 - sum_j x_j^2) y_k

with the critical spectrum ``l_k = 4 pi^2 k^2 / w^2`` (every mode resonant),
its algebraic amplitude system and the torus-radius law: roots with ``N``
nonzero pairs all have radius ``2 / sqrt(2N - 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linear import DEFAULT_GRID_SIZE, BVPProblem, Trajectory
from .lyapunov_schmidt import (
    GeneratingFamily,
    NonlinearRHS,
    newton_roots,
)
from .errors import DomainError, VerificationError
from .spectral import TWO_PI, SpectralOperator


@dataclass(frozen=True)
class VdPConfig:
    n_modes: int
    w: float = TWO_PI
    eps: float = 0.0
    support: tuple = (1,)

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError("n_modes must be positive")
        if not self.w > 0:
            raise ValueError("period w must be positive")
        support = tuple(sorted(set(int(k) for k in self.support)))
        if any(not 1 <= k <= self.n_modes for k in support):
            raise ValueError(f"support {support} not contained in 1..{self.n_modes}")
        object.__setattr__(self, "support", support)


@dataclass
class TorusReport:
    support: list
    radii: list
    shared_radius: float | None
    expected_radius: float | None
    matches_formula: bool
    amplitude_residual: float
    messages: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "support": self.support,
            "radii": self.radii,
            "shared_radius": self.shared_radius,
            "expected_radius": self.expected_radius,
            "matches_formula": self.matches_formula,
            "amplitude_residual": self.amplitude_residual,
            "messages": self.messages,
        }


def vdp_rhs(op: SpectralOperator) -> NonlinearRHS:
    freq = op.frequencies

    def Z(states, t, eps):
        states = np.asarray(states, dtype=float)
        x, y = states[..., 0], states[..., 1]
        damping = 1.0 - np.sum(x**2, axis=-1, keepdims=True)
        out = np.zeros_like(states)
        out[..., 1] = freq * damping * y
        return out

    def jacobian(states, t):
        states = np.asarray(states, dtype=float)
        x, y = states[..., 0], states[..., 1]
        n = x.shape[-1]
        jac = np.zeros(states.shape[:-2] + (2 * n, 2 * n))
        damping = 1.0 - np.sum(x**2, axis=-1)
        k = np.arange(n)
        # d/dx_j of sqrt(l_k) (1 - sum x^2) y_k
        jac[..., 2 * k + 1, 0::2] = -2.0 * (freq * y)[..., :, None] * x[..., None, :]
        jac[..., 2 * k + 1, 2 * k + 1] = freq * damping[..., None]
        return jac

    return NonlinearRHS(Z=Z, jacobian=jacobian, name="van_der_pol")


def build_vdp_problem(cfg: VdPConfig):
    """Generating problem (``alpha = 0``, ``f = 0``) and the van der Pol nonlinearity."""
    op = SpectralOperator.critical(cfg.n_modes, cfg.w)
    return BVPProblem.homogeneous(op, cfg.w), vdp_rhs(op)


def generating_solution(pairs, grid) -> Trajectory:
    """``x_k = cos(kt) c1 + sin(kt) c2``, ``y_k = -sin(kt) c1 + cos(kt) c2`` (w = 2 pi)."""
    pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
    grid = np.asarray(grid, dtype=float)
    kt = np.multiply.outer(grid, np.arange(1, pairs.shape[0] + 1))
    c, s = np.cos(kt), np.sin(kt)
    x = c * pairs[:, 0] + s * pairs[:, 1]
    y = -s * pairs[:, 0] + c * pairs[:, 1]
    return Trajectory(grid, np.stack([x, y], axis=-1))


def amplitude_system(pairs) -> np.ndarray:
    """Residuals of the algebraic amplitude equations, flattened ``(2N,)``.

    For each mode::

        c1^3 + 2 sum_{j != k} (c1 c1j^2 + c1 c2j^2) + c1 c2^2 - 4 c1
        c2^3 + 2 sum_{j != k} (c2 c1j^2 + c2 c2j^2) + c1^2 c2 - 4 c2
    """
    pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
    c1, c2 = pairs[:, 0], pairs[:, 1]
    r2 = c1**2 + c2**2
    others = r2.sum() - r2
    e1 = c1**3 + 2.0 * (c1 * others) + c1 * c2**2 - 4.0 * c1
    e2 = c2**3 + 2.0 * (c2 * others) + c1**2 * c2 - 4.0 * c2
    return np.stack([e1, e2], axis=1).ravel()


def torus_radius(n: int) -> float:
    """Common radius ``2 / sqrt(2N - 1)`` of roots with ``N`` nonzero pairs."""
    if n < 1:
        raise DomainError("torus support size must be >= 1")
    return 2.0 / np.sqrt(2.0 * n - 1.0)


def newton_start(cfg: VdPConfig, seed: int | None = None) -> np.ndarray:
    """Radius-one start on the support; phase 0 unless ``seed`` is given."""
    pairs = np.zeros((cfg.n_modes, 2))
    rng = np.random.default_rng(seed) if seed is not None else None
    for k in cfg.support:
        phase = rng.uniform(0.0, 2.0 * np.pi) if rng is not None else 0.0
        pairs[k - 1] = (np.cos(phase), np.sin(phase))
    return pairs


def solve_amplitudes(cfg: VdPConfig, start=None, tol: float = 1e-13, max_iter: int = 60,
                     rank_tol: float = 1e-10, seed: int | None = None) -> np.ndarray:
    """Newton root of the amplitude system with modes outside the support pinned to zero."""
    start = newton_start(cfg, seed) if start is None else np.asarray(start, dtype=float).reshape(-1, 2)
    idx = np.array([[2 * (k - 1), 2 * (k - 1) + 1] for k in cfg.support], dtype=int).ravel()

    def embed(coords):
        flat = np.zeros(2 * cfg.n_modes)
        flat[idx] = coords
        return flat

    def reduced(coords):
        return amplitude_system(embed(coords))[idx]

    result = newton_roots(reduced, start.ravel()[idx], tol=tol, max_iter=max_iter, rank_tol=rank_tol)
    return embed(result.x).reshape(-1, 2)


def verify_torus(pairs, tol: float = 1e-10) -> TorusReport:
    """Check that all nonzero pairs share the radius ``2 / sqrt(2N - 1)``."""
    pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
    residual = float(np.linalg.norm(amplitude_system(pairs)))
    radii = np.hypot(pairs[:, 0], pairs[:, 1])
    support = [int(k) + 1 for k in np.flatnonzero(radii > tol)]
    messages = []
    if residual > tol:
        messages.append(f"amplitude residual {residual:.3e} exceeds {tol:.1e}")
    if not support:
        return TorusReport([], radii.tolist(), None, None, residual <= tol, residual,
                           messages + ["empty support: zero root"])
    nonzero = radii[np.array(support) - 1]
    shared = float(nonzero.mean())
    expected = torus_radius(len(support))
    spread = float(nonzero.max() - nonzero.min())
    if spread > tol:
        messages.append(f"nonzero radii differ by {spread:.3e}")
    if abs(shared - expected) > tol:
        messages.append(f"shared radius {shared!r} differs from {expected!r}")
    ok = residual <= tol and spread <= tol and abs(shared - expected) <= tol
    return TorusReport(support, radii.tolist(), shared, expected, ok, residual, messages)


def cross_check_F(cfg: VdPConfig, pairs, grid_size: int = DEFAULT_GRID_SIZE,
                  rel_tol: float = 1e-8, family: GeneratingFamily | None = None) -> dict:
    """Compare the quadrature map ``F`` with the algebraic system mode by mode.

    For each mode the best-fit constant ``F_k = s_k * alg_k`` is reported with
    the relative misfit.  Modes where the algebraic residual vanishes are
    checked for ``F_k ~ 0`` instead.
    """
    pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
    problem, rhs = build_vdp_problem(cfg)
    family = family or GeneratingFamily(problem, grid_size)
    F = family.F(rhs, pairs)
    alg = amplitude_system(pairs).reshape(-1, 2)
    scale = max(1.0, float(np.max(np.abs(alg))))
    constants, misfits = [], []
    consistent = True
    for k in range(cfg.n_modes):
        a, f = alg[k], F[k]
        na = float(a @ a)
        if np.sqrt(na) <= 1e-12 * scale:
            constants.append(None)
            miss = float(np.linalg.norm(f))
            misfits.append(miss)
            consistent &= miss <= 1e-9 * scale
            continue
        s = float(f @ a) / na
        miss = float(np.linalg.norm(f - s * a)) / max(float(np.linalg.norm(f)), 1e-300)
        constants.append(s)
        misfits.append(miss)
        consistent &= miss <= rel_tol
    report = {
        "pairs": pairs.tolist(),
        "F": F.tolist(),
        "algebraic": alg.tolist(),
        "constants": constants,
        "relative_misfit": misfits,
        "proportional": bool(consistent),
    }
    if not consistent:
        raise VerificationError("generating map is not proportional to the algebraic system", report)
    return report
