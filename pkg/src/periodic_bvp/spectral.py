"""
Truncated spectral representation of the state space H_T = H + H.

The positive self-adjoint operator T is represented by its first N
eigenvalues.  A state (phase vector) is an ``(N, 2)`` float array whose row
``k`` holds the pair ``(x_k, y_k)``: ``x`` lives in the first copy of H and
``y`` in the second.  Every operator the solvers need (the evolution group,
its period map and the Cesaro-mean projector) acts on each row by a real
2x2 block, so they are stored as :class:`BlockDiagonalMap`.

Mode ``k`` rotates with frequency ``sqrt(lambda_k)``::

    U(t) (x, y) = (cos th x + sin th y, -sin th x + cos th y),  th = sqrt(lambda_k) t
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

TWO_PI = 2.0 * np.pi
DEFAULT_RESONANCE_TOL = 1e-9


@dataclass(frozen=True)
class SpectralOperator:
    """Positive, nondecreasing eigenvalues of the truncated operator T."""

    eigenvalues: np.ndarray

    def __post_init__(self):
        lam = np.array(self.eigenvalues, dtype=float).reshape(-1)
        if lam.size == 0:
            raise ValueError("at least one eigenvalue is required")
        if not np.all(np.isfinite(lam)):
            raise ValueError("eigenvalues must be finite")
        if np.any(lam <= 0):
            raise ValueError("eigenvalues must be strictly positive")
        if np.any(np.diff(lam) < 0):
            raise ValueError("eigenvalues must be nondecreasing")
        lam.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.size

    @property
    def frequencies(self) -> np.ndarray:
        """Rotation frequencies sqrt(lambda_k)."""
        return np.sqrt(self.eigenvalues)

    @classmethod
    def critical(cls, n_modes: int, w: float = TWO_PI) -> "SpectralOperator":
        """Spectrum lambda_k = 4 pi^2 k^2 / w^2, every mode resonant at period w."""
        k = np.arange(1, n_modes + 1, dtype=float)
        return cls(4.0 * np.pi**2 * k**2 / w**2)

    def angles(self, t) -> np.ndarray:
        """Rotation angles for all modes; shape ``t.shape + (N,)``."""
        return np.multiply.outer(np.asarray(t, dtype=float), self.frequencies)

    def __eq__(self, other):
        if not isinstance(other, SpectralOperator):
            return NotImplemented
        return np.array_equal(self.eigenvalues, other.eigenvalues)

    def __hash__(self):
        return hash(self.eigenvalues.tobytes())


def phase_vector(values, n_modes: int | None = None) -> np.ndarray:
    """Validate and copy ``values`` into an ``(N, 2)`` float array."""
    arr = np.array(values, dtype=float)
    if arr.ndim == 1 and arr.size == 2:
        arr = arr.reshape(1, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ShapeError(f"phase vector must have shape (N, 2), got {arr.shape}")
    if n_modes is not None and arr.shape[0] != n_modes:
        raise ShapeError(f"phase vector has {arr.shape[0]} modes, operator has {n_modes}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("phase vector entries must be finite")
    return arr


def _check_states(op: SpectralOperator, phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    if phi.shape[-2:] != (op.n_modes, 2):
        raise ShapeError(f"expected trailing shape ({op.n_modes}, 2), got {phi.shape}")
    return phi


def rotation_blocks(theta) -> np.ndarray:
    """Stack of 2x2 rotation blocks ``[[c, s], [-s, c]]`` for each angle."""
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    out = np.empty(theta.shape + (2, 2))
    out[..., 0, 0] = c
    out[..., 0, 1] = s
    out[..., 1, 0] = -s
    out[..., 1, 1] = c
    return out


def dist_to_2pi_lattice(theta) -> np.ndarray:
    """Distance from each angle to the nearest multiple of 2 pi."""
    theta = np.asarray(theta, dtype=float)
    return np.abs(theta - TWO_PI * np.round(theta / TWO_PI))


@dataclass(frozen=True)
class BlockDiagonalMap:
    """Linear map on phase vectors given by one real 2x2 block per mode."""

    blocks: np.ndarray

    def __post_init__(self):
        b = np.array(self.blocks, dtype=float)
        if b.ndim != 3 or b.shape[1:] != (2, 2):
            raise ShapeError(f"blocks must have shape (N, 2, 2), got {b.shape}")
        b.setflags(write=False)
        object.__setattr__(self, "blocks", b)

    @property
    def n_modes(self) -> int:
        return self.blocks.shape[0]

    @classmethod
    def identity(cls, n_modes: int) -> "BlockDiagonalMap":
        return cls(np.broadcast_to(np.eye(2), (n_modes, 2, 2)))

    @classmethod
    def zeros(cls, n_modes: int) -> "BlockDiagonalMap":
        return cls(np.zeros((n_modes, 2, 2)))

    def apply(self, phi) -> np.ndarray:
        """Apply to a phase vector or to any stack of them (``(..., N, 2)``)."""
        phi = np.asarray(phi, dtype=float)
        if phi.shape[-2:] != (self.n_modes, 2):
            raise ShapeError(f"expected trailing shape ({self.n_modes}, 2), got {phi.shape}")
        return np.einsum("kij,...kj->...ki", self.blocks, phi)

    def __matmul__(self, other: "BlockDiagonalMap") -> "BlockDiagonalMap":
        if not isinstance(other, BlockDiagonalMap):
            return NotImplemented
        if other.n_modes != self.n_modes:
            raise ShapeError("block maps have different numbers of modes")
        return BlockDiagonalMap(self.blocks @ other.blocks)

    def __add__(self, other):
        return BlockDiagonalMap(self.blocks + other.blocks)

    def __sub__(self, other):
        return BlockDiagonalMap(self.blocks - other.blocks)

    @property
    def T(self) -> "BlockDiagonalMap":
        return BlockDiagonalMap(np.swapaxes(self.blocks, 1, 2))

    def to_dense(self) -> np.ndarray:
        """Dense ``(2N, 2N)`` matrix in the flattened ``(x1, y1, x2, y2, ...)`` order."""
        n = self.n_modes
        out = np.zeros((2 * n, 2 * n))
        for k in range(n):
            out[2 * k:2 * k + 2, 2 * k:2 * k + 2] = self.blocks[k]
        return out

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.blocks))) if self.blocks.size else 0.0


def mode_angle(op: SpectralOperator, k: int, t: float) -> float:
    """Rotation angle ``sqrt(lambda_k) * t`` of mode ``k`` (1-based)."""
    if not 1 <= k <= op.n_modes:
        raise IndexError(f"mode index {k} outside 1..{op.n_modes}")
    return float(np.sqrt(op.eigenvalues[k - 1]) * t)


def evolve(op: SpectralOperator, t: float, phi) -> np.ndarray:
    """Apply the evolution group ``U(t)`` to ``phi`` (shape ``(..., N, 2)``)."""
    phi = _check_states(op, phi)
    th = op.frequencies * float(t)
    c, s = np.cos(th), np.sin(th)
    x, y = phi[..., 0], phi[..., 1]
    return np.stack([c * x + s * y, -s * x + c * y], axis=-1)


def evolve_grid(op: SpectralOperator, times, states, sign: float = 1.0) -> np.ndarray:
    """Apply ``U(sign * t_j)`` to ``states[j]`` for every grid point.

    ``states`` has shape ``(M+1, N, 2)``; ``sign=-1`` gives ``U^{-1}(t_j)``.
    """
    states = _check_states(op, states)
    th = sign * op.angles(times)
    c, s = np.cos(th), np.sin(th)
    x, y = states[..., 0], states[..., 1]
    return np.stack([c * x + s * y, -s * x + c * y], axis=-1)


def monodromy(op: SpectralOperator, w: float) -> BlockDiagonalMap:
    """Period map ``U(w)``."""
    if not w > 0:
        raise ValueError("period w must be positive")
    return BlockDiagonalMap(rotation_blocks(op.frequencies * w))


def resonance_flags(op: SpectralOperator, w: float,
                    resonance_tol: float = DEFAULT_RESONANCE_TOL) -> np.ndarray:
    """Boolean mask of modes whose period angle lies within tolerance of 2 pi Z."""
    return dist_to_2pi_lattice(op.frequencies * w) <= resonance_tol


def cesaro_projector_closed(op: SpectralOperator, w: float,
                            resonance_tol: float = DEFAULT_RESONANCE_TOL) -> BlockDiagonalMap:
    """Orthoprojector onto the fixed subspace of ``U(w)``.

    A planar rotation by an angle outside 2 pi Z fixes only the origin, so
    the block is the identity on resonant modes and zero elsewhere.
    """
    if not w > 0:
        raise ValueError("period w must be positive")
    if resonance_tol < 0:
        raise ValueError("resonance_tol must be nonnegative")
    flags = resonance_flags(op, w, resonance_tol)
    return BlockDiagonalMap(flags[:, None, None] * np.eye(2))


def _rotation_partial_sums(theta: np.ndarray, n: int):
    """Return sum_{k=0}^{n} cos(k theta) and sum_{k=0}^{n} sin(k theta)."""
    half = np.sin(theta / 2.0)
    amp = np.empty_like(theta)
    sc = np.empty_like(theta)
    ss = np.empty_like(theta)
    safe = np.abs(half) > 1e-8
    amp[safe] = np.sin((n + 1) * theta[safe] / 2.0) / half[safe]
    sc[safe] = amp[safe] * np.cos(n * theta[safe] / 2.0)
    ss[safe] = amp[safe] * np.sin(n * theta[safe] / 2.0)
    if np.any(~safe):
        k = np.arange(n + 1, dtype=float)
        arg = np.multiply.outer(theta[~safe], k)
        sc[~safe] = np.cos(arg).sum(axis=-1)
        ss[~safe] = np.sin(arg).sum(axis=-1)
    return sc, ss


def cesaro_projector_empirical(op: SpectralOperator, w: float, n: int) -> BlockDiagonalMap:
    """Cesaro mean ``(1/(n+1)) sum_{k=0}^{n} U(k w)`` in closed angle form."""
    if n < 1:
        raise ValueError("iteration count n must be >= 1")
    theta = op.frequencies * w
    sc, ss = _rotation_partial_sums(theta, int(n))
    blocks = np.empty((op.n_modes, 2, 2))
    blocks[:, 0, 0] = sc
    blocks[:, 0, 1] = ss
    blocks[:, 1, 0] = -ss
    blocks[:, 1, 1] = sc
    return BlockDiagonalMap(blocks / (n + 1))


def cesaro_error_bound(op: SpectralOperator, w: float, n: int,
                       resonance_tol: float = DEFAULT_RESONANCE_TOL) -> float:
    """Rigorous max-entry bound on the empirical projector error.

    Each nonresonant block error is a scaled rotation of norm
    ``|sin((n+1) th/2)| / ((n+1) |sin(th/2)|) <= 1 / ((n+1) sin(d/2))`` with
    ``d`` the distance of the angle to 2 pi Z.  Resonant blocks are exact.
    """
    d = dist_to_2pi_lattice(op.frequencies * w)
    d = d[d > resonance_tol]
    if d.size == 0:
        return 0.0
    return float(1.0 / ((n + 1) * np.sin(d.min() / 2.0)))


def ht_inner(op: SpectralOperator, phi, psi) -> float:
    """Inner product of H_T: ``sum_k lambda_k^2 (x_k x'_k + y_k y'_k)``."""
    phi = _check_states(op, phi)
    psi = _check_states(op, psi)
    return float(np.sum(op.eigenvalues**2 * np.sum(phi * psi, axis=-1)))


def ht_norm(op: SpectralOperator, phi) -> float:
    return float(np.sqrt(ht_inner(op, phi, phi)))


def euclidean_norm(phi) -> float:
    """Plain H + H norm (unit weights)."""
    return float(np.linalg.norm(np.asarray(phi, dtype=float).ravel()))
