"""Periodic boundary-value problems for Schrodinger-type evolution equations
in a spectrally truncated Hilbert space: generalized Green operator,
solvability classification, Lyapunov-Schmidt iteration and the van der Pol
torus-radius law."""

from .errors import (
    ConditioningError,
    ConfigurationError,
    DomainError,
    NonConvergenceError,
    NotSolvableError,
    ShapeError,
    VerificationError,
)
from .linear import (
    BVPProblem,
    ForcingFunction,
    SolvabilityReport,
    Trajectory,
    TrigTerm,
    assemble_g,
    green_pseudoinverse,
    green_series,
    integrate_forcing,
    pseudosolve,
    solvability_condition,
    solve_linear,
    verify_trajectory,
)
from .lyapunov_schmidt import (
    GeneratingRoot,
    NonlinearRHS,
    B0_matrix,
    check_sufficient_conditions,
    find_generating_root,
    generating_F,
    ls_iterate,
    newton_roots,
    remainder_R,
)
from .spectral import (
    BlockDiagonalMap,
    SpectralOperator,
    cesaro_projector_closed,
    cesaro_projector_empirical,
    evolve,
    ht_inner,
    ht_norm,
    mode_angle,
    monodromy,
)

__version__ = "0.1.0"
