import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.linalg import expm

from periodic_bvp.errors import NonConvergenceError, ShapeError, VerificationError
from periodic_bvp.linear import BVPProblem
from periodic_bvp.lyapunov_schmidt import (
    B0_matrix,
    GeneratingFamily,
    NonlinearRHS,
    PolynomialTerm,
    check_sufficient_conditions,
    fd_state_jacobian,
    find_generating_root,
    generating_F,
    ls_iterate,
    newton_roots,
    polynomial_rhs,
    remainder_R,
)
from periodic_bvp.spectral import BlockDiagonalMap, SpectralOperator
from periodic_bvp.vdp import vdp_rhs

W = 2 * np.pi
UNIT = SpectralOperator([1.0])
X, Y = 0, 1


def cubic_forced_rhs(p=(1.0, 0.0), second_harmonic=0.5):
    """Z = -|phi|^2 phi + U(t) p + (h cos 2t, 0) for one mode with lambda = 1.

    The second harmonic integrates to zero against U^{-1}, so the generating
    map is F(c) = 2 pi (p - |c|^2 c); for p = (1, 0) its root is c = (1, 0)
    with B0 = -2 pi diag(3, 1).  The harmonic keeps the correction nonzero.
    """
    p1, p2 = p
    quarter = -np.pi / 2
    terms = [
        PolynomialTerm(1, X, -1.0, ((3, 0),)),
        PolynomialTerm(1, X, -1.0, ((1, 2),)),
        PolynomialTerm(1, Y, -1.0, ((2, 1),)),
        PolynomialTerm(1, Y, -1.0, ((0, 3),)),
        PolynomialTerm(1, X, p1, ((0, 0),), omega=1.0),
        PolynomialTerm(1, X, p2, ((0, 0),), omega=1.0, phase=quarter),
        PolynomialTerm(1, Y, -p1, ((0, 0),), omega=1.0, phase=quarter),
        PolynomialTerm(1, Y, p2, ((0, 0),), omega=1.0),
        PolynomialTerm(1, X, second_harmonic, ((0, 0),), omega=2.0),
    ]
    return polynomial_rhs(terms, 1)


LINEAR_B = np.array([[0.3, 0.1], [-0.2, 0.4]])


def linear_rhs():
    terms = [
        PolynomialTerm(1, X, LINEAR_B[0, 0], ((1, 0),)),
        PolynomialTerm(1, X, LINEAR_B[0, 1], ((0, 1),)),
        PolynomialTerm(1, Y, LINEAR_B[1, 0], ((1, 0),)),
        PolynomialTerm(1, Y, LINEAR_B[1, 1], ((0, 1),)),
    ]
    return polynomial_rhs(terms, 1)


class TestGeneratingF:
    def test_zero_nonlinearity(self):
        rhs = NonlinearRHS(lambda s, t, e: np.zeros_like(s))
        F = generating_F(BVPProblem.homogeneous(UNIT, W), rhs, [[0.7, -0.2]], 128)
        np.testing.assert_array_equal(F, 0.0)

    def test_vdp_on_limit_cycle(self):
        F = generating_F(BVPProblem.homogeneous(UNIT, W), vdp_rhs(UNIT), [[2.0, 0.0]], 256)
        np.testing.assert_allclose(F, 0.0, atol=1e-13)

    def test_vdp_inside_limit_cycle_against_quad(self):
        # first component integrand sin^4 t; second cos t * (-sin^3 t)
        e1 = quad(lambda t: np.sin(t) ** 4, 0, W)[0]
        e2 = quad(lambda t: -np.cos(t) * np.sin(t) ** 3, 0, W)[0]
        F = generating_F(BVPProblem.homogeneous(UNIT, W), vdp_rhs(UNIT), [[1.0, 0.0]], 256)
        np.testing.assert_allclose(F, [[e1, e2]], atol=1e-12)
        assert e1 == pytest.approx(3 * np.pi / 4)

    def test_lies_in_projector_range(self):
        op = SpectralOperator([0.3, 1.0, 2.2])
        problem = BVPProblem.homogeneous(op, W)
        F = generating_F(problem, vdp_rhs(op), [[1.0, 0.5], [0.2, 0.1], [0.4, 0.3]], 128)
        np.testing.assert_array_equal(F[[0, 2]], 0.0)

    def test_cubic_forced_closed_form(self):
        rhs = cubic_forced_rhs((0.5, -0.25))
        c = np.array([0.3, 0.8])
        F = generating_F(BVPProblem.homogeneous(UNIT, W), rhs, [c], 256)
        np.testing.assert_allclose(F[0], W * (np.array([0.5, -0.25]) - (c @ c) * c), atol=1e-12)


class TestB0:
    def test_vdp_limit_cycle(self):
        B0 = B0_matrix(BVPProblem.homogeneous(UNIT, W), vdp_rhs(UNIT), [[2.0, 0.0]], grid_size=256)
        np.testing.assert_allclose(B0, [[-W, 0.0], [0.0, 0.0]], atol=1e-8)

    def test_cubic_forced_root(self):
        B0 = B0_matrix(BVPProblem.homogeneous(UNIT, W), cubic_forced_rhs(), [[1.0, 0.0]], grid_size=256)
        np.testing.assert_allclose(B0, -W * np.diag([3.0, 1.0]), atol=1e-8)

    def test_wrong_analytic_jacobian_detected(self):
        good = vdp_rhs(UNIT)
        bad = NonlinearRHS(good.Z, lambda s, t: 2.0 * good.jacobian(s, t))
        with pytest.raises(VerificationError):
            B0_matrix(BVPProblem.homogeneous(UNIT, W), bad, [[1.0, 0.0]], grid_size=128)

    def test_nonresonant_problem_empty(self):
        op = SpectralOperator([0.25])
        B0 = B0_matrix(BVPProblem.homogeneous(op, W), linear_rhs(), [[0, 0]], grid_size=64)
        assert B0.shape == (0, 0)


class TestSufficientConditions:
    def test_rank_deficient_fails_range_condition(self):
        eye = BlockDiagonalMap.identity(1)
        rep = check_sufficient_conditions(np.array([[-W, 0.0], [0.0, 0.0]]), eye, eye)
        assert rep.rank == 1
        assert rep.condition2_norm_U == pytest.approx(1.0)
        assert rep.condition2_norm_U0 == pytest.approx(1.0)
        assert not rep.hypotheses_satisfied
        assert any("not satisfied" in m for m in rep.messages)

    def test_invertible_passes(self):
        eye = BlockDiagonalMap.identity(1)
        rep = check_sufficient_conditions(-W * np.diag([3.0, 1.0]), eye, eye)
        assert rep.rank == 2
        assert rep.condition_number == pytest.approx(3.0)
        assert rep.hypotheses_satisfied
        assert rep.condition2_norm_U == 0.0

    def test_no_resonant_modes(self):
        rep = check_sufficient_conditions(np.zeros((0, 0)), BlockDiagonalMap.zeros(2))
        assert rep.hypotheses_satisfied and rep.rank == 0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            check_sufficient_conditions(np.eye(3), BlockDiagonalMap.identity(1))

    def test_report_serializes(self):
        eye = BlockDiagonalMap.identity(1)
        d = check_sufficient_conditions(np.eye(2), eye, eye).to_dict()
        assert d["rank"] == 2 and isinstance(d["singular_values"], list)


class TestNewton:
    def test_scalar_root(self):
        res = newton_roots(lambda x: x**2 - 2.0, [1.0])
        assert res.x[0] == pytest.approx(np.sqrt(2.0), abs=1e-12)
        assert res.rank == 1

    def test_underdetermined_family(self):
        res = newton_roots(lambda x: np.array([x @ x - 1.0]), [0.6, 0.6])
        assert res.residual <= 1e-12
        assert np.linalg.norm(res.x) == pytest.approx(1.0, abs=1e-12)
        assert res.rank == 1

    def test_no_root_raises(self):
        with pytest.raises(NonConvergenceError) as info:
            newton_roots(lambda x: x**2 + 1.0, [0.5], max_iter=20)
        assert len(info.value.history) == 21

    def test_generating_root_of_cubic(self):
        root = find_generating_root(BVPProblem.homogeneous(UNIT, W), cubic_forced_rhs(),
                                    [[1.1, 0.2]], grid_size=256)
        np.testing.assert_allclose(root.c0, [[1.0, 0.0]], atol=1e-10)
        assert root.B0_rank == 2
        assert root.conditions.hypotheses_satisfied

    def test_skip_newton_keeps_start(self):
        root = find_generating_root(BVPProblem.homogeneous(UNIT, W), vdp_rhs(UNIT),
                                    [[1.0, 0.0]], grid_size=128, newton=False)
        np.testing.assert_array_equal(root.c0, [[1.0, 0.0]])
        assert root.F_residual == pytest.approx(3 * np.pi / 4, rel=1e-10)


class TestRemainder:
    def setup_method(self):
        self.family = GeneratingFamily(BVPProblem.homogeneous(UNIT, W), 64)
        self.phi0 = self.family.phi0([[1.0, 0.3]])
        self.v = np.random.default_rng(0).normal(size=self.phi0.states.shape)

    def test_zero_correction(self):
        rhs = cubic_forced_rhs()
        A1 = rhs.jacobian(self.phi0.states, self.phi0.grid)
        np.testing.assert_array_equal(remainder_R(rhs, self.phi0, A1, np.zeros_like(self.v), 0.0), 0.0)

    def test_linear_rhs_has_no_remainder(self):
        rhs = linear_rhs()
        A1 = rhs.jacobian(self.phi0.states, self.phi0.grid)
        np.testing.assert_allclose(remainder_R(rhs, self.phi0, A1, self.v, 0.0), 0.0, atol=1e-14)

    def test_cubic_remainder_is_quadratic(self):
        rhs = cubic_forced_rhs()
        A1 = rhs.jacobian(self.phi0.states, self.phi0.grid)
        sizes = [np.abs(remainder_R(rhs, self.phi0, A1, s * self.v, 0.0)).max() for s in (1e-2, 5e-3)]
        assert sizes[0] / sizes[1] == pytest.approx(4.0, rel=2e-2)


class TestIterate:
    def test_eps_zero_returns_generating_solution(self):
        problem = BVPProblem.homogeneous(UNIT, W)
        root = find_generating_root(problem, cubic_forced_rhs(), [[1.0, 0.0]], grid_size=128)
        phi, history = ls_iterate(problem, cubic_forced_rhs(), root, 0.0, grid_size=128)
        np.testing.assert_allclose(phi.states[:, 0, 0], np.cos(phi.grid), atol=1e-10)
        assert len(history) == 1

    def test_eps_beyond_eps0(self):
        problem = BVPProblem.homogeneous(UNIT, W)
        root = find_generating_root(problem, cubic_forced_rhs(), [[1.0, 0.0]], grid_size=64)
        with pytest.raises(ValueError):
            ls_iterate(problem, cubic_forced_rhs(), root, 0.2, grid_size=64)

    def test_linear_nonresonant_against_expm(self):
        op = SpectralOperator([0.25])
        alpha = np.array([1.0, 0.0])
        problem = BVPProblem.homogeneous(op, W, [alpha])
        rhs = linear_rhs()
        eps = 0.05
        root = find_generating_root(problem, rhs, [[0, 0]], grid_size=1024)
        phi, _ = ls_iterate(problem, rhs, root, eps, grid_size=1024)
        gen = np.array([[0.0, 0.5], [-0.5, 0.0]])
        A = gen + eps * LINEAR_B
        c = np.linalg.solve(np.eye(2) - expm(A * W), alpha)
        exact = np.array([expm(A * t) @ c for t in phi.grid])
        np.testing.assert_allclose(phi.states[:, 0, :], exact, atol=1e-8)

    def test_unique_solution_from_nearby_roots(self):
        problem = BVPProblem.homogeneous(UNIT, W)
        rhs = cubic_forced_rhs()
        tol = 1e-10
        results = []
        for start in ([[1.01, 0.02]], [[0.98, -0.01]]):
            root = find_generating_root(problem, rhs, start, grid_size=512)
            phi, history = ls_iterate(problem, rhs, root, 0.05, tol=tol, grid_size=512)
            last = history[-1]
            assert last.boundary_residual <= 1e-8
            np.testing.assert_allclose(last.v.states[0], last.v.states[-1], atol=1e-8)
            assert np.max(np.abs(last.v.states)) > 1e-3
            results.append(phi.states)
        assert np.max(np.abs(results[0] - results[1])) <= 10 * tol

    def test_q_neighbourhood_warning(self):
        problem = BVPProblem.homogeneous(UNIT, W)
        rhs = cubic_forced_rhs()
        root = find_generating_root(problem, rhs, [[1.0, 0.0]], grid_size=128)
        with pytest.warns(UserWarning, match="neighbourhood"):
            ls_iterate(problem, rhs, root, 0.05, grid_size=128, q=1e-12)

    def test_off_root_start_does_not_converge(self):
        problem = BVPProblem.homogeneous(UNIT, W)
        rhs = vdp_rhs(UNIT)
        root = find_generating_root(problem, rhs, [[1.0, 0.0]], grid_size=256, newton=False)
        with pytest.raises(NonConvergenceError) as info:
            ls_iterate(problem, rhs, root, 0.01, grid_size=256)
        assert info.value.history


coords = st.floats(-2.0, 2.0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(coords, coords), min_size=2, max_size=2), st.floats(0, 6.0))
def test_polynomial_jacobian_matches_differences(state, t):
    terms = [
        PolynomialTerm(1, X, 0.7, ((2, 0), (0, 1)), omega=1.3, phase=0.2),
        PolynomialTerm(2, Y, -1.1, ((1, 1), (1, 0))),
        PolynomialTerm(2, X, 0.4, ((0, 0), (0, 3)), omega=0.5),
    ]
    rhs = polynomial_rhs(terms, 2)
    states = np.array(state)[None]
    times = np.array([t])
    np.testing.assert_allclose(rhs.jacobian(states, times), fd_state_jacobian(rhs, states, times, 1e-6),
                               atol=1e-7)


def test_polynomial_rejects_bad_slot():
    with pytest.raises(ShapeError):
        polynomial_rhs([PolynomialTerm(3, X, 1.0, ((1, 0), (0, 0)))], 2)
