import numpy as np
import pytest

import sylfem as sf
from sylfem.exceptions import OperatorError, SolverError
from sylfem.operators import SylvesterOperator, to_kronecker, vec
from sylfem.solvers import (build_spectral_cache, dirichlet_p1_eigenvalues,
                            dirichlet_sine_basis, increment_threshold,
                            reference_increment, relative_residual,
                            vector_pcg)

from conftest import build_problem_operator

D, NBC = sf.BCKind.DIRICHLET, sf.BCKind.NEUMANN


def square_poisson_pieces(k, n, gamma=0.0):
    prob = sf.manufactured_problem("poisson_square")
    x, y = sf.build_direction_sets(prob.domain, k, n, prob.bc)
    op, rhs_of = sf.elliptic_operator(x, y, gamma)
    X, Y = sf.full_node_grid(prob.domain, x, y)
    F = prob.source(X, Y)
    return x, y, op, sf.interior_values(F, x, y), rhs_of(F)


class TestReduced:
    def test_hadamard_kernel_values(self):
        Z = np.diag([2.0, 3.0])
        op = SylvesterOperator([(Z, np.eye(2)), (np.eye(2), Z)],
                               symmetric=True, positive_definite=True)
        rep = sf.solve_reduced(op, np.ones((2, 2)))
        assert np.allclose(rep.solution,
                           [[1 / 4, 1 / 5], [1 / 5, 1 / 6]], atol=1e-14)

    def test_poisson_single_interior_node(self):
        # the source vanishes at the only node, so the solution is zero
        _, _, op, _, rhs = square_poisson_pieces(1, 2)
        rep = sf.solve_reduced(op, rhs)
        assert np.allclose(rep.solution, [[0.0]], atol=1e-15)

    def test_residual_small(self):
        _, _, op, _, rhs = square_poisson_pieces(2, 16, gamma=1.0)
        rep = sf.solve_reduced(op, rhs)
        assert rep.residual_history[-1] <= 1e-10

    def test_needs_two_terms(self, rng):
        _, _, _, op, _ = build_problem_operator(1, 8, "cap", D)
        with pytest.raises(SolverError):
            sf.solve_reduced(op, rng.standard_normal(op.shape))

    def test_singular_pencil_guarded(self):
        Z1 = np.diag([1.0, 2.0])
        Z2 = np.diag([-1.0, 3.0])  # 1 + (-1) = 0
        op = SylvesterOperator([(Z1, np.eye(2)), (np.eye(2), Z2)])
        with pytest.raises(SolverError, match="singular"):
            sf.solve_reduced(op, np.ones((2, 2)))

    def test_cache_reconstructs_pencils(self):
        _, _, op, _, _ = square_poisson_pieces(2, 8, gamma=0.5)
        cache = build_spectral_cache(op)
        (G1, H1), (G2, H2) = op.terms
        Z1 = np.linalg.solve(G2, G1)
        Z2 = H2 @ np.linalg.inv(H1)
        for Z, X, lam, Xinv in ((Z1, cache.X1, cache.lam1, cache.X1inv),
                                (Z2, cache.X2, cache.lam2, cache.X2inv)):
            col = np.max(np.abs(Z @ X - X * lam[None, :]))
            assert col < 1e-10 * max(1.0, np.max(np.abs(Z)))
            recon = X @ np.diag(lam) @ Xinv
            assert np.linalg.norm(recon - Z) <= 1e-10 * np.linalg.norm(Z)
            assert np.allclose(Xinv @ X, np.eye(len(lam)), atol=1e-12)

    def test_general_two_term_reduction_with_distinct_masses(self, rng):
        # mass-like factors that differ between sides still reduce
        rng_m = np.random.default_rng(5)
        q = 6
        S = rng_m.standard_normal((q, q))
        M1 = S @ S.T + q * np.eye(q)
        A1 = np.diag(np.arange(1.0, q + 1))
        op = SylvesterOperator([(A1, M1), (M1, A1)],
                               symmetric=True, positive_definite=True)
        rhs = rng.standard_normal((q, q))
        rep = sf.solve_reduced(op, rhs)
        assert np.linalg.norm(op.apply(rep.solution) - rhs) \
            <= 1e-10 * np.linalg.norm(rhs)


class TestClosedForm:
    def test_smallest_eigenvalue(self):
        # assembled pencil at N=2: A = [4], M = [1/3] so M^-1 A = [12]
        assert np.allclose(dirichlet_p1_eigenvalues(2, 0.0), [12.0])

    @pytest.mark.parametrize("n", [4, 8, 16])
    @pytest.mark.parametrize("gamma", [0.0, 1.0])
    def test_eigenvalues_match_assembled_pencil(self, n, gamma):
        A, M = sf.assemble_standard(sf.build_basis(1, n, D))
        Z1 = np.linalg.solve(M, A) + 0.5 * gamma * np.eye(n - 1)
        lam = np.sort(np.linalg.eigvals(Z1).real)
        assert np.max(np.abs(lam - np.sort(dirichlet_p1_eigenvalues(n, gamma)))) < 1e-10

    def test_sine_basis_matches_numerical_eigenvectors(self):
        n = 4
        A, _ = sf.assemble_standard(sf.build_basis(1, n, D))
        _, vecs = np.linalg.eigh(A)
        X = dirichlet_sine_basis(n)
        for j in range(n - 1):
            a = vecs[:, j] / np.linalg.norm(vecs[:, j])
            b = X[:, j] / np.linalg.norm(X[:, j])
            assert min(np.linalg.norm(a - b), np.linalg.norm(a + b)) < 1e-12

    def test_sine_basis_involution(self):
        for n in (4, 8, 16):
            X = dirichlet_sine_basis(n)
            assert np.allclose(X @ X, n / 2 * np.eye(n - 1), atol=1e-12)

    def test_zero_source(self):
        rep = sf.solve_reduced_closed_form(0.0, np.zeros((7, 7)), 8)
        assert np.array_equal(rep.solution, np.zeros((7, 7)))

    @pytest.mark.parametrize("gamma", [0.0, 1.0])
    def test_matches_reduced_path(self, gamma, rng):
        n = 24
        _, _, op, F, rhs = square_poisson_pieces(1, n, gamma=gamma)
        a = sf.solve_reduced(op, rhs).solution
        b = sf.solve_reduced_closed_form(gamma, F, n).solution
        assert np.linalg.norm(a - b) <= 1e-10 * max(np.linalg.norm(a), 1e-30)

    def test_shape_validation(self):
        with pytest.raises(SolverError):
            sf.solve_reduced_closed_form(0.0, np.zeros((3, 4)), 4)


class TestPreconditioner:
    def test_identity_kind(self, rng):
        p = sf.make_preconditioner("identity", None, None)
        U = rng.standard_normal((4, 4))
        assert np.array_equal(p.apply_inverse(U), U)
        assert p.is_identity

    def test_inverse_really_inverts(self, rng):
        x, y = sf.build_direction_sets(sf.CAP_DOMAIN, 2, 8, D)
        p = sf.make_preconditioner("elliptic_xnormal", x, y)
        U = rng.standard_normal((y.q, x.q))
        assert np.allclose(p.apply_inverse(p.apply(U)), U, atol=1e-12)
        assert np.allclose(p.apply(p.apply_inverse(U)), U, atol=1e-12)

    def test_unit_profile_reduces_to_stiffness_pair(self):
        x, y = sf.build_direction_sets(sf.SQUARE, 1, 8, D)
        p = sf.make_preconditioner("elliptic_xnormal", x, y)
        assert np.allclose(p.left, y.mats.A, atol=1e-14)
        assert np.allclose(p.right, x.mats.A, atol=1e-14)

    def test_parabolic_zero_tau_is_mass_pair(self):
        x, y = sf.build_direction_sets(sf.CAP_DOMAIN, 1, 8, D)
        p = sf.make_preconditioner("parabolic", x, y, d_u=1.0, tau=0.0)
        assert np.allclose(p.left, y.mats.M3)
        assert np.allclose(p.right, x.mats.M)

    def test_lumped_parabolic_factors(self):
        x, y = sf.build_direction_sets(sf.CAP_DOMAIN, 1, 8, D, lumped=True)
        c = 0.5 * 0.25
        p = sf.make_preconditioner("parabolic_lumped", x, y, d_u=0.5, tau=0.25)
        assert np.allclose(p.left, y.lumped.M0 @ y.lumped.D1 + c * y.lumped.A1)
        assert np.allclose(p.right, x.lumped.M0 + c * (x.mats.A + x.lumped.A2))

    def test_singular_factor_names_culprit(self):
        x, y = sf.build_direction_sets(sf.CAP_DOMAIN, 1, 8, NBC)
        with pytest.raises(SolverError, match="B1"):
            sf.make_preconditioner("elliptic_xnormal", x, y)

    def test_unknown_kind(self):
        x, y = sf.build_direction_sets(sf.SQUARE, 1, 4, D)
        with pytest.raises(SolverError):
            sf.make_preconditioner("magic", x, y)


class TestMoPcg:
    def test_identity_operator_one_iteration(self, rng):
        q = 6
        op = SylvesterOperator([(np.eye(q), np.eye(q))],
                               symmetric=True, positive_definite=True)
        rhs = rng.standard_normal((q, q))
        rep = sf.mo_pcg(op, rhs, stop=relative_residual(1e-12))
        assert rep.iterations == 1
        assert np.allclose(rep.solution, rhs, atol=1e-12)
        assert rep.stop_reason == "tolerance"

    def test_flags_required(self, rng):
        op = SylvesterOperator([(np.eye(3), np.eye(3))])
        with pytest.raises(OperatorError):
            sf.mo_pcg(op, rng.standard_normal((3, 3)))

    def test_indefinite_operator_detected(self, rng):
        op = SylvesterOperator([(-np.eye(3), np.eye(3))],
                               symmetric=True, positive_definite=True)
        with pytest.raises(OperatorError, match="positive definite"):
            sf.mo_pcg(op, rng.standard_normal((3, 3)))

    def test_max_iter_returns_report(self, rng):
        _, _, _, op, _ = build_problem_operator(1, 16, "cap", D)
        rhs = rng.standard_normal(op.shape)
        rep = sf.mo_pcg(op, rhs, stop=relative_residual(1e-14), max_iter=2)
        assert rep.stop_reason == "max_iter"
        assert rep.iterations == 2

    def test_square_preconditioner_two_iterations(self):
        # increment rule referenced to the discretization error
        x, y, op, F, rhs = square_poisson_pieces(2, 24)
        u_exact = sf.exact_nodal(sf.SQUARE, x, y,
                                 sf.manufactured_problem("poisson_square").exact)
        err_v = np.linalg.norm(sf.solve_reduced(op, rhs).solution - u_exact)
        pre = sf.make_preconditioner("elliptic_square", x, y)
        rep = sf.mo_pcg(op, rhs, precond=pre, stop=reference_increment(err_v))
        assert rep.iterations <= 3
        assert rep.stop_reason == "increment"

    def test_residual_history_monotone(self, rng):
        # holds for the production preconditioned runs (plain CG residual
        # norms may oscillate)
        _, x, y, op, _ = build_problem_operator(1, 16, "jar", D)
        pre = sf.make_preconditioner("elliptic_xnormal", x, y)
        rhs = rng.standard_normal(op.shape)
        rep = sf.mo_pcg(op, rhs, precond=pre, stop=relative_residual(1e-10),
                        max_iter=500)
        h = rep.residual_history
        growth = (h[1:] - h[:-1]) / h[0]
        assert np.max(growth) <= 1e-8

    def test_zero_rhs_short_circuits(self):
        _, _, _, op, _ = build_problem_operator(1, 8, "square", D)
        rep = sf.mo_pcg(op, np.zeros(op.shape))
        assert rep.iterations == 0
        assert np.array_equal(rep.solution, np.zeros(op.shape))

    def test_warm_start_at_solution(self, rng):
        _, _, _, op, _ = build_problem_operator(1, 8, "square", D)
        rhs = rng.standard_normal(op.shape)
        exact = sf.solve_direct(op, rhs).solution
        cold = sf.mo_pcg(op, rhs, stop=relative_residual(1e-10))
        warm = sf.mo_pcg(op, rhs, u0=exact, stop=relative_residual(1e-10))
        assert warm.residual_history[0] <= 1e-10 * cold.residual_history[0] \
            + 1e-14

    def test_dense_working_set_is_five(self, rng):
        _, _, _, op, _ = build_problem_operator(1, 8, "cap", D)
        rep = sf.mo_pcg(op, rng.standard_normal(op.shape),
                        stop=relative_residual(1e-8))
        assert rep.diagnostics["dense_grid_matrices"] == 5

    @pytest.mark.parametrize("lumped", [False, True])
    def test_matches_vector_pcg_iterate_by_iterate(self, lumped, rng):
        # short preconditioned runs: every iterate must coincide
        tau = 5e-4  # mass-dominated step: the preconditioner is near-exact
        x, y = sf.build_direction_sets(sf.CAP_DOMAIN, 1, 8, D, lumped=True)
        op, _ = sf.parabolic_operator(x, y, 1.0, tau, lumped=lumped)
        pre = sf.make_preconditioner("parabolic", x, y, d_u=1.0, tau=tau,
                                     lumped=lumped)
        rhs = rng.standard_normal(op.shape)
        stop = relative_residual(1e-10)
        rep_m = sf.mo_pcg(op, rhs, precond=pre, stop=stop, record_iterates=True)
        rep_v = vector_pcg(to_kronecker(op), vec(rhs),
                           P=pre.as_kronecker(op.shape), stop=stop,
                           record_iterates=True)
        assert rep_m.iterations <= 12
        # the runs may disagree by one iteration right at the tolerance edge
        assert abs(rep_m.iterations - rep_v.iterations) <= 1
        for a, b in zip(rep_m.diagnostics["iterates"],
                        rep_v.diagnostics["iterates"]):
            scale = max(np.linalg.norm(b), 1e-30)
            assert np.linalg.norm(vec(a) - b) <= 1e-10 * scale

    @pytest.mark.parametrize("name,bc", [("cap", D), ("jar", D), ("square", D)])
    def test_matches_vector_pcg_long_run(self, name, bc, rng):
        # longer elliptic runs: early iterates coincide tightly; rounding
        # then drives the trajectories apart before both land on the answer
        _, x, y, op, _ = build_problem_operator(1, 8, name, bc)
        rhs = rng.standard_normal(op.shape)
        pre = sf.make_preconditioner(
            "elliptic_square" if name == "square" else "elliptic_xnormal", x, y)
        stop = relative_residual(1e-10)
        rep_m = sf.mo_pcg(op, rhs, precond=pre, stop=stop, record_iterates=True)
        rep_v = vector_pcg(to_kronecker(op), vec(rhs),
                           P=pre.as_kronecker(op.shape), stop=stop,
                           record_iterates=True)
        assert abs(rep_m.iterations - rep_v.iterations) <= 1
        for a, b in list(zip(rep_m.diagnostics["iterates"],
                             rep_v.diagnostics["iterates"]))[:8]:
            scale = max(np.linalg.norm(b), 1e-30)
            assert np.linalg.norm(vec(a) - b) <= 1e-10 * scale
        final_v = rep_v.diagnostics["iterates"][-1]
        assert np.linalg.norm(vec(rep_m.solution) - final_v) \
            <= 1e-8 * np.linalg.norm(final_v)


class TestDirect:
    def test_identity_returns_rhs(self, rng):
        q = 5
        op = SylvesterOperator([(np.eye(q), np.eye(q))],
                               symmetric=True, positive_definite=True)
        rhs = rng.standard_normal((q, q))
        rep = sf.solve_direct(op, rhs)
        assert np.allclose(rep.solution, rhs, atol=1e-13)

    def test_residual_tight(self, rng):
        _, _, _, op, _ = build_problem_operator(2, 16, "jar", NBC)
        rep = sf.solve_direct(op, rng.standard_normal(op.shape))
        assert rep.residual_history[-1] <= 1e-11

    def test_agrees_with_reduced_on_square(self):
        _, _, op, _, rhs = square_poisson_pieces(3, 12)
        a = sf.solve_direct(op, rhs).solution
        b = sf.solve_reduced(op, rhs).solution
        assert np.linalg.norm(a - b) <= 1e-10 * np.linalg.norm(a)

    def test_agrees_with_pcg_small(self, rng):
        _, x, y, op, _ = build_problem_operator(1, 16, "cap", D)
        rhs = rng.standard_normal(op.shape)
        pre = sf.make_preconditioner("elliptic_xnormal", x, y)
        a = sf.solve_direct(op, rhs).solution
        b = sf.mo_pcg(op, rhs, precond=pre, stop=relative_residual(1e-12),
                      max_iter=500).solution
        assert np.linalg.norm(a - b) <= 1e-9 * np.linalg.norm(a)

    def test_singular_detected(self):
        x, y = sf.build_direction_sets(sf.SQUARE, 1, 8, NBC)
        A, M = x.mats.A, x.mats.M
        op = SylvesterOperator([(A, M), (M, A)], symmetric=True,
                               positive_definite=False)
        with pytest.raises(SolverError):
            sf.solve_direct(op, np.ones(op.shape))


class TestStoppingRules:
    def test_descriptions(self):
        assert "R_0" in relative_residual(1e-8).describe()
        assert increment_threshold(0.5).kind == "increment"
        assert reference_increment(2.0).value == pytest.approx(0.1)
        assert sf.timestep_residual(0.01).value == 0.01
