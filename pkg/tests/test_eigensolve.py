import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st
from hypothesis.extra.numpy import arrays

from perturbiga.assembly import assemble
from perturbiga.eigensolve import max_eigenpair, refine_eigenpair, solve_gevp
from perturbiga.errors import ConvergenceError, NotSPDError
from perturbiga.multipatch import SECOND, ProblemKind, build_space_1d

from .oracles import jacobi_gevp


def random_pair(rng, n):
    A = rng.standard_normal((n, n))
    B = rng.standard_normal((n, n))
    return A + A.T, B @ B.T + n * np.eye(n)


class TestSolveGEVP:
    def test_diagonal(self):
        s = solve_gevp(np.diag([4.0, 1.0, 9.0]), np.diag([1.0, 1.0, 1.0]))
        np.testing.assert_allclose(s.eigenvalues, [1.0, 4.0, 9.0])
        np.testing.assert_allclose(s.frequencies, [1.0, 2.0, 3.0])

    def test_fifty_random_pairs_against_jacobi(self):
        rng = np.random.default_rng(2024)
        for _ in range(50):
            n = int(rng.integers(1, 9))
            K, M = random_pair(rng, n)
            lam = solve_gevp(K, M).eigenvalues
            ref = jacobi_gevp(K, M)
            assert np.abs(lam - ref).max() <= 1e-10 * np.abs(ref).max()

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 8).flatmap(lambda n: arrays(np.float64, (2, n, n), elements=st.floats(-3, 3))))
    def test_residual_and_orthonormality(self, AB):
        A, B = AB
        n = A.shape[0]
        K, M = A + A.T, B @ B.T + np.eye(n)
        s = solve_gevp(K, M)
        assert s.residuals(K, M).max() < 1e-10
        assert s.orthonormality_error(M) < 1e-10
        assert np.all(np.diff(s.eigenvalues) >= 0)

    def test_not_spd(self):
        with pytest.raises(NotSPDError):
            solve_gevp(np.eye(2), np.diag([1.0, -1.0]))

    def test_eigenvalues_only(self):
        K, M = random_pair(np.random.default_rng(1), 5)
        s = solve_gevp(K, M, vectors=False)
        np.testing.assert_allclose(s.eigenvalues, solve_gevp(K, M).eigenvalues, rtol=1e-12)


class TestMaxEigenpair:
    def test_matches_dense_on_bar(self):
        ops = assemble(build_space_1d(ProblemKind(SECOND, "dirichlet_fixed"), 3, 2, 10))
        w, v = max_eigenpair(ops.K, ops.M)
        ref = solve_gevp(ops.K, ops.M).frequencies[-1]
        assert abs(w - ref) <= 1e-8 * ref
        assert abs(v @ ops.M @ v - 1.0) < 1e-12

    def test_budget_exhaustion(self):
        K = np.diag([1.0, 2.0, 2.0 - 1e-9])
        with pytest.raises(ConvergenceError) as ei:
            max_eigenpair(K, np.eye(3), tol=1e-16, max_iters=3)
        assert ei.value.last is not None

    def test_refine_recovers_eigenvalue(self):
        K, M = random_pair(np.random.default_rng(5), 6)
        K = K + 20 * M  # positive definite stiffness
        s = solve_gevp(K, M)
        v = s.eigenvectors[:, 2] + 1e-4 * np.random.default_rng(0).standard_normal(6)
        lam, _ = refine_eigenpair(K, M, v)
        assert abs(lam - s.eigenvalues[2]) <= 1e-12 * abs(s.eigenvalues[2])
