import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from rhg import numerics
from rhg.scenarios import ILLUSTRATIVE_A

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def sym(n):
    return arrays(float, (n, n), elements=finite).map(lambda a: 0.5 * (a + a.T))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8).flatmap(sym))
def test_jacobi_matches_lapack(S):
    dec = numerics.sym_eigen(S)
    np.testing.assert_allclose(dec.eigenvalues, np.linalg.eigvalsh(S), atol=1e-9 * max(1, np.abs(S).max()))
    np.testing.assert_allclose(dec.reconstruct(), S, atol=1e-9 * max(1, np.abs(S).max()))
    np.testing.assert_allclose(dec.eigenvectors.T @ dec.eigenvectors, np.eye(S.shape[0]), atol=1e-10)


def test_jacobi_large_matrix_residual():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(60, 60))
    S = X + X.T
    dec = numerics.sym_eigen(S)
    assert np.abs(dec.reconstruct() - S).max() < 1e-11


def test_repeated_eigenvalues_and_diagonal_input():
    dec = numerics.sym_eigen(np.diag([3.0, 1.0, 3.0]))
    np.testing.assert_array_equal(dec.eigenvalues, [1.0, 3.0, 3.0])
    assert numerics.lambda_min(np.eye(4) * 2.5) == 2.5


def test_asymmetric_input_rejected():
    with pytest.raises(numerics.SymmetryError):
        numerics.sym_eigen(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_non_square_rejected():
    with pytest.raises(numerics.DimensionError):
        numerics.sym_eigen(np.ones((2, 3)))


def test_spectral_radius_of_the_two_agent_example():
    assert numerics.spectral_radius(ILLUSTRATIVE_A[0]) == pytest.approx(0.954, abs=1e-3)
    assert numerics.spectral_radius(ILLUSTRATIVE_A[1]) == pytest.approx(0.727, abs=1e-3)


@pytest.mark.parametrize("A, rho", [
    (np.array([[0.0, -0.9], [0.9, 0.0]]), 0.9),        # complex pair
    (np.diag([0.5, -0.5]), 0.5),                        # equal modulus, opposite sign
    (np.array([[0.3, 1.0], [0.0, 0.3]]), 0.3),          # Jordan block
    (np.zeros((3, 3)), 0.0),
])
def test_spectral_radius_hard_cases(A, rho):
    assert numerics.spectral_radius(A) == pytest.approx(rho, abs=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6).flatmap(lambda n: arrays(float, (n, n), elements=st.floats(-2, 2))))
def test_spectral_radius_matches_eigvals(A):
    expected = np.abs(np.linalg.eigvals(A)).max()
    assert numerics.spectral_radius(A) == pytest.approx(expected, rel=1e-5, abs=1e-7)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 7).flatmap(lambda n: st.tuples(arrays(float, (n, n), elements=finite),
                                                    arrays(float, (n,), elements=finite))))
def test_solve_linear_against_numpy(Ab):
    A, b = Ab
    A = A + 25.0 * np.eye(A.shape[0])   # well conditioned
    np.testing.assert_allclose(numerics.solve_linear(A, b), np.linalg.solve(A, b), rtol=1e-9, atol=1e-9)


def test_solve_linear_matrix_rhs():
    A = np.array([[4.0, 1.0], [2.0, 3.0]])
    B = np.eye(2)
    np.testing.assert_allclose(numerics.solve_linear(A, B), np.linalg.inv(A))


def test_singular_and_ill_conditioned_raise_with_estimate():
    with pytest.raises(numerics.SingularMatrixError):
        numerics.solve_linear(np.array([[1.0, 2.0], [2.0, 4.0]]), np.ones(2))
    with pytest.raises(numerics.SingularMatrixError) as info:
        numerics.solve_linear(np.array([[1.0, 1.0], [1.0, 1.0 + 1e-14]]), np.ones(2))
    assert info.value.condition > 1e12


def test_two_norm():
    rng = np.random.default_rng(3)
    M = rng.normal(size=(5, 3))
    assert numerics.two_norm(M) == pytest.approx(np.linalg.norm(M, 2), rel=1e-10)
    assert numerics.two_norm(M.T) == pytest.approx(np.linalg.norm(M, 2), rel=1e-10)
