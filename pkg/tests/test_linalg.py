import itertools

import numpy as np
import pytest

from radcal.errors import InvalidInputError, SingularMatrixError
from radcal.linalg import cholesky, cholesky_solve, jacobi_svd, lu_det, lu_solve

HARMONIC_2 = np.array([[-0.75, -0.25], [-15 / 32, -1 / 32]])


def _cofactor_det(a):
    n = a.shape[0]
    total = 0.0
    for perm in itertools.permutations(range(n)):
        inversions = sum(p > q for i, p in enumerate(perm) for q in perm[i + 1:])
        total += (-1) ** inversions * np.prod([a[i, perm[i]] for i in range(n)])
    return total


def test_lu_det_harmonic_2x2():
    assert lu_det(HARMONIC_2) == pytest.approx(-3 / 32, rel=1e-15)


def test_lu_det_matches_cofactor_expansion():
    rng = np.random.default_rng(0)
    for n in range(1, 5):
        for _ in range(20):
            a = rng.normal(size=(n, n))
            ref = _cofactor_det(a)
            assert abs(lu_det(a) - ref) <= 1e-12 * max(abs(ref), 1e-300) + 1e-15


def test_lu_det_batched_and_singular():
    rng = np.random.default_rng(1)
    stack = rng.normal(size=(7, 3, 3))
    np.testing.assert_allclose(lu_det(stack), np.linalg.det(stack), rtol=1e-12)
    assert lu_det(np.array([[1.0, 2.0], [2.0, 4.0]])) == 0.0
    assert lu_det(np.zeros((0, 0))) == 1.0


def test_lu_det_rejects_non_square():
    with pytest.raises(InvalidInputError):
        lu_det(np.ones((2, 3)))


def test_lu_solve_identity_diagonal_and_random():
    b = np.array([1.0, -2.0, 3.0])
    np.testing.assert_array_equal(lu_solve(np.eye(3), b), b)
    np.testing.assert_allclose(lu_solve(2 * np.eye(3), b), b / 2)
    rng = np.random.default_rng(2)
    a = rng.normal(size=(6, 6))
    rhs = rng.normal(size=(6, 2))
    np.testing.assert_allclose(a @ lu_solve(a, rhs), rhs, atol=1e-12)


def test_lu_solve_singular_reports_pivot():
    with pytest.raises(SingularMatrixError) as info:
        lu_solve(np.array([[1.0, 2.0], [2.0, 4.0]]), np.ones(2))
    assert info.value.indices is not None


def test_cholesky_hand_factorisation():
    np.testing.assert_array_equal(cholesky(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(cholesky(np.array([[4.0, 2.0], [2.0, 2.0]])), [[2.0, 0.0], [1.0, 1.0]])


def test_cholesky_spd_flag():
    hilbert = 1.0 / (np.arange(4)[:, None] + np.arange(4)[None, :] + 1.0)
    assert cholesky(hilbert) is not None
    assert cholesky(np.array([[1.0, 2.0], [2.0, 1.0]])) is None


def test_cholesky_solve_matches_lu():
    rng = np.random.default_rng(3)
    q = rng.normal(size=(5, 5))
    a = q @ q.T + 5 * np.eye(5)
    b = rng.normal(size=5)
    np.testing.assert_allclose(cholesky_solve(cholesky(a), b), lu_solve(a, b), rtol=1e-10)


def test_jacobi_svd_harmonic_product():
    sv = jacobi_svd(HARMONIC_2)
    assert np.prod(sv) == pytest.approx(3 / 32, rel=1e-14)


def test_jacobi_svd_against_normal_equations():
    rng = np.random.default_rng(4)
    a = rng.normal(size=(5, 3))
    ev = np.sort(np.linalg.eigvalsh(a.T @ a))[::-1]
    np.testing.assert_allclose(jacobi_svd(a), np.sqrt(ev), rtol=1e-8)


def test_det_is_product_of_singular_values():
    rng = np.random.default_rng(5)
    for n in range(1, 9):
        a = rng.normal(size=(n, n))
        assert abs(lu_det(a)) == pytest.approx(np.prod(jacobi_svd(a)), rel=1e-8)


def test_jacobi_svd_keeps_small_values_of_graded_matrices():
    # columns scaled over twelve orders; numpy's SVD is the reference
    rng = np.random.default_rng(6)
    a = rng.normal(size=(6, 6)) * 10.0 ** -np.arange(0, 12, 2)
    np.testing.assert_allclose(jacobi_svd(a), np.linalg.svd(a, compute_uv=False), rtol=1e-10)
