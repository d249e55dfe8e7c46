import numpy as np
import pytest

from radcal import autodiff as ad
from radcal.errors import InvalidInputError, NumericalFailure
from radcal.forward import RadialGeometry, analytic_jacobian, eigenvalues, forward_map
from radcal.landscape import least_squares_gradient

TWO = RadialGeometry.uniform(2)


def test_jacobian_of_forward_map_at_one():
    jac = ad.jacobian(lambda s: eigenvalues(TWO, s, 2), [1.0, 1.0])
    np.testing.assert_allclose(jac, [[-0.75, -0.25], [-15 / 32, -1 / 32]], rtol=1e-14)


def test_jacobian_identity_and_constant():
    np.testing.assert_array_equal(ad.jacobian(lambda s: s[0] + 0 * s[1], [2.0, 3.0])[:, 0], [1.0])
    np.testing.assert_array_equal(ad.jacobian(lambda s: 5.0, [1.0, 2.0]), np.zeros((1, 2)))


def test_jacobian_agrees_with_analytic_and_fd():
    rng = np.random.default_rng(0)
    geom = RadialGeometry.uniform(5)
    s = rng.uniform(0.5, 1.5, 5)
    f = lambda x: eigenvalues(geom, x, 7)  # noqa: E731
    jac = analytic_jacobian(geom, s, 7)
    np.testing.assert_allclose(ad.jacobian(f, s), jac, rtol=1e-11)
    scale = np.max(np.abs(jac), axis=1, keepdims=True)
    assert np.max(np.abs(ad.finite_difference_jacobian(f, s) - jac) / scale) <= 1e-6


def test_hessian_single_annulus_closed_form():
    for s in (0.5, 1.0, 2.0):
        h = ad.hessian(lambda x: eigenvalues(RadialGeometry.uniform(1), x, 1).sum(), [s])
        assert h[0, 0] == pytest.approx(2 / s**3, rel=1e-14)


def test_hessian_is_gauss_newton_at_zero_residual():
    rng = np.random.default_rng(1)
    geom = RadialGeometry.uniform(3)
    st = rng.uniform(0.5, 1.5, 3)
    y = forward_map(geom, st, 5)

    def f(x):
        r = eigenvalues(geom, x, 5) - y
        return 0.5 * (r * r).sum()

    jac = analytic_jacobian(geom, st, 5)
    np.testing.assert_allclose(ad.hessian(f, st), jac.T @ jac, rtol=1e-10, atol=1e-16)


def test_hessian_raw_is_nearly_symmetric():
    rng = np.random.default_rng(2)
    geom = RadialGeometry.uniform(4)
    x = rng.uniform(0.5, 1.5, 4)
    y = forward_map(geom, rng.uniform(0.5, 1.5, 4), 6)

    def f(s):
        r = eigenvalues(geom, s, 6) - y
        return 0.5 * (r * r).sum()

    h = ad.hessian(f, x, raw=True)
    assert np.max(np.abs(h - h.T)) <= 1e-13 * np.max(np.abs(h))


def test_hessian_rejects_vector_functions():
    with pytest.raises(InvalidInputError):
        ad.hessian(lambda s: eigenvalues(TWO, s, 2), [1.0, 1.0])


def test_taylor2_matches_separate_calls():
    rng = np.random.default_rng(3)
    geom = RadialGeometry.uniform(3)
    x = rng.uniform(0.5, 1.5, 3)
    f = lambda s: eigenvalues(geom, s, 4)  # noqa: E731
    value, jac, hess = ad.taylor2(f, x)
    np.testing.assert_allclose(value, forward_map(geom, x, 4), rtol=1e-15)
    np.testing.assert_allclose(jac, analytic_jacobian(geom, x, 4), rtol=1e-11)
    for j in range(4):
        unit = np.eye(4)[j]
        hj = ad.hessian(lambda s: (eigenvalues(geom, s, 4) * unit).sum(), x)
        np.testing.assert_allclose(hess[j], hj, rtol=1e-11, atol=1e-300)


def test_gradient_of_objective_matches_formula():
    rng = np.random.default_rng(4)
    geom = RadialGeometry.uniform(3)
    x = rng.uniform(0.5, 1.5, 3)
    y = forward_map(geom, rng.uniform(0.5, 1.5, 3), 5)

    def f(s):
        r = eigenvalues(geom, s, 5) - y
        return 0.5 * (r * r).sum()

    np.testing.assert_allclose(ad.gradient(f, x), least_squares_gradient(geom, x, y), rtol=1e-11)


def test_derivative_scalar():
    assert ad.derivative(lambda x: x * x * x, 2.0) == pytest.approx(12.0)
    assert ad.derivative(lambda x: 3.0, 2.0) == 0.0


def test_finite_difference_linear_exact_and_second_order():
    a = np.array([[1.0, 2.0], [3.0, -1.0]])
    np.testing.assert_allclose(ad.finite_difference_jacobian(lambda x: a @ x, [0.3, 0.7]), a, rtol=1e-9)
    f = lambda x: np.exp(x)  # noqa: E731
    e1 = abs(ad.finite_difference_jacobian(f, [0.5], step=1e-2)[0, 0] - np.exp(0.5))
    e2 = abs(ad.finite_difference_jacobian(f, [0.5], step=5e-3)[0, 0] - np.exp(0.5))
    assert e1 / e2 == pytest.approx(4.0, rel=0.05)


def test_finite_difference_at_one_matches_harmonic():
    fd = ad.finite_difference_jacobian(lambda s: forward_map(TWO, s, 2), [1.0, 1.0])
    np.testing.assert_allclose(fd, [[-0.75, -0.25], [-15 / 32, -1 / 32]], rtol=1e-8)


def test_finite_difference_rejects_bad_step():
    with pytest.raises(InvalidInputError):
        ad.finite_difference_jacobian(lambda x: x, [1.0], step=0.0)


def test_non_finite_derivative_reports_indices():
    with np.errstate(all="ignore"):
        with pytest.raises(NumericalFailure) as info:
            ad.jacobian(lambda x: 1.0 / x[0] + x[1], [0.0, 1.0])
    assert info.value.indices is not None


def test_evaluation_point_validation():
    with pytest.raises(InvalidInputError):
        ad.jacobian(lambda x: x, [])
