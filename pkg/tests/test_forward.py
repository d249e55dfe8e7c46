import json

import numpy as np
import pytest

from radcal.errors import InvalidInputError
from radcal.forward import (
    RadialGeometry,
    analytic_jacobian,
    dumps_vector,
    eigenvalues,
    forward_map,
    loads_vector,
    potential_coefficients,
    solve_potential_system,
    transfer_coefficients,
)

TWO = RadialGeometry.uniform(2)  # r_1 = 0.5


def test_uniform_geometry_radii():
    assert RadialGeometry.uniform(4).radii == (1.0, 0.75, 0.5, 0.25, 0.0)
    assert TWO.n == 2


@pytest.mark.parametrize("radii", [(1.0,), (0.9, 0.0), (1.0, 0.5, 0.1), (1.0, 0.5, 0.6, 0.0)])
def test_bad_geometry_rejected(radii):
    with pytest.raises(InvalidInputError):
        RadialGeometry(radii)


def test_transfer_coefficient_by_hand():
    tc = transfer_coefficients(TWO, [1.0, 3.0], 1)
    assert tc.rho[0] == pytest.approx(-0.5, abs=1e-16)
    assert tc.C[0, 0] == pytest.approx(-0.125, abs=1e-16)
    assert tc.C[1, 0] == 0.0


def test_eigenvalue_by_hand():
    lam = forward_map(TWO, [1.0, 3.0], 1)
    assert lam[0] == pytest.approx(7 / 9, rel=1e-15)
    pc = solve_potential_system(TWO, np.array([1.0, 3.0]), 1)
    assert pc.alpha[0, 0] + pc.beta[0, 0] == pytest.approx(7 / 9, rel=1e-14)


def test_constant_conductivity_closed_form():
    j = np.arange(1, 21)
    for n in (1, 3, 8):
        lam = forward_map(RadialGeometry.uniform(n), np.full(n, 1.5), 20)
        np.testing.assert_allclose(lam, 1.0 / (1.5 * j), rtol=1e-14)


def test_transfer_coefficients_match_linear_system():
    rng = np.random.default_rng(0)
    geom = RadialGeometry.uniform(3)
    s = rng.uniform(0.5, 1.5, 3)
    tc = transfer_coefficients(geom, s, 6)
    pc = solve_potential_system(geom, s, 6)
    ratio = pc.beta[:-1] / pc.alpha[:-1]
    assert np.max(np.abs(ratio - tc.C[:-1])) <= 1e-12


def test_potential_coefficients_match_linear_system():
    rng = np.random.default_rng(1)
    for n in range(1, 7):
        geom = RadialGeometry.uniform(n)
        s = rng.uniform(0.5, 1.5, n)
        rec = potential_coefficients(geom, s, 5)
        sys_ = solve_potential_system(geom, s, 5)
        np.testing.assert_allclose(rec.alpha, sys_.alpha, rtol=1e-11)
        np.testing.assert_allclose(rec.beta[:-1], sys_.beta[:-1], rtol=1e-11, atol=1e-300)


def test_batched_forward_map_matches_loop():
    rng = np.random.default_rng(2)
    geom = RadialGeometry.uniform(4)
    batch = rng.uniform(0.5, 1.5, (3, 5, 4))
    out = forward_map(geom, batch, 7)
    assert out.shape == (3, 5, 7)
    np.testing.assert_array_equal(out[1, 2], forward_map(geom, batch[1, 2], 7))


def test_scalar_recurrence_agrees_with_vectorised():
    rng = np.random.default_rng(3)
    geom = RadialGeometry.uniform(5)
    s = rng.uniform(0.5, 1.5, 5)
    np.testing.assert_allclose(eigenvalues(geom, list(s), 9), forward_map(geom, s, 9), rtol=1e-15)


def test_harmonic_jacobian_two_annuli():
    jac = analytic_jacobian(TWO, [1.0, 1.0], 2)
    np.testing.assert_allclose(jac, [[-0.75, -0.25], [-15 / 32, -1 / 32]], rtol=1e-14)
    assert np.linalg.det(jac) == pytest.approx(-3 / 32, rel=1e-13)


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(4)
    geom = RadialGeometry.uniform(4)
    s = rng.uniform(0.5, 1.5, 4)
    jac = analytic_jacobian(geom, s, 6)
    h = 1e-6
    for i in range(4):
        e = np.zeros(4)
        e[i] = h
        fd = (forward_map(geom, s + e, 6) - forward_map(geom, s - e, 6)) / (2 * h)
        np.testing.assert_allclose(fd, jac[:, i], rtol=1e-5, atol=1e-9 * np.max(np.abs(jac)))


@pytest.mark.parametrize("sigma", [[1.0, 0.0], [1.0, -1.0], [1.0, np.nan], [1.0, 1.0, 1.0]])
def test_invalid_conductivity_rejected(sigma):
    with pytest.raises(InvalidInputError):
        forward_map(TWO, sigma, 2)


@pytest.mark.parametrize("m", [0, 2.5, 65])
def test_invalid_measurement_count_rejected(m):
    with pytest.raises(InvalidInputError):
        forward_map(TWO, [1.0, 1.0], m)


def test_vector_round_trip():
    v = np.array([1 / 3, 1e-300, 2.5])
    text = dumps_vector(v)
    assert json.loads(text) == list(v)
    np.testing.assert_array_equal(loads_vector(text), v)
