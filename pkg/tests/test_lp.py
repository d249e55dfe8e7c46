import itertools

import numpy as np
import pytest
import scipy.sparse as sp

from radcal.convex import build_c_estimation_lp
from radcal.errors import InvalidInputError
from radcal.forward import RadialGeometry
from radcal.landscape import BoxPrior, GridSpec
from radcal.lp import (
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    LinearProgram,
    SimplexOptions,
    primal_residual,
    read_mps,
    solve_lp,
    to_mps,
)


def _random_lp(rng, nv, n_ub=3):
    """``min c x`` over ``A x <= b``, ``0 <= x <= 10`` with a feasible interior point."""
    a = rng.normal(size=(n_ub, nv))
    x0 = rng.uniform(0.5, 2.0, nv)
    b = a @ x0 + rng.uniform(0.1, 1.0, n_ub)
    a = np.vstack([a, np.eye(nv)])
    b = np.concatenate([b, np.full(nv, 10.0)])
    return LinearProgram(objective=rng.normal(size=nv), a_ub=a, b_ub=b)


def _enumerate_vertices(lp):
    a = lp.a_ub.toarray()
    nv = lp.n_vars
    rows = np.vstack([a, -np.eye(nv)])
    rhs = np.concatenate([lp.b_ub, np.zeros(nv)])
    best = np.inf
    for active in itertools.combinations(range(rows.shape[0]), nv):
        sub = rows[list(active)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        x = np.linalg.solve(sub, rhs[list(active)])
        if np.all(rows @ x <= rhs + 1e-9):
            best = min(best, float(lp.objective @ x))
    return best


def test_single_variable_maximum():
    lp = LinearProgram(objective=[1.0], a_ub=[[1.0]], b_ub=[1.0], maximize=True)
    sol = solve_lp(lp)
    assert sol.status == OPTIMAL
    assert sol.values[0] == pytest.approx(1.0, abs=1e-12)
    assert sol.objective == pytest.approx(1.0, abs=1e-12)


def test_infeasible_and_unbounded():
    assert solve_lp(LinearProgram(objective=[1.0], a_ub=[[1.0]], b_ub=[-1.0])).status == INFEASIBLE
    assert solve_lp(LinearProgram(objective=[-1.0], a_ub=[[-1.0]], b_ub=[1.0])).status == UNBOUNDED
    assert solve_lp(LinearProgram(objective=[-1.0])).status == UNBOUNDED


def test_equality_and_free_variables():
    # min x1 + x2  s.t.  x1 - x2 = 3,  x2 free, x1 >= 0, x1 <= 5
    lp = LinearProgram(
        objective=[1.0, 1.0], a_eq=[[1.0, -1.0]], b_eq=[3.0], a_ub=[[1.0, 0.0]], b_ub=[5.0], free=[False, True]
    )
    sol = solve_lp(lp)
    assert sol.status == OPTIMAL
    np.testing.assert_allclose(sol.values, [0.0, -3.0], atol=1e-10)


def test_random_lps_match_vertex_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(40):
        lp = _random_lp(rng, int(rng.integers(2, 6)))
        sol = solve_lp(lp)
        assert sol.status == OPTIMAL
        assert sol.objective == pytest.approx(_enumerate_vertices(lp), abs=1e-9)
        assert primal_residual(lp, sol.values) <= 1e-9


def test_twelve_variables_match_highs():
    rng = np.random.default_rng(1)
    for _ in range(10):
        lp = _random_lp(rng, 12, n_ub=8)
        ours, ref = solve_lp(lp), solve_lp(lp, backend="highs")
        assert ours.status == ref.status == OPTIMAL
        assert ours.objective == pytest.approx(ref.objective, abs=1e-9)


def test_duals_satisfy_complementary_slackness_and_strong_duality():
    rng = np.random.default_rng(2)
    for _ in range(20):
        lp = _random_lp(rng, 4)
        sol = solve_lp(lp)
        y = sol.duals
        slack = lp.b_ub - lp.a_ub @ sol.values
        assert np.max(np.abs(y * slack)) <= 1e-8
        assert float(lp.b_ub @ y) == pytest.approx(sol.objective, abs=1e-8)
        reduced = lp.objective - lp.a_ub.T @ y
        assert np.max(np.abs(reduced * sol.values)) <= 1e-8


def test_deterministic_solution():
    rng = np.random.default_rng(3)
    lp = _random_lp(rng, 6)
    a, b = solve_lp(lp), solve_lp(lp)
    np.testing.assert_array_equal(a.values, b.values)
    assert a.iterations == b.iterations


def test_perturbation_can_be_disabled():
    rng = np.random.default_rng(4)
    lp = _random_lp(rng, 5)
    plain = solve_lp(lp, opts=SimplexOptions(perturbation=0.0))
    assert plain.objective == pytest.approx(solve_lp(lp).objective, abs=1e-9)


def test_mps_round_trip():
    rng = np.random.default_rng(5)
    lp = LinearProgram(
        objective=rng.normal(size=3),
        a_eq=sp.csr_matrix([[1.0, 1 / 3, 0.0]]),
        b_eq=[0.1],
        a_ub=[[1.0, 0.0, 2.0], [0.0, -1.0, 1e-17]],
        b_ub=[4.0, 2.0],
        free=[False, True, False],
        maximize=True,
    )
    back = read_mps(to_mps(lp))
    np.testing.assert_array_equal(back.objective, lp.objective)
    np.testing.assert_array_equal(back.a_eq.toarray(), lp.a_eq.toarray())
    np.testing.assert_array_equal(back.a_ub.toarray(), lp.a_ub.toarray())
    np.testing.assert_array_equal(back.b_ub, lp.b_ub)
    np.testing.assert_array_equal(back.free, lp.free)
    assert back.maximize


def test_malformed_programs_rejected():
    with pytest.raises(InvalidInputError):
        LinearProgram(objective=[1.0, 2.0], a_ub=[[1.0]], b_ub=[1.0])
    with pytest.raises(InvalidInputError):
        LinearProgram(objective=[np.inf])
    with pytest.raises(InvalidInputError):
        solve_lp(LinearProgram(objective=[1.0]), backend="nope")


def test_weight_lp_agrees_with_highs():
    box = BoxPrior(0.75, 1.25)
    lp = build_c_estimation_lp(RadialGeometry.uniform(3), box, GridSpec(5, box), 5)
    ours, ref = solve_lp(lp), solve_lp(lp, backend="highs")
    assert ours.status == ref.status == OPTIMAL
    assert ours.objective == pytest.approx(ref.objective, rel=1e-6)
    assert primal_residual(lp, ours.values) <= 1e-9
