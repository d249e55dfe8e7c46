import numpy as np
import pytest

from radcal.convex import (
    build_c_estimation_lp,
    check_kkt,
    check_weight,
    error_histogram,
    estimate_c,
    handcrafted_weights,
    solve_pc,
    validate_weight,
)
from radcal.errors import InvalidInputError
from radcal.forward import RadialGeometry, forward_map
from radcal.landscape import BoxPrior, GridSpec
from radcal.lp import OPTIMAL, solve_lp

WIDE = BoxPrior(0.5, 1.5)
TWO = RadialGeometry.uniform(2)


@pytest.fixture(scope="module")
def weight_two():
    est = estimate_c(TWO, WIDE, GridSpec(5, WIDE), m_start=2)
    assert est.status == OPTIMAL
    return est


def test_lp_layout_and_elimination():
    lp = build_c_estimation_lp(TWO, WIDE, GridSpec(5, WIDE), 3)
    assert lp.names[:2] == ["c_1", "c_2"]
    # 24 points, 3 measurement multipliers each, one bound multiplier per coordinate at a or b
    n_bounds = sum(name.startswith(("lam_", "mu_")) for name in lp.names)
    assert n_bounds == 2 * (2 * 5) - 2
    assert lp.a_eq.shape == (24 * 2 + 1, 2 + 24 * 3 + n_bounds)
    assert lp.maximize and lp.objective[1] == 1.0


def test_minimal_m_for_two_annuli(weight_two):
    assert weight_two.m_used == 3
    assert weight_two.c[0] == 1.0
    assert weight_two.smallest_coefficient == pytest.approx(7.8e-2, rel=0.1)
    assert [h[1] for h in weight_two.history] == ["infeasible", OPTIMAL]
    assert solve_lp(build_c_estimation_lp(TWO, WIDE, GridSpec(5, WIDE), 2)).status == "infeasible"


def test_single_annulus_needs_one_measurement():
    est = estimate_c(RadialGeometry.uniform(1), WIDE, GridSpec(5, WIDE))
    assert est.status == OPTIMAL and est.m_used == 1
    np.testing.assert_array_equal(est.c, [1.0])


def test_narrow_box_two_annuli():
    box = BoxPrior(0.75, 1.25)
    est = estimate_c(TWO, box, GridSpec(5, box))
    assert est.m_used == 2
    assert est.smallest_coefficient == pytest.approx(1.8e-1, rel=0.1)


def test_estimate_reports_cap():
    est = estimate_c(RadialGeometry.uniform(3), WIDE, GridSpec(5, WIDE), m_start=3, m_cap=4)
    assert est.status == "m_cap_exceeded"
    assert np.all(np.isnan(est.c))


def test_weight_validation():
    np.testing.assert_allclose(handcrafted_weights(3, -4.0), [1.0, 1e-2, 1e-4])
    with pytest.raises(InvalidInputError):
        check_weight([0.0, 1.0], 2)
    with pytest.raises(InvalidInputError):
        check_weight([1.0, -0.1], 2)
    with pytest.raises(InvalidInputError):
        check_weight([1.0], 2)


def test_boundary_case_returns_upper_corner(weight_two):
    y = forward_map(TWO, [1.5, 1.5], 3)
    rep = solve_pc(TWO, WIDE, weight_two.c, y)
    assert rep.diagnostics["boundary_case"]
    np.testing.assert_array_equal(rep.iterate, [1.5, 1.5])
    cert = check_kkt(TWO, WIDE, weight_two.c, rep.iterate, y)
    assert cert.accepted()
    assert np.all(cert.mu >= 0)


def test_noiseless_recovery_and_feasibility(weight_two):
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        st = WIDE.sample(rng, 2)
        y = forward_map(TWO, st, 3)
        rep = solve_pc(TWO, WIDE, weight_two.c, y)
        x = rep.iterate
        assert np.all(forward_map(TWO, x, 3) <= y + 1e-9)
        assert np.all((x >= WIDE.a - 1e-9) & (x <= WIDE.b + 1e-9))
        path = rep.diagnostics["path_objective"]
        assert np.all(np.diff(path) <= 1e-12)
        worst = max(worst, float(np.max(np.abs(x - st))))
    assert worst <= 1e-5


def test_kkt_certificate_at_truth(weight_two):
    rng = np.random.default_rng(1)
    for _ in range(10):
        st = WIDE.sample(rng, 2)
        cert = check_kkt(TWO, WIDE, weight_two.c, st, forward_map(TWO, st, 3))
        assert cert.stationarity_residual_inf <= 1e-7
        assert cert.complementarity_residual_inf <= 1e-7
        assert np.all(cert.z >= 0)


def test_kkt_interior_point_without_active_constraints():
    c = np.array([1.0, 0.25])
    x = np.array([1.0, 1.0])
    y = forward_map(TWO, x, 3) + 0.1
    cert = check_kkt(TWO, WIDE, c, x, y)
    # nothing can cancel c, so the residual is its largest entry
    assert cert.stationarity_residual_inf == pytest.approx(np.max(c))
    assert not cert.accepted()


def test_solve_pc_input_checks():
    with pytest.raises(InvalidInputError):
        solve_pc(TWO, WIDE, [1.0, -1.0], np.ones(3))


def test_validate_weight_report(weight_two):
    rep = validate_weight(TWO, WIDE, weight_two.c, 3, trials=20, seed=2)
    assert rep.failure_fraction == 0.0
    assert rep.failure_threshold == pytest.approx(0.5 / 3)
    assert rep.counts.sum() == 20
    lines = rep.histogram_csv().splitlines()
    assert lines[0] == "error,count" and len(lines) == 65
    assert rep.median_error <= rep.failure_threshold


def test_error_histogram_clips_to_end_bins():
    counts = error_histogram([1e-20, 5.0])
    assert counts[0] == 1 and counts[-1] == 1
