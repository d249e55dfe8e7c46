"""Randomised property suites for the forward map and the two-annulus landscape.

Each suite draws conductivities (and where relevant geometries) from a
seeded generator and counts violations.  Run them all with
``python -m radcal.properties [draws] [seed]``.
"""

import sys
from dataclasses import dataclass

import numpy as np

from .forward import RadialGeometry, analytic_jacobian, forward_map
from .landscape import alternating_sign_check, expected_alternation, ratio_h

DEFAULT_DRAWS = 1000
SIGMA_RANGE = (0.5, 1.5)
REL_TOL = 1e-13


@dataclass
class PropertyResult:
    name: str
    draws: int
    violations: int
    worst: float  # largest relative excess over the bound (0 when none)

    @property
    def passed(self):
        return self.violations == 0

    def line(self):
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict} {self.name}: {self.violations} violations in {self.draws} draws (worst excess {self.worst:.3g})"


def _random_problem(rng, n_max=8, m_max=20):
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    sigma = rng.uniform(*SIGMA_RANGE, n)
    return RadialGeometry.uniform(n), sigma, m


def monotonicity(draws=DEFAULT_DRAWS, seed=0):
    """Raising any conductivity lowers every eigenvalue: ``sigma <= sigma'`` gives ``Lambda(sigma') <= Lambda(sigma)``,
    and every Jacobian entry is negative."""
    rng = np.random.default_rng(seed)
    bad = 0
    worst = 0.0
    for _ in range(draws):
        geom, s, m = _random_problem(rng)
        bumped = s + rng.uniform(0.0, 0.5, s.size) * (rng.random(s.size) < 0.5)
        lo, hi = forward_map(geom, bumped, m), forward_map(geom, s, m)
        excess = np.max((lo - hi) / hi)
        jac = analytic_jacobian(geom, s, m)
        if excess > REL_TOL or np.any(jac >= 0):
            bad += 1
        worst = max(worst, float(excess), 0.0)
    return PropertyResult("monotonicity", draws, bad, worst)


def convexity_midpoint(draws=DEFAULT_DRAWS, seed=0):
    """``lambda_j((x + y) / 2) <= (lambda_j(x) + lambda_j(y)) / 2`` for every ``j``."""
    rng = np.random.default_rng(seed)
    bad = 0
    worst = 0.0
    for _ in range(draws):
        geom, x, m = _random_problem(rng)
        y = rng.uniform(*SIGMA_RANGE, x.size)
        mid = forward_map(geom, 0.5 * (x + y), m)
        avg = 0.5 * (forward_map(geom, x, m) + forward_map(geom, y, m))
        excess = float(np.max((mid - avg) / avg))
        if excess > REL_TOL:
            bad += 1
        worst = max(worst, excess, 0.0)
    return PropertyResult("convexity midpoint", draws, bad, worst)


def ratio_monotone_in_j(draws=DEFAULT_DRAWS, seed=0, j_max=12):
    """Two annuli, random interface radius: ``h_j = d_1 lambda_j / d_2 lambda_j`` increases strictly with ``j``.

    The closed form is used for the ordering (the Jacobian quotient loses
    relative accuracy once ``d_2 lambda_j`` is tiny); both forms must agree
    to 1e-9 relative while ``h_j < 1e6``.
    """
    rng = np.random.default_rng(seed)
    bad = 0
    worst = 0.0
    for _ in range(draws):
        r1 = rng.uniform(0.1, 0.9)
        geom = RadialGeometry((1.0, r1, 0.0))
        s = rng.uniform(*SIGMA_RANGE, 2)
        pairs = [ratio_h(geom, s, j) for j in range(1, j_max + 1)]
        closed = np.array([c for _, c in pairs])
        jacq = np.array([q for q, _ in pairs])
        near = closed < 1e6
        mismatch = float(np.max(np.abs(jacq[near] - closed[near]) / np.abs(closed[near]), initial=0.0))
        if np.any(np.diff(closed) <= 0) or mismatch > 1e-9:
            bad += 1
        worst = max(worst, mismatch)
    return PropertyResult("h_j monotone in j", draws, bad, worst)


def alternating_signs(draws=DEFAULT_DRAWS, seed=0, n_max=6):
    """``sign(g'_k) = (-1)^k`` for the curve keeping ``lambda_1..lambda_{n-1}`` fixed, ``n = 2..n_max``."""
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(draws):
        n = int(rng.integers(2, n_max + 1))
        geom = RadialGeometry.uniform(n)
        s = rng.uniform(*SIGMA_RANGE, n)
        if not np.array_equal(alternating_sign_check(geom, s), expected_alternation(n)):
            bad += 1
    return PropertyResult("alternating signs of g'", draws, bad, 0.0)


SUITES = (monotonicity, convexity_midpoint, ratio_monotone_in_j, alternating_signs)


def run_all(draws=DEFAULT_DRAWS, seed=0):
    return [suite(draws, seed) for suite in SUITES]


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    draws = int(argv[0]) if argv else DEFAULT_DRAWS
    seed = int(argv[1]) if len(argv) > 1 else 0
    results = run_all(draws, seed)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


if __name__ == "__main__":
    sys.exit(main())
