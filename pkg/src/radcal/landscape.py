"""Numerical probes of the least-squares landscape.

Determinant-sign scans over a grid of conductivities, the closed forms
available at constant conductivity, the two-annulus Jacobian ratio, the
alternating-sign test on the implicit curve derivative, and traces of the
one- and two-dimensional objectives.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import InvalidInputError, NumericalFailure
from .forward import analytic_jacobian, check_sigma, eigenvalues, forward_map, orders
from .linalg import jacobi_svd, lu_det, lu_solve


@dataclass(frozen=True)
class BoxPrior:
    """A priori bounds ``a <= sigma_i <= b``."""

    a: float
    b: float

    def __post_init__(self):
        if not (0 < self.a < self.b) or not np.isfinite(self.b):
            raise InvalidInputError(f"box must satisfy 0 < a < b < inf, got ({self.a}, {self.b})")

    @property
    def center(self):
        return 0.5 * (self.a + self.b)

    @property
    def width(self):
        return self.b - self.a

    def sample(self, rng, n):
        return rng.uniform(self.a, self.b, n)


@dataclass(frozen=True)
class GridSpec:
    """Tensor grid ``I_k^n`` with ``I_k = {a + i (b - a) / (k - 1)}``."""

    k: int
    box: BoxPrior

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise InvalidInputError(f"grid needs k >= 2 points per axis, got {self.k}")

    def axis(self):
        a, b = self.box.a, self.box.b
        return a + np.arange(self.k) / (self.k - 1) * (b - a)

    def points(self, n, exclude_upper_corner=False):
        """All ``k^n`` grid points, lexicographic order, shape ``(k^n, n)``."""
        pts = np.array(list(itertools.product(self.axis(), repeat=n)))
        if exclude_upper_corner:
            pts = pts[~np.all(pts == self.box.b, axis=1)]
        return pts


# -- least-squares objective ------------------------------------------------


def least_squares_objective(geom, sigma, y):
    """``f(sigma) = 0.5 * ||Lambda(sigma) - y||^2`` (batched over leading axes)."""
    y = np.asarray(y, dtype=float)
    r = forward_map(geom, sigma, y.shape[-1]) - y
    return 0.5 * np.sum(r * r, axis=-1)


def least_squares_gradient(geom, sigma, y):
    """``Lambda'(sigma)^T (Lambda(sigma) - y)`` (batched)."""
    y = np.asarray(y, dtype=float)
    m = y.shape[-1]
    r = forward_map(geom, sigma, m) - y
    return np.einsum("...ji,...j->...i", analytic_jacobian(geom, sigma, m), r)


def least_squares_hessian(geom, sigma, y):
    """Exact Hessian of the objective by second-order forward differentiation."""
    y = np.asarray(y, dtype=float)
    m = y.size

    def f(s):
        r = eigenvalues(geom, s, m) - y
        return 0.5 * (r * r).sum()

    return ad.hessian(f, check_sigma(geom, sigma))


# -- determinant scans --------------------------------------------------------


def signed_factor(n):
    """``(-1)^(n(n+1)/2)``, the predicted sign of ``det Lambda'`` for ``m = n``."""
    return -1.0 if (n * (n + 1) // 2) % 2 else 1.0


def sub_jacobian(jac):
    """Drop the last row (highest order) and first column (outermost annulus)."""
    return jac[..., :-1, 1:]


def minor_without_column(jac, k):
    """``M_k``: drop the last row and column ``k`` (0-based)."""
    return np.delete(jac[..., :-1, :], k, axis=-1)


@dataclass
class ScanReport:
    n: int
    m: int
    min_signed_det_full: float
    min_signed_det_sub: float
    min_signed_det_Mk: float
    min_sigma_min_full: float
    min_sigma_min_sub: float
    argmin_det_full: np.ndarray
    argmin_det_sub: np.ndarray
    argmin_det_Mk: np.ndarray
    argmin_sigma_min_full: np.ndarray
    argmin_sigma_min_sub: np.ndarray
    sign_violations: int
    rows: np.ndarray = field(default=None, repr=False)

    @property
    def columns(self):
        return [f"sigma_{i + 1}" for i in range(self.n)] + [
            "det_full",
            "det_sub",
            "det_Mk_min",
            "sigma_min_full",
            "sigma_min_sub",
        ]

    def orders(self):
        """Powers of ten of the five minima, in table order."""
        vals = [
            self.min_signed_det_full,
            self.min_signed_det_sub,
            self.min_signed_det_Mk,
            self.min_sigma_min_full,
            self.min_sigma_min_sub,
        ]
        return [order_of_magnitude(v) for v in vals]


def order_of_magnitude(x):
    if not x > 0:
        return float("nan")
    return float(10.0 ** np.floor(np.log10(x)))


def scan_determinant_signs(geom, grid, m=None, keep_rows=False, chunk=4096):
    """Signed determinants and smallest singular values over every grid point.

    With ``m = n`` evaluates ``(-1)^(n(n+1)/2) det Lambda'``,
    ``(-1)^(n(n-1)/2) det Lambda'_[n-1]``, the minimum over ``k`` of
    ``(-1)^(n(n-1)/2) det M_k`` and the smallest singular values of the
    first two.  A point violates the sign pattern when any of the signed
    determinants is not strictly positive.
    """
    n = geom.n
    m = n if m is None else m
    if m != n:
        raise InvalidInputError("determinant scans require m = n")
    if n < 2:
        raise InvalidInputError("determinant scans need at least two annuli")
    pts = grid.points(n)
    s_full = signed_factor(n)
    s_sub = signed_factor(n - 1)
    out = np.empty((len(pts), 5))
    for start in range(0, len(pts), chunk):
        blk = pts[start:start + chunk]
        jac = analytic_jacobian(geom, blk, m)
        sub = sub_jacobian(jac)
        mk = np.stack([s_sub * lu_det(minor_without_column(jac, k)) for k in range(n)], axis=-1)
        out[start:start + chunk, 0] = s_full * lu_det(jac)
        out[start:start + chunk, 1] = s_sub * lu_det(sub)
        out[start:start + chunk, 2] = mk.min(axis=-1)
        out[start:start + chunk, 3] = jacobi_svd(jac)[..., -1]
        out[start:start + chunk, 4] = jacobi_svd(sub)[..., -1]
    violations = int(np.sum(np.any(out[:, :3] <= 0.0, axis=1)))
    amin = out.argmin(axis=0)
    return ScanReport(
        n=n,
        m=m,
        min_signed_det_full=float(out[amin[0], 0]),
        min_signed_det_sub=float(out[amin[1], 1]),
        min_signed_det_Mk=float(out[amin[2], 2]),
        min_sigma_min_full=float(out[amin[3], 3]),
        min_sigma_min_sub=float(out[amin[4], 4]),
        argmin_det_full=pts[amin[0]],
        argmin_det_sub=pts[amin[1]],
        argmin_det_Mk=pts[amin[2]],
        argmin_sigma_min_full=pts[amin[3]],
        argmin_sigma_min_sub=pts[amin[4]],
        sign_violations=violations,
        rows=np.hstack([pts, out]) if keep_rows else None,
    )


# -- constant conductivity ----------------------------------------------------


def harmonic_jacobian(geom, m):
    """Jacobian at ``sigma = 1``: ``-(r_{i-1}^{2j} - r_i^{2j}) / j``."""
    j = orders(m)[:, None]
    r = geom.r
    return -(r[None, :-1] ** (2 * j) - r[None, 1:] ** (2 * j)) / j


def harmonic_determinant(geom):
    """Vandermonde closed form of ``det Lambda'(1)`` for ``m = n``.

    ``(-1)^n / n! * prod_{i=1}^{n-1} R_i * prod_{0<=i<j<=n-1} (R_j - R_i)`` with ``R_i = r_i^2``.
    """
    n = geom.n
    R = geom.r[:n] ** 2
    det = (-1.0) ** n / np.prod(np.arange(1, n + 1, dtype=float)) * np.prod(R[1:])
    for i in range(n):
        for k in range(i + 1, n):
            det *= R[k] - R[i]
    return float(det)


def vandermonde_sign_check(geom):
    """Sign pattern of ``det Lambda'(1)`` and ``det Lambda'_[n-1](1)`` for ``m = n``.

    Returns ``(full_ok, sub_ok)``; for ``n = 1`` the submatrix is empty and
    ``sub_ok`` is ``True``.
    """
    n = geom.n
    jac = harmonic_jacobian(geom, n)
    full_ok = signed_factor(n) * lu_det(jac) > 0
    sub_ok = True if n == 1 else signed_factor(n - 1) * lu_det(sub_jacobian(jac)) > 0
    return bool(full_ok), bool(sub_ok)


# -- two annuli ---------------------------------------------------------------


def ratio_h(geom, sigma, j):
    """``h_j = d_1 lambda_j / d_2 lambda_j`` for two annuli: Jacobian value and closed form.

    Closed form, with ``x = r_1^(2j)``:
    ``((s1 + s2)^2 / x - (s1 - s2)^2 x - 4 s1 s2) / (4 s1^2)``.
    """
    if geom.n != 2:
        raise InvalidInputError("ratio_h is defined for two annuli")
    s1, s2 = check_sigma(geom, sigma)
    jac = analytic_jacobian(geom, [s1, s2], j)
    from_jacobian = jac[j - 1, 0] / jac[j - 1, 1]
    x = geom.radii[1] ** (2 * j)
    closed = ((s1 + s2) ** 2 / x - (s1 - s2) ** 2 * x - 4 * s1 * s2) / (4 * s1**2)
    return float(from_jacobian), float(closed)


# -- alternating signs ----------------------------------------------------------


def implicit_curve_slope(geom, sigma):
    """``g'(sigma_1) = -(Lambda'_[n-1])^{-1} (d_1 lambda_j)_{j<n}`` with ``m = n``.

    Entry ``k`` (0-based) is the rate of change of annulus ``k + 2`` along the
    curve keeping the first ``n - 1`` measurements fixed.
    """
    n = geom.n
    if n < 2:
        raise InvalidInputError("the implicit curve needs at least two annuli")
    jac = analytic_jacobian(geom, sigma, n)
    return -lu_solve(sub_jacobian(jac), jac[:-1, 0])


def alternating_sign_check(geom, sigma):
    """Signs of ``g'``; the predicted pattern is ``sign(g'_k) = (-1)^k`` for ``k = 1..n-1``."""
    return np.sign(implicit_curve_slope(geom, sigma)).astype(int)


def expected_alternation(n):
    return np.array([(-1) ** k for k in range(1, n)])


# -- curve traces -----------------------------------------------------------------


@dataclass
class LandscapeTrace:
    sigma: np.ndarray
    f: np.ndarray
    f1: np.ndarray
    f2: np.ndarray


def trace_1d_landscape(geom, sigma_true, m, lo, hi, num=400):
    """Samples of ``f``, ``f'`` and ``f''`` for a single annulus over ``[lo, hi]``."""
    if geom.n != 1:
        raise InvalidInputError("the one-dimensional trace needs a single annulus")
    if not 0 < lo < hi:
        raise InvalidInputError("range must satisfy 0 < lo < hi")
    y = forward_map(geom, [sigma_true], m)

    def f(s):
        r = eigenvalues(geom, s, m) - y
        return 0.5 * (r * r).sum()

    xs = np.linspace(lo, hi, num)
    vals = least_squares_objective(geom, xs[:, None], y)
    d1 = np.array([ad.gradient(f, [x])[0] for x in xs])
    d2 = np.array([ad.hessian(f, [x])[0, 0] for x in xs])
    return LandscapeTrace(sigma=xs, f=vals, f1=d1, f2=d2)


@dataclass
class CurveTrace:
    sigma1: np.ndarray
    g: np.ndarray
    h: np.ndarray
    dh: np.ndarray  # -det Lambda' / d_2 lambda_1 along the curve
    complete: bool


MAX_CURVE_VALUE = 1e6  # the level curve leaves any sensible range beyond this


def _solve_level(geom, s1, target, guess, tol=1e-15, max_iter=50):
    """1-D Newton for ``lambda_1(s1, s) = target`` in ``s``; ``None`` on failure."""
    s = guess
    for _ in range(max_iter):
        if not s > 0:
            return None
        lam = forward_map(geom, [s1, s], 1)[0]
        d2 = analytic_jacobian(geom, [s1, s], 1)[0, 1]
        step = (lam - target) / d2
        s -= step
        if not np.isfinite(s) or s > MAX_CURVE_VALUE:
            return None
        if abs(step) <= tol * max(1.0, abs(s)) or abs(lam - target) <= tol:
            return s if s > 0 else None
    return None


def trace_implicit_curves(geom, sigma_true, interval, steps=400, min_step=1e-9):
    """Continuation of ``g`` with ``lambda_1(s1, g(s1)) = lambda_1(sigma_true)`` and ``h = lambda_2(s1, g(s1))``.

    Marches from ``sigma_true[0]`` to both ends of ``interval`` over a uniform
    grid, warm-starting a 1-D Newton solve with the tangent predictor.  A
    failed step is halved; below ``min_step`` the march stops in that
    direction and ``complete`` is ``False``.
    """
    if geom.n != 2:
        raise InvalidInputError("implicit curves need two annuli")
    st = check_sigma(geom, sigma_true)
    lo, hi = interval
    if not lo <= st[0] <= hi:
        raise InvalidInputError("interval must contain the first true conductivity")
    target = forward_map(geom, st, 1)[0]
    knots = np.linspace(lo, hi, steps + 1)
    complete = True

    def march(stops):
        nonlocal complete
        s1, g = st[0], st[1]
        out = []
        for goal in stops:
            while s1 != goal:
                jac = analytic_jacobian(geom, [s1, g], 1)[0]
                slope = -jac[0] / jac[1]
                step = goal - s1
                while True:
                    guess = g + slope * step
                    new = _solve_level(geom, s1 + step, target, guess if guess > 0 else g)
                    if new is not None:
                        break
                    step *= 0.5
                    if abs(step) < min_step:
                        complete = False
                        return out
                s1, g = s1 + step, new
            out.append((s1, g))
        return out

    right = march([k for k in knots if k > st[0]])
    left = march([k for k in knots[::-1] if k < st[0]])
    pts = left[::-1] + [(st[0], st[1])] + right
    s1 = np.array([p[0] for p in pts])
    g = np.array([p[1] for p in pts])
    sig = np.column_stack([s1, g])
    lam = forward_map(geom, sig, 2)
    jac = analytic_jacobian(geom, sig, 2)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    return CurveTrace(sigma1=s1, g=g, h=lam[:, 1], dh=-det / jac[:, 0, 1], complete=complete)


# -- critical points on a grid ------------------------------------------------------


@dataclass(frozen=True)
class CriticalCell:
    i: int  # index along sigma_1
    k: int  # index along sigma_2
    lower: tuple
    upper: tuple

    def contains(self, point):
        return all(lo <= p <= hi for lo, p, hi in zip(self.lower, point, self.upper))


def _cell_zero(geom, y, lower, upper, max_iter=40):
    """Newton on the gradient from the cell centre; the zero if it lies in the half-open cell."""
    x = 0.5 * (np.asarray(lower) + np.asarray(upper))
    for _ in range(max_iter):
        if not np.all(x > 0):
            return None
        g = least_squares_gradient(geom, x, y)
        try:
            step = lu_solve(least_squares_hessian(geom, x, y), g)
        except NumericalFailure:
            return None
        x = x - step
        if np.all(np.abs(step) <= 1e-12 * np.maximum(1.0, np.abs(x))):
            break
    else:
        return None
    inside = np.all(x >= lower) and np.all(x < upper)
    return x if inside else None


def grid_critical_point_scan(geom, sigma_true, box, k=200, m=2):
    """Cells of a ``k x k`` grid on the box where the gradient has a zero.

    A cell is a candidate when both gradient components change sign across
    its corners.  Each candidate is then confirmed by a local Newton solve of
    ``grad f = 0`` started at the cell centre, which must converge inside the
    cell (half-open on its upper faces).  Cells whose sign changes come from
    two nearly parallel zero lines passing close by are thereby discarded.
    """
    if geom.n != 2:
        raise InvalidInputError("the critical-point scan is two-dimensional")
    y = forward_map(geom, sigma_true, m)
    ax = np.linspace(box.a, box.b, k)
    s1, s2 = np.meshgrid(ax, ax, indexing="ij")
    grad = least_squares_gradient(geom, np.stack([s1, s2], axis=-1), y)
    sg = np.sign(grad)

    def changes(c):
        q = np.stack([c[:-1, :-1], c[1:, :-1], c[:-1, 1:], c[1:, 1:]])
        return (q.max(axis=0) >= 0) & (q.min(axis=0) <= 0)

    both = changes(sg[..., 0]) & changes(sg[..., 1])
    cells = []
    for i, kk in zip(*np.nonzero(both)):
        lower, upper = (ax[i], ax[kk]), (ax[i + 1], ax[kk + 1])
        # the last row and column of cells are closed on their upper faces
        hi = np.array(upper) + np.array([i == k - 2, kk == k - 2]) * 1e-12
        if _cell_zero(geom, y, lower, hi) is not None:
            cells.append(CriticalCell(int(i), int(kk), lower, upper))
    return cells
