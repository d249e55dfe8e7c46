"""Convex reformulation: weight estimation, barrier solver and KKT certificates.

For a weight vector ``c >= 0`` the program

    min <c, sigma>  s.t.  Lambda(sigma) <= y,  a <= sigma <= b

is convex because every ``lambda_j`` is convex.  A weight is universal when,
for every ``sigma_true`` in the box, ``sigma_true`` is the solution with
``y = Lambda(sigma_true)``.  Requiring this at the points of a grid gives
linear conditions on ``c`` and the KKT multipliers, solved here as an LP.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import nnls

from . import autodiff as ad
from .errors import InvalidInputError
from .forward import check_sigma, eigenvalues, forward_map
from .landscape import GridSpec
from .lp import OPTIMAL, LinearProgram, solve_lp
from .solvers import CONVERGED, MAX_ITER, SolveReport

DEFAULT_M_CAP = 40

# histogram bin edges for estimation errors: 1e-16 .. 1, four bins per decade
ERROR_BIN_EDGES = 10.0 ** np.linspace(-16, 0, 65)


# -- weight estimation ----------------------------------------------------------


def build_c_estimation_lp(geom, box, grid, m):
    """LP in ``(c, z_l, lambda_l, mu_l)`` whose feasibility makes every grid point optimal.

    Grid points are ``I_k^n`` without ``b 1``.  For point ``l`` and annulus
    ``i`` the stationarity row is
    ``c_i + mu_{l,i} - lambda_{l,i} + sum_j z_{l,j} d_i lambda_j(sigma_l) = 0``.
    Complementarity is imposed by construction: ``lambda_{l,i}`` exists only
    where ``sigma_{l,i} = a`` and ``mu_{l,i}`` only where ``sigma_{l,i} = b``.
    A final row fixes ``c_1 = 1``; the objective maximises ``c_n``.  Variable
    names record the layout; ``c`` occupies the first ``n`` columns.
    """
    if grid.box != box:
        raise InvalidInputError("grid and box disagree")
    n = geom.n
    pts = grid.points(n, exclude_upper_corner=True)
    names = [f"c_{i + 1}" for i in range(n)]
    rows, cols, vals = [], [], []
    for l, p in enumerate(pts):
        jac = ad.jacobian(lambda s: eigenvalues(geom, s, m), p)  # (m, n)
        base = l * n
        for i in range(n):
            rows.append(base + i)
            cols.append(i)
            vals.append(1.0)
        first_z = len(names)
        names.extend(f"z_{l}_{j + 1}" for j in range(m))
        for i in range(n):
            for j in range(m):
                rows.append(base + i)
                cols.append(first_z + j)
                vals.append(jac[j, i])
        for i in range(n):
            if p[i] == box.a:
                rows.append(base + i)
                cols.append(len(names))
                vals.append(-1.0)
                names.append(f"lam_{l}_{i + 1}")
            elif p[i] == box.b:
                rows.append(base + i)
                cols.append(len(names))
                vals.append(1.0)
                names.append(f"mu_{l}_{i + 1}")
    nrow = len(pts) * n
    rows.append(nrow)
    cols.append(0)
    vals.append(1.0)
    nv = len(names)
    a_eq = sp.csr_matrix((vals, (rows, cols)), shape=(nrow + 1, nv))
    b_eq = np.zeros(nrow + 1)
    b_eq[-1] = 1.0
    objective = np.zeros(nv)
    objective[n - 1] = 1.0
    return LinearProgram(objective=objective, a_eq=a_eq, b_eq=b_eq, maximize=True, names=names)


@dataclass
class WeightEstimate:
    c: np.ndarray
    m_used: int
    grid: GridSpec
    status: str
    smallest_coefficient: float
    history: list = field(default_factory=list)  # (m, LP status, iterations)

    def to_dict(self):
        return {
            "c": [float(v) for v in self.c],
            "m_used": self.m_used,
            "grid": {"k": self.grid.k, "a": self.grid.box.a, "b": self.grid.box.b},
            "status": self.status,
            "smallest_coefficient": float(self.smallest_coefficient),
            "history": [list(h) for h in self.history],
        }


def estimate_c(geom, box, grid, m_start=None, m_cap=DEFAULT_M_CAP, backend="simplex", lp_opts=None):
    """Smallest feasible ``m`` from ``m_start`` upward, and the weight maximising ``c_n`` there.

    Feasibility is monotone in ``m`` (a solution extends with ``z = 0``), so
    the first feasible ``m`` is the minimal one above ``m_start``.
    """
    n = geom.n
    m = n if m_start is None else int(m_start)
    if m < 1:
        raise InvalidInputError("m_start must be positive")
    history = []
    while m <= m_cap:
        lp = build_c_estimation_lp(geom, box, grid, m)
        sol = solve_lp(lp, backend=backend, opts=lp_opts)
        history.append((m, sol.status, sol.iterations))
        if sol.status == OPTIMAL:
            c = np.maximum(sol.values[:n], 0.0)
            c[0] = 1.0
            return WeightEstimate(c, m, grid, OPTIMAL, float(c.min()), history)
        if sol.status != "infeasible":
            return WeightEstimate(np.full(n, np.nan), m, grid, sol.status, float("nan"), history)
        m += 1
    return WeightEstimate(np.full(n, np.nan), m_cap, grid, "m_cap_exceeded", float("nan"), history)


def handcrafted_weights(n, k_last):
    """``c_i = 10^{k_i}`` with ``k_i`` linear from ``k_1 = 0`` to ``k_n = k_last``."""
    return 10.0 ** np.linspace(0.0, k_last, n)


def check_weight(c, n):
    c = np.asarray(c, dtype=float)
    if c.shape != (n,):
        raise InvalidInputError(f"weight must have {n} entries")
    if not np.all(np.isfinite(c)) or np.any(c < 0):
        raise InvalidInputError("weight entries must be finite and nonnegative")
    if abs(c[0] - 1.0) > 1e-12:
        raise InvalidInputError("weight must be normalised with c_1 = 1")
    return c


# -- barrier solver ---------------------------------------------------------------


@dataclass
class BarrierPCOptions:
    t0: float = 1.0
    t_factor: float = 10.0
    gap_tol: float = 1e-10  # stop when (m + 2n) / t falls below
    newton_tol: float = 1e-12  # half squared Newton decrement ending a centring
    max_newton: int = 100  # per centring
    armijo: float = 0.01
    backtrack: float = 0.5
    boundary_tol: float = 1e-12


def _feasible_start(geom, box, y):
    """``(b - delta) 1`` with ``delta`` half the bisected threshold of strict feasibility."""
    m = y.size
    n = geom.n

    def strictly_feasible(delta):
        s = np.full(n, box.b - delta)
        return np.all(forward_map(geom, s, m) < y)

    lo, hi = 0.0, box.width
    if strictly_feasible(hi):
        return hi / 2, np.full(n, box.b - hi / 2)
    # invariant: lo feasible-or-boundary, hi infeasible
    if not strictly_feasible(1e-300):
        return 0.0, None
    lo = 1e-300
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if strictly_feasible(mid):
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    delta = lo / 2
    return delta, np.full(n, box.b - delta)


def solve_pc(geom, box, c, y, opts=None):
    """``min <c, sigma>`` s.t. ``Lambda(sigma) <= y``, ``sigma`` in the box, by a log barrier.

    Minimises ``t <c, sigma> - sum log(y - lambda) - sum log(sigma - a) -
    sum log(b - sigma)`` by damped Newton for ``t = t0, 10 t0, ...`` until the
    duality-gap bound ``(m + 2n) / t`` drops below ``gap_tol``.  When no
    strictly feasible ``(b - delta) 1`` exists within ``boundary_tol`` the
    admissible set is ``{b 1}`` and that point is returned with the
    ``boundary_case`` diagnostic set.  The objective along the path is
    recorded in ``diagnostics["path_objective"]``.
    """
    opts = opts or BarrierPCOptions()
    n = geom.n
    c = np.asarray(c, dtype=float)
    if c.shape != (n,) or np.any(c < 0) or not np.all(np.isfinite(c)):
        raise InvalidInputError("weight must be a nonnegative vector with one entry per annulus")
    y = np.asarray(y, dtype=float)
    m = y.size
    a, b = box.a, box.b
    delta, x = _feasible_start(geom, box, y)
    if x is None or delta < opts.boundary_tol:
        x = np.full(n, b)
        res = forward_map(geom, x, m) - y
        return SolveReport(
            status=CONVERGED,
            iterations=0,
            restarts=0,
            final_residual_inf=float(np.max(np.maximum(res, 0.0))),
            final_gradient_inf=float("nan"),
            iterate=x,
            objective=float(c @ x),
            diagnostics={"boundary_case": True, "path_objective": [float(c @ x)]},
        )

    def phi(x, t):
        if not np.all(np.isfinite(x)) or np.any(x <= a) or np.any(x >= b):
            return np.inf
        s = y - forward_map(geom, x, m)
        if np.any(s <= 0):
            return np.inf
        return t * (c @ x) - np.sum(np.log(s)) - np.sum(np.log(x - a)) - np.sum(np.log(b - x))

    t = opts.t0
    total = 0
    path = []
    status = CONVERGED
    while True:
        for _ in range(opts.max_newton):
            lam, jac, hess = ad.taylor2(lambda s: eigenvalues(geom, s, m), x)
            s = y - lam
            la, ub = x - a, b - x
            g = t * c + jac.T @ (1.0 / s) - 1.0 / la + 1.0 / ub
            h = np.einsum("j,jab->ab", 1.0 / s, hess) + (jac.T / s**2) @ jac + np.diag(1.0 / la**2 + 1.0 / ub**2)
            # scale to unit diagonal before solving; the raw Hessian is badly graded
            dsc = 1.0 / np.sqrt(np.diag(h))
            step = -dsc * np.linalg.solve(h * np.outer(dsc, dsc), g * dsc)
            dec = -(g @ step)
            total += 1
            if dec / 2 <= opts.newton_tol:
                break
            f0 = phi(x, t)
            alpha = 1.0
            while alpha > 1e-16:
                xt = x + alpha * step
                ft = phi(xt, t)
                if ft <= f0 - opts.armijo * alpha * dec:
                    break
                alpha *= opts.backtrack
            else:
                break  # no representable decrease left at this t
            if ft >= f0:
                break  # decrement below the rounding level of phi
            x = xt
        else:
            status = MAX_ITER
        path.append(float(c @ x))
        if (m + 2 * n) / t <= opts.gap_tol or status != CONVERGED:
            break
        t *= opts.t_factor
    res = forward_map(geom, x, m) - y
    return SolveReport(
        status=status,
        iterations=total,
        restarts=0,
        final_residual_inf=float(np.max(np.maximum(res, 0.0))),
        final_gradient_inf=float("nan"),
        iterate=x,
        objective=float(c @ x),
        diagnostics={"boundary_case": False, "path_objective": path, "start_delta": float(delta), "t_final": t},
    )


# -- KKT certificate -------------------------------------------------------------------


@dataclass
class KKTCertificate:
    lam: np.ndarray  # lower-bound multipliers
    mu: np.ndarray  # upper-bound multipliers
    z: np.ndarray  # measurement multipliers
    stationarity_residual_inf: float
    complementarity_residual_inf: float
    primal_residual_inf: float

    def accepted(self, tol=1e-7):
        return max(self.stationarity_residual_inf, self.complementarity_residual_inf, self.primal_residual_inf) <= tol


def check_kkt(geom, box, c, sigma, y, active_tol=1e-9):
    """Multipliers for ``c + mu - lambda + sum_j z_j grad lambda_j = 0`` on the active set.

    Active constraints are the bounds within ``active_tol`` of ``sigma`` and
    the measurements with ``y_j - lambda_j <= active_tol``.  Nonnegative
    multipliers are found by NNLS with unit-norm columns; the residual of
    the stationarity equation is reported in the max norm, as are the
    complementarity products and the primal violation.
    """
    n = geom.n
    c = np.asarray(c, dtype=float)
    x = check_sigma(geom, sigma)
    y = np.asarray(y, dtype=float)
    m = y.size
    lam_j = forward_map(geom, x, m)
    jac = ad.jacobian(lambda s: eigenvalues(geom, s, m), x)
    gap = y - lam_j
    lo = np.flatnonzero(x - box.a <= active_tol)
    hi = np.flatnonzero(box.b - x <= active_tol)
    act = np.flatnonzero(gap <= active_tol)
    blocks = []
    eye = np.eye(n)
    blocks.extend(-eye[:, i] for i in lo)
    blocks.extend(eye[:, i] for i in hi)
    blocks.extend(jac[j] for j in act)
    lam = np.zeros(n)
    mu = np.zeros(n)
    z = np.zeros(m)
    if blocks:
        mat = np.column_stack(blocks)
        norms = np.linalg.norm(mat, axis=0)
        w, _ = nnls(mat / norms, -c)
        w = w / norms
        k = 0
        for i in lo:
            lam[i] = w[k]
            k += 1
        for i in hi:
            mu[i] = w[k]
            k += 1
        for j in act:
            z[j] = w[k]
            k += 1
    stat = c + mu - lam + jac.T @ z
    comp = np.concatenate([lam * (x - box.a), mu * (box.b - x), z * gap])
    primal = np.concatenate([-gap, box.a - x, x - box.b])
    return KKTCertificate(
        lam=lam,
        mu=mu,
        z=z,
        stationarity_residual_inf=float(np.max(np.abs(stat))),
        complementarity_residual_inf=float(np.max(np.abs(comp))),
        primal_residual_inf=float(max(0.0, np.max(primal))),
    )


# -- universality sweep -----------------------------------------------------------------


@dataclass
class UniversalityReport:
    errors: np.ndarray
    failure_threshold: float
    failure_fraction: float
    bin_edges: np.ndarray
    counts: np.ndarray
    statuses: list

    @property
    def mean_error(self):
        return float(np.mean(self.errors))

    @property
    def median_error(self):
        return float(np.median(self.errors))

    def histogram_csv(self):
        lines = ["error,count"]
        for lo, cnt in zip(self.bin_edges[:-1], self.counts):
            lines.append(f"{lo!r},{int(cnt)}")
        return "\n".join(lines) + "\n"


def error_histogram(errors):
    """Counts on the fixed log bins; errors below ``1e-16`` go to the first bin, above 1 to the last."""
    e = np.clip(np.asarray(errors, dtype=float), ERROR_BIN_EDGES[0], ERROR_BIN_EDGES[-1])
    counts, _ = np.histogram(e, bins=ERROR_BIN_EDGES)
    return counts


def validate_weight(geom, box, c, m, trials, seed=None, opts=None):
    """Solve the convex program on ``trials`` random noiseless instances; evidence, not proof, of universality.

    An error of at least half the random-guess level ``(b - a) / 3`` counts
    as a failure.
    """
    c = check_weight(c, geom.n)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    errors = np.empty(trials)
    statuses = []
    for t in range(trials):
        st = box.sample(rng, geom.n)
        rep = solve_pc(geom, box, c, forward_map(geom, st, m), opts)
        errors[t] = np.max(np.abs(rep.iterate - st))
        statuses.append(rep.status)
    threshold = 0.5 * box.width / 3
    return UniversalityReport(
        errors=errors,
        failure_threshold=threshold,
        failure_fraction=float(np.mean(errors >= threshold)),
        bin_edges=ERROR_BIN_EDGES,
        counts=error_histogram(errors),
        statuses=statuses,
    )


__all__ = [
    "BarrierPCOptions",
    "KKTCertificate",
    "UniversalityReport",
    "WeightEstimate",
    "build_c_estimation_lp",
    "check_kkt",
    "check_weight",
    "error_histogram",
    "estimate_c",
    "handcrafted_weights",
    "solve_pc",
    "validate_weight",
]
