"""Two-phase revised simplex for linear programs with nonnegative or free variables.

Problems are given as ``min/max c^T x`` subject to ``A_eq x = b_eq``,
``A_ub x <= b_ub`` and ``x_j >= 0`` unless variable ``j`` is free.  They are
brought to the standard form ``A x = b, x >= 0, b >= 0`` (free variables
split, slacks appended, rows negated), equilibrated by row and column
max-abs scaling, and solved by a revised simplex whose basis is kept as a
sparse LU factorisation plus a short file of eta updates.

The weight-estimation programs this module is sized for are massively
degenerate (all but one right-hand side is zero), so the leaving-row choice
favours large pivots and Bland's rule takes over after a long run of
degenerate pivots.
"""

import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import InvalidInputError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"
NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class LinearProgram:
    objective: np.ndarray
    a_eq: sp.csr_matrix = None
    b_eq: np.ndarray = None
    a_ub: sp.csr_matrix = None
    b_ub: np.ndarray = None
    free: np.ndarray = None  # boolean mask; other variables are >= 0
    maximize: bool = False
    names: list = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).ravel()
        nv = self.objective.size
        self.a_eq, self.b_eq = _block(self.a_eq, self.b_eq, nv, "equality")
        self.a_ub, self.b_ub = _block(self.a_ub, self.b_ub, nv, "inequality")
        self.free = np.zeros(nv, dtype=bool) if self.free is None else np.asarray(self.free, dtype=bool)
        if self.free.shape != (nv,):
            raise InvalidInputError("free-variable mask does not match the variable count")
        if not np.all(np.isfinite(self.objective)):
            raise InvalidInputError("objective must be finite")
        if self.names is not None and len(self.names) != nv:
            raise InvalidInputError("one name per variable is required")

    @property
    def n_vars(self):
        return self.objective.size

    @property
    def n_cons(self):
        return self.a_eq.shape[0] + self.a_ub.shape[0]


def _block(a, b, nv, what):
    if a is None:
        return sp.csr_matrix((0, nv)), np.zeros(0)
    a = sp.csr_matrix(a, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    if a.shape[1] != nv or a.shape[0] != b.size:
        raise InvalidInputError(f"{what} block has shape {a.shape} with {b.size} right-hand sides for {nv} variables")
    if not np.all(np.isfinite(b)) or not np.all(np.isfinite(a.data)):
        raise InvalidInputError(f"{what} block must be finite")
    return a, b


@dataclass
class LPSolution:
    status: str
    values: np.ndarray
    objective: float
    iterations: int
    duals: np.ndarray = None  # equality rows first, then inequality rows
    diagnostics: dict = field(default_factory=dict)

    @property
    def optimal(self):
        return self.status == OPTIMAL


@dataclass
class SimplexOptions:
    max_iter: int = 200_000
    refactor_every: int = 50
    feas_tol: float = 1e-9
    opt_tol: float = 1e-9
    pivot_tol: float = 1e-9
    bland_after: int = 5000  # consecutive degenerate pivots before switching to Bland's rule
    perturbation: float = 1e-7  # random lower-bound relaxation breaking degeneracy; 0 disables
    perturbation_seed: int = 20240101


# -- standard form -------------------------------------------------------------------


@dataclass
class _Standard:
    a: sp.csc_matrix
    b: np.ndarray
    c: np.ndarray
    row_scale: np.ndarray
    col_scale: np.ndarray
    n_orig: int
    free_cols: np.ndarray  # index of the negative part for each free variable
    free_vars: np.ndarray


def _standardise(lp):
    nv = lp.n_vars
    free_vars = np.flatnonzero(lp.free)
    a = sp.vstack([lp.a_eq, lp.a_ub]).tocsc()
    m_eq, m_ub = lp.a_eq.shape[0], lp.a_ub.shape[0]
    blocks = [a]
    if free_vars.size:
        blocks.append(-a[:, free_vars])
    if m_ub:
        blocks.append(sp.vstack([sp.csr_matrix((m_eq, m_ub)), sp.identity(m_ub, format="csr")]))
    a = sp.hstack(blocks).tocsc()
    b = np.concatenate([lp.b_eq, lp.b_ub])
    sense = -1.0 if lp.maximize else 1.0
    c = np.concatenate([sense * lp.objective, -sense * lp.objective[free_vars], np.zeros(m_ub)])
    # max-abs equilibration, rows then columns
    absa = abs(a).tocsr()
    rmax = absa.max(axis=1).toarray().ravel() if a.shape[1] else np.zeros(a.shape[0])
    rs = np.where(rmax > 0, 1.0 / np.where(rmax > 0, rmax, 1.0), 1.0)
    a = (sp.diags(rs) @ a).tocsc()
    cmax = abs(a).max(axis=0).toarray().ravel() if a.shape[0] else np.zeros(a.shape[1])
    cs = np.where(cmax > 0, 1.0 / np.where(cmax > 0, cmax, 1.0), 1.0)
    a = (a @ sp.diags(cs)).tocsc()
    a.sort_indices()
    return _Standard(
        a=a,
        b=rs * b,
        c=cs * c,
        row_scale=rs,
        col_scale=cs,
        n_orig=nv,
        free_cols=nv + np.arange(free_vars.size),
        free_vars=free_vars,
    )


# -- basis handling -------------------------------------------------------------------


class _Basis:
    """LU of the basis matrix with product-form eta updates between refactorisations."""

    def __init__(self, a, cols):
        self.a = a
        self.cols = np.array(cols)
        self.refactor()

    def refactor(self):
        mat = self.a[:, self.cols].tocsc()
        self.lu = splu(mat, permc_spec="COLAMD", options={"SymmetricMode": False})
        self.etas = []

    def ftran(self, v):
        w = self.lu.solve(v)
        for p, d in self.etas:
            wp = w[p] / d[p]
            w -= d * wp
            w[p] = wp
        return w

    def btran(self, v):
        v = v.copy()
        for p, d in reversed(self.etas):
            v[p] = (v[p] - (d @ v - d[p] * v[p])) / d[p]
        return self.lu.solve(v, trans="T")

    def replace(self, p, q, d):
        self.cols[p] = q
        self.etas.append((p, d.copy()))


def _column(a, j):
    v = np.zeros(a.shape[0])
    lo, hi = a.indptr[j], a.indptr[j + 1]
    v[a.indices[lo:hi]] = a.data[lo:hi]
    return v


def _crash(a, b):
    """Per row, a column that is a unit vector there and can sit in the basis at ``b_i``."""
    m = a.shape[0]
    nnz = np.diff(a.indptr)
    chosen = -np.ones(m, dtype=int)
    for j in np.flatnonzero(nnz == 1):
        i = a.indices[a.indptr[j]]
        val = a.data[a.indptr[j]]
        if chosen[i] < 0 and (b[i] == 0 or val > 0):
            chosen[i] = j
    return chosen


def _simplex(a, b, cost, basis, allowed, blocked, opts, it0):
    """Revised simplex iterations from a feasible basis.

    ``allowed``: columns that may enter; ``blocked``: columns that must stay at
    zero while basic (phase II artificials).  Returns ``(status, x_B, its)``.
    """
    m = a.shape[0]
    at = a.T.tocsr()
    xb = basis.ftran(b)
    xb[np.abs(xb) < opts.feas_tol * 1e-3] = 0.0
    degenerate = 0
    bland = False
    it = it0
    since_refactor = 0
    while it < opts.max_iter:
        y = basis.btran(cost[basis.cols])
        rc = cost - at @ y
        rc[basis.cols] = 0.0
        cand = allowed & (rc < -opts.opt_tol)
        if not cand.any():
            return OPTIMAL, xb, it
        q = int(np.flatnonzero(cand)[0]) if bland else int(np.argmin(np.where(cand, rc, 0.0)))
        d = basis.ftran(_column(a, q))
        tol = opts.pivot_tol * max(1.0, np.max(np.abs(d)))
        pos = d > tol
        blk = blocked[basis.cols] & (np.abs(d) > tol)
        if not pos.any() and not blk.any():
            return UNBOUNDED, xb, it
        if blk.any():
            # a basic artificial would move off zero: pivot it out at once
            cand_rows = np.flatnonzero(blk)
            p = int(cand_rows[np.argmax(np.abs(d[cand_rows]))])
            theta = 0.0
        else:
            # Harris: bound the step with relaxed ratios, then take the largest pivot below it
            rows = np.flatnonzero(pos)
            relaxed = (np.maximum(xb[rows], 0.0) + opts.feas_tol) / d[rows]
            bound = relaxed.min()
            exact = np.maximum(xb[rows], 0.0) / d[rows]
            ok = rows[exact <= bound]
            if bland:
                ties = ok[exact[exact <= bound] <= np.min(exact) + 1e-12]
                p = int(ties[np.argmin(basis.cols[ties])])
            else:
                p = int(ok[np.argmax(d[ok])])
            theta = max(xb[p], 0.0) / d[p]
        xb -= theta * d
        xb[p] = theta
        basis.replace(p, q, d)
        it += 1
        since_refactor += 1
        if theta * abs(rc[q]) <= opts.feas_tol * opts.opt_tol:
            degenerate += 1
            if degenerate >= opts.bland_after:
                bland = True
        else:
            degenerate = 0
            bland = False
        if since_refactor >= opts.refactor_every:
            try:
                basis.refactor()
            except RuntimeError:
                return NUMERICAL_FAILURE, xb, it
            xb = basis.ftran(b)
            xb[np.abs(xb) < opts.feas_tol * 1e-3] = 0.0
            since_refactor = 0
    return ITERATION_LIMIT, xb, it


def _dual_simplex(a, b, cost, basis, allowed, blocked, opts, it0):
    """Dual simplex from a dual feasible basis, used to drop the perturbation.

    A basic value leaves when it is negative, or nonzero for a ``blocked``
    column.  Returns ``(status, x_B, its)``.
    """
    at = a.T.tocsr()
    it = it0
    since_refactor = 0
    xb = basis.ftran(b)
    scale = max(1.0, np.max(np.abs(b)))
    tol = opts.feas_tol * scale
    while it < opts.max_iter:
        viol = np.where(xb < -tol, -xb, 0.0)
        bad = blocked[basis.cols] & (np.abs(xb) > tol)
        viol[bad] = np.abs(xb[bad])
        if not viol.any():
            return OPTIMAL, xb, it
        p = int(np.argmax(viol))
        e = np.zeros(a.shape[0])
        e[p] = 1.0
        rho = basis.btran(e)
        alpha = at @ rho
        y = basis.btran(cost[basis.cols])
        rc = np.maximum(cost - at @ y, 0.0)
        # entering column must drive x_p towards zero
        direction = alpha if xb[p] > 0 else -alpha
        ok = allowed.copy()
        ok[basis.cols] = False
        ptol = opts.pivot_tol * max(1.0, np.max(np.abs(alpha[ok]), initial=0.0))
        cand = np.flatnonzero(ok & (direction > ptol))
        if cand.size == 0:
            return INFEASIBLE, xb, it
        ratio = rc[cand] / direction[cand]
        bound = np.min((rc[cand] + opts.opt_tol) / direction[cand])
        near = cand[ratio <= bound]
        q = int(near[np.argmax(direction[near])])
        d = basis.ftran(_column(a, q))
        theta = xb[p] / d[p]
        xb -= theta * d
        xb[p] = theta
        basis.replace(p, q, d)
        it += 1
        since_refactor += 1
        if since_refactor >= opts.refactor_every:
            try:
                basis.refactor()
            except RuntimeError:
                return NUMERICAL_FAILURE, xb, it
            xb = basis.ftran(b)
            since_refactor = 0
    return ITERATION_LIMIT, xb, it


def _solve_simplex(lp, opts):
    std = _standardise(lp)
    a, b = std.a, std.b
    m, ncols = a.shape
    if m == 0:
        # only sign constraints: optimal at 0 unless some cost is negative
        if np.any(std.c < -opts.opt_tol):
            return LPSolution(UNBOUNDED, np.zeros(lp.n_vars), float("nan"), 0)
        return LPSolution(OPTIMAL, np.zeros(lp.n_vars), 0.0, 0, duals=np.zeros(0))
    # Relax x >= 0 to x >= -eps with random eps: substituting x' = x + eps
    # gives the right-hand side b + A eps, generic enough that pivots are
    # rarely degenerate, while every original feasible point stays feasible.
    rng = np.random.default_rng(opts.perturbation_seed)
    eps = opts.perturbation * (1.0 + rng.random(ncols))
    b_work = b + a @ eps
    sign = np.where(b_work < 0, -1.0, 1.0)
    a = (sp.diags(sign) @ a).tocsc()
    a.sort_indices()
    b_work = sign * b_work
    b = sign * b
    chosen = _crash(a, b_work)
    need = np.flatnonzero(chosen < 0)
    art = sp.csc_matrix((np.ones(need.size), (need, np.arange(need.size))), shape=(m, need.size))
    full = sp.hstack([a, art]).tocsc()
    full.sort_indices()
    ntot = ncols + need.size
    is_art = np.zeros(ntot, dtype=bool)
    is_art[ncols:] = True
    cols = chosen.copy()
    cols[need] = ncols + np.arange(need.size)
    try:
        basis = _Basis(full, cols)
    except RuntimeError:
        return LPSolution(NUMERICAL_FAILURE, np.zeros(lp.n_vars), float("nan"), 0, diagnostics={"stage": "crash"})
    diag = {"rows": m, "columns": ncols, "artificials": int(need.size)}
    its = 0
    no_block = np.zeros(ntot, dtype=bool)
    if need.size:
        cost1 = is_art.astype(float)
        status, xb, its = _simplex(full, b_work, cost1, basis, ~is_art, no_block, opts, 0)
        diag["phase1_iterations"] = its
        if status != OPTIMAL:
            diag["stage"] = "phase1"
            status = status if status != UNBOUNDED else NUMERICAL_FAILURE
            return LPSolution(status, np.zeros(lp.n_vars), float("nan"), its, diagnostics=diag)
        infeas = float(np.sum(xb[is_art[basis.cols]]))
        diag["phase1_objective"] = infeas
        if infeas > opts.feas_tol * max(1.0, np.max(np.abs(b_work))):
            return LPSolution(INFEASIBLE, np.zeros(lp.n_vars), float("nan"), its, diagnostics=diag)
    cost2 = np.concatenate([std.c, np.zeros(need.size)])
    status, xb, its = _simplex(full, b_work, cost2, basis, ~is_art, is_art, opts, its)
    if status != OPTIMAL:
        diag["stage"] = "phase2"
        return LPSolution(status, np.zeros(lp.n_vars), float("nan"), its, diagnostics=diag)
    if opts.perturbation > 0:
        # drop the perturbation: the basis stays dual feasible, so the dual
        # simplex restores primal feasibility, then a primal pass polishes
        before = its
        status, xb, its = _dual_simplex(full, b, cost2, basis, ~is_art, is_art, opts, its)
        if status == OPTIMAL:
            status, xb, its = _simplex(full, b, cost2, basis, ~is_art, is_art, opts, its)
        diag["cleanup_iterations"] = its - before
        if status != OPTIMAL:
            diag["stage"] = "cleanup"
            if status == INFEASIBLE:
                # the perturbed problem was feasible, so this is a tolerance artefact
                status = NUMERICAL_FAILURE
            return LPSolution(status, np.zeros(lp.n_vars), float("nan"), its, diagnostics=diag)
    diag["iterations"] = its
    xs = np.zeros(ntot)
    xs[basis.cols] = np.maximum(xb, 0.0)
    x_std = xs[:ncols] * std.col_scale
    x = x_std[: std.n_orig].copy()
    x[std.free_vars] -= x_std[std.free_cols]
    y = basis.btran(cost2[basis.cols])
    sense = -1.0 if lp.maximize else 1.0
    duals = sense * y * sign * std.row_scale
    obj = float(lp.objective @ x)
    return LPSolution(OPTIMAL, x, obj, its, duals=duals, diagnostics=diag)


def _highs_call(lp, method, options):
    from scipy.optimize import linprog

    sense = -1.0 if lp.maximize else 1.0
    bounds = [(None, None) if f else (0, None) for f in lp.free]
    return linprog(
        sense * lp.objective,
        A_ub=lp.a_ub if lp.a_ub.shape[0] else None,
        b_ub=lp.b_ub if lp.a_ub.shape[0] else None,
        A_eq=lp.a_eq if lp.a_eq.shape[0] else None,
        b_eq=lp.b_eq if lp.a_eq.shape[0] else None,
        bounds=bounds,
        method=method,
        options=options,
    )


def _solve_highs(lp):
    sense = -1.0 if lp.maximize else 1.0
    # HiGHS presolve ends in an unknown model status on the badly scaled
    # weight LPs at n = 5, and the dual simplex stalls there; the interior
    # point method (with crossover) on the unreduced model does not
    res = _highs_call(lp, "highs-ipm", {"presolve": False})
    diag = {"method": "highs-ipm"}
    if res.status == 4:
        diag = {"method": "highs-ds", "ipm_message": res.message}
        res = _highs_call(lp, "highs-ds", {})
    status = {0: OPTIMAL, 2: INFEASIBLE, 3: UNBOUNDED, 1: ITERATION_LIMIT}.get(res.status, NUMERICAL_FAILURE)
    if status != OPTIMAL:
        diag["message"] = res.message
        return LPSolution(status, np.zeros(lp.n_vars), float("nan"), int(res.nit), diagnostics=diag)
    duals = []
    if lp.a_eq.shape[0]:
        duals.append(sense * res.eqlin.marginals)
    if lp.a_ub.shape[0]:
        duals.append(sense * res.ineqlin.marginals)
    duals = np.concatenate(duals) if duals else np.zeros(0)
    return LPSolution(OPTIMAL, res.x, float(lp.objective @ res.x), int(res.nit), duals=duals, diagnostics=diag)


def solve_lp(lp, backend="simplex", opts=None):
    """Solve ``lp``; ``backend="highs"`` delegates to SciPy's HiGHS for cross-checks."""
    if backend == "simplex":
        return _solve_simplex(lp, opts or SimplexOptions())
    if backend == "highs":
        return _solve_highs(lp)
    raise InvalidInputError(f"unknown LP backend {backend!r}")


def primal_residual(lp, x):
    """Largest violation of the equality, inequality and sign constraints."""
    r = [0.0]
    if lp.a_eq.shape[0]:
        r.append(np.max(np.abs(lp.a_eq @ x - lp.b_eq)))
    if lp.a_ub.shape[0]:
        r.append(np.max(lp.a_ub @ x - lp.b_ub))
    bounded = ~lp.free
    if bounded.any():
        r.append(np.max(-x[bounded]))
    return float(max(r))


# -- free-format MPS ----------------------------------------------------------------------


def _fmt(v):
    return repr(float(v))


def to_mps(lp, name="RADCAL"):
    """Free-format MPS text with full-precision numbers."""
    names = lp.names or [f"x{j}" for j in range(lp.n_vars)]
    rows = [f"e{i}" for i in range(lp.a_eq.shape[0])] + [f"u{i}" for i in range(lp.a_ub.shape[0])]
    out = io.StringIO()
    out.write(f"NAME {name}\n")
    if lp.maximize:
        out.write("OBJSENSE\n    MAX\n")
    out.write("ROWS\n N obj\n")
    for r in rows:
        out.write(f" {'E' if r[0] == 'e' else 'L'} {r}\n")
    out.write("COLUMNS\n")
    a = sp.vstack([lp.a_eq, lp.a_ub]).tocsc()
    a.sort_indices()
    for j in range(lp.n_vars):
        if lp.objective[j] != 0:
            out.write(f"    {names[j]} obj {_fmt(lp.objective[j])}\n")
        for k in range(a.indptr[j], a.indptr[j + 1]):
            out.write(f"    {names[j]} {rows[a.indices[k]]} {_fmt(a.data[k])}\n")
    out.write("RHS\n")
    for i, v in enumerate(np.concatenate([lp.b_eq, lp.b_ub])):
        if v != 0:
            out.write(f"    rhs {rows[i]} {_fmt(v)}\n")
    if lp.free.any():
        out.write("BOUNDS\n")
        for j in np.flatnonzero(lp.free):
            out.write(f" FR bnd {names[j]}\n")
    out.write("ENDATA\n")
    return out.getvalue()


def read_mps(text):
    """Parse the subset of free-format MPS written by :func:`to_mps`."""
    section = None
    maximize = False
    row_kind = {}
    row_order = []
    cols = {}
    col_order = []
    obj_row = None
    rhs = {}
    free = set()
    for raw in text.splitlines():
        if not raw.strip() or raw.startswith("*"):
            continue
        if not raw[0].isspace():
            section = raw.split()[0]
            continue
        tok = raw.split()
        if section == "OBJSENSE":
            maximize = tok[0].upper() in ("MAX", "MAXIMIZE")
        elif section == "ROWS":
            kind, r = tok
            if kind == "N":
                obj_row = r
            else:
                row_kind[r] = kind
                row_order.append(r)
        elif section == "COLUMNS":
            c = tok[0]
            if c not in cols:
                cols[c] = {}
                col_order.append(c)
            for r, v in zip(tok[1::2], tok[2::2]):
                cols[c][r] = float(v)
        elif section == "RHS":
            for r, v in zip(tok[1::2], tok[2::2]):
                rhs[r] = float(v)
        elif section == "BOUNDS":
            if tok[0] != "FR":
                raise InvalidInputError(f"unsupported bound type {tok[0]}")
            free.add(tok[2])
    eq = [r for r in row_order if row_kind[r] == "E"]
    ub = [r for r in row_order if row_kind[r] == "L"]
    if len(eq) + len(ub) != len(row_order):
        raise InvalidInputError("only E and L rows are supported")
    index = {c: j for j, c in enumerate(col_order)}

    def matrix(rlist):
        pos = {r: i for i, r in enumerate(rlist)}
        ii, jj, vv = [], [], []
        for c, entries in cols.items():
            for r, v in entries.items():
                if r in pos:
                    ii.append(pos[r])
                    jj.append(index[c])
                    vv.append(v)
        return sp.csr_matrix((vv, (ii, jj)), shape=(len(rlist), len(col_order)))

    objective = np.array([cols[c].get(obj_row, 0.0) for c in col_order])
    return LinearProgram(
        objective=objective,
        a_eq=matrix(eq),
        b_eq=np.array([rhs.get(r, 0.0) for r in eq]),
        a_ub=matrix(ub),
        b_ub=np.array([rhs.get(r, 0.0) for r in ub]),
        free=np.array([c in free for c in col_order]),
        maximize=maximize,
        names=col_order,
    )
