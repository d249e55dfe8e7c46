"""Nonlinear solvers for the radial inverse problem.

``newton_root`` solves ``Lambda(sigma) = y`` (``m = n``) with a dogleg trust
region and random restarts.  Its merit function weights residual ``j`` by
``j^p``: eigenvalues decay like ``1/j`` and their sensitivities faster, and
the weighting markedly shrinks the tail of the restart count.

``lsq_box`` minimises the least-squares misfit with a log-barrier Newton
method keeping ``sigma >= eps``; ``tikhonov_sweep`` runs the same minimiser
on the penalised objective over a grid of weights.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import InvalidInputError, SingularMatrixError
from .forward import analytic_jacobian, eigenvalues, forward_map
from .linalg import cholesky, cholesky_solve, jacobi_svd, lu_solve

CONVERGED = "converged"
STAGNATED = "stagnated"
MAX_ITER = "max_iter"
MAX_RESTARTS = "max_restarts"


@dataclass
class SolveReport:
    status: str
    iterations: int
    restarts: int
    final_residual_inf: float
    final_gradient_inf: float
    iterate: np.ndarray
    objective: float = float("nan")
    trajectory: list = None  # [(iteration, iterate, residual_inf)], accepted iterates only
    diagnostics: dict = field(default_factory=dict)

    @property
    def converged(self):
        return self.status == CONVERGED

    def to_dict(self):
        d = asdict(self)
        d["iterate"] = [float(v) for v in self.iterate]
        if self.trajectory is not None:
            d["trajectory"] = [
                {"iteration": k, "iterate": [float(v) for v in x], "residual_inf": float(r)}
                for k, x, r in self.trajectory
            ]
        return _plain(d)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def trajectory_csv(self):
        """``iter,sigma_1..sigma_n,residual_inf`` rows (header only when no trajectory was kept)."""
        n = len(self.iterate)
        lines = [",".join(["iter"] + [f"sigma_{i + 1}" for i in range(n)] + ["residual_inf"])]
        for k, x, r in self.trajectory or []:
            lines.append(",".join([str(k)] + [repr(float(v)) for v in x] + [repr(float(r))]))
        return "\n".join(lines) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _check_data(geom, y, m=None):
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size == 0 or not np.all(np.isfinite(y)):
        raise InvalidInputError("measurements must be a non-empty finite vector")
    if m is not None and y.size != m:
        raise InvalidInputError(f"expected {m} measurements, got {y.size}")
    return y


# -- trust-region Newton root finding ------------------------------------------


@dataclass
class NewtonOptions:
    tol: float = 1e-15  # on ||Lambda(sigma) - y||_inf
    max_iter: int = 1000  # per attempt
    max_restarts: int = 10
    eps: float = 1e-6  # lower clamp on every conductivity
    eta: float = 1e-4  # step acceptance threshold on the agreement ratio
    shrink_below: float = 0.25
    expand_above: float = 0.75
    min_radius: float = 1e-14
    stall_window: int = 50
    stall_factor: float = 0.99
    divergence_bound: float = 1e8
    residual_weight_power: float = 3.0  # merit uses j^p (lambda_j - y_j); roots are unchanged
    record_trajectory: bool = False


def dogleg_step(jac, res, radius):
    """Dogleg step for ``min ||res + jac s||`` subject to ``||s|| <= radius``."""
    try:
        newton = -lu_solve(jac, res)
        if not np.all(np.isfinite(newton)):
            newton = None
    except SingularMatrixError:
        newton = None
    if newton is not None and np.linalg.norm(newton) <= radius:
        return newton
    g = jac.T @ res
    jg = jac @ g
    if not np.any(g) or not np.any(jg):
        return np.zeros_like(res) if newton is None else newton * (radius / np.linalg.norm(newton))
    cauchy = -(g @ g) / (jg @ jg) * g
    nc = np.linalg.norm(cauchy)
    if newton is None or nc >= radius:
        return cauchy * min(1.0, radius / nc)
    d = newton - cauchy
    a = d @ d
    b = 2.0 * (cauchy @ d)
    c = nc * nc - radius * radius
    t = (-b + np.sqrt(b * b - 4.0 * a * c)) / (2.0 * a)
    return cauchy + t * d


def _dogleg_attempt(geom, y, x0, opts, it0, trajectory):
    m = y.size
    w = np.arange(1, m + 1, dtype=float) ** opts.residual_weight_power
    x = np.maximum(np.asarray(x0, dtype=float), opts.eps)
    res = w * (forward_map(geom, x, m) - y)
    jac = w[:, None] * analytic_jacobian(geom, x, m)
    radius = np.linalg.norm(x)
    best = np.linalg.norm(res)
    since = 0
    if trajectory is not None:
        trajectory.append((it0, x.copy(), float(np.max(np.abs(res / w)))))
    for it in range(opts.max_iter):
        if np.max(np.abs(res / w)) <= opts.tol:
            return x, CONVERGED, it
        step = dogleg_step(jac, res, radius)
        x_new = np.maximum(x + step, opts.eps)
        step = x_new - x
        res_new = w * (forward_map(geom, x_new, m) - y)
        f0 = res @ res
        pred = f0 - np.sum((res + jac @ step) ** 2)
        actual = f0 - res_new @ res_new
        ratio = actual / pred if pred > 0 else -1.0
        ns = np.linalg.norm(step)
        if ratio < opts.shrink_below:
            radius = opts.shrink_below * ns
        elif ratio > opts.expand_above:
            radius = max(radius, 2.0 * ns)
        if ratio > opts.eta:
            x, res = x_new, res_new
            jac = w[:, None] * analytic_jacobian(geom, x, m)
            if trajectory is not None:
                trajectory.append((it0 + it + 1, x.copy(), float(np.max(np.abs(res / w)))))
        nr = np.linalg.norm(res)
        if nr < opts.stall_factor * best:
            best, since = nr, 0
        else:
            since += 1
        if radius < opts.min_radius or since >= opts.stall_window or x.max() > opts.divergence_bound:
            return x, STAGNATED, it + 1
    return x, MAX_ITER, opts.max_iter


def _stagnation_diagnostics(jac, grad):
    sv = jacobi_svd(jac)
    return {
        "gradient_inf": float(np.max(np.abs(grad))),
        "jacobian_sv_max": float(sv[0]),
        "jacobian_sv_min": float(sv[-1]),
        # Gauss-Newton Hessian J^T J has eigenvalues sv^2
        "hessian_eig_max": float(sv[0] ** 2),
        "hessian_eig_min": float(sv[-1] ** 2),
    }


def newton_root(geom, y, box, seed=None, opts=None, x0=None):
    """Solve ``Lambda(sigma) = y`` with ``m = n`` by dogleg trust-region Newton.

    The first start is ``x0`` when given, otherwise a uniform draw in the
    box; every stagnated or exhausted attempt is followed by a fresh uniform
    draw from the same stream, up to ``opts.max_restarts`` times.  When all
    attempts fail the iterate with the smallest residual is returned.
    """
    opts = opts or NewtonOptions()
    y = _check_data(geom, y, geom.n)
    rng = _as_rng(seed)
    start = box.sample(rng, geom.n) if x0 is None else np.asarray(x0, dtype=float)
    trajectory = [] if opts.record_trajectory else None
    total = 0
    attempts = []
    best = None
    for attempt in range(opts.max_restarts + 1):
        if attempt:
            start = box.sample(rng, geom.n)
        x, status, its = _dogleg_attempt(geom, y, start, opts, total, trajectory)
        total += its
        r = float(np.max(np.abs(forward_map(geom, x, y.size) - y)))
        attempts.append({"status": status, "iterations": its, "residual_inf": r})
        if best is None or r < best[1]:
            best = (x, r, status)
        if status == CONVERGED:
            best = (x, r, status)
            break
    x, r, status = best
    if status != CONVERGED and opts.max_restarts > 0:
        status = MAX_RESTARTS
    jac = analytic_jacobian(geom, x, y.size)
    res = forward_map(geom, x, y.size) - y
    grad = jac.T @ res
    diagnostics = {"attempts": attempts}
    if status != CONVERGED:
        diagnostics.update(_stagnation_diagnostics(jac, grad))
    return SolveReport(
        status=status,
        iterations=total,
        restarts=len(attempts) - 1,
        final_residual_inf=r,
        final_gradient_inf=float(np.max(np.abs(grad))),
        iterate=x,
        objective=0.5 * float(res @ res),
        trajectory=trajectory,
        diagnostics=diagnostics,
    )


# -- barrier Newton for (penalised) least squares ---------------------------------


@dataclass
class BarrierOptions:
    grad_tol: float = 1e-12  # on the gradient of the objective, projected on active bounds
    max_iter: int = 500  # per attempt
    max_restarts: int = 10
    eps: float = 1e-6  # lower bound on every conductivity
    mu0: float = 1e-8
    mu_min: float = 1e-14  # below this the barrier is dropped
    mu_factor: float = 0.1
    boundary_fraction: float = 0.995
    armijo: float = 1e-4
    active_tol: float = 1e-9
    step_tol: float = 1e-10  # Newton step accepted as converged when no decrease is representable
    polish_steps: int = 5  # Gauss-Newton refinement after convergence; 0 disables
    record_trajectory: bool = False


class PenalisedMisfit:
    """``0.5 ||Lambda(sigma) - y||^2 + 0.5 weight ||sigma - center||^2`` with exact derivatives."""

    def __init__(self, geom, y, weight=0.0, center=None):
        self.geom = geom
        self.y = np.asarray(y, dtype=float)
        self.m = self.y.size
        self.weight = float(weight)
        self.center = np.zeros(geom.n) if center is None else np.asarray(center, dtype=float)

    def residual(self, x):
        return forward_map(self.geom, x, self.m) - self.y

    def value(self, x):
        r = self.residual(x)
        d = x - self.center
        return 0.5 * (r @ r) + 0.5 * self.weight * (d @ d)

    def stacked(self, x):
        """Residual and Jacobian of the stacked system ``[r; sqrt(weight) (x - center)]``."""
        lam = forward_map(self.geom, x, self.m)
        jac = analytic_jacobian(self.geom, x, self.m)
        if self.weight == 0:
            return lam - self.y, jac
        w = np.sqrt(self.weight)
        return np.concatenate([lam - self.y, w * (x - self.center)]), np.vstack([jac, w * np.eye(x.size)])

    def taylor(self, x):
        lam, jac, hess = ad.taylor2(lambda s: eigenvalues(self.geom, s, self.m), x)
        r = lam - self.y
        d = x - self.center
        f = 0.5 * (r @ r) + 0.5 * self.weight * (d @ d)
        g = jac.T @ r + self.weight * d
        h = jac.T @ jac + np.einsum("j,jab->ab", r, hess) + self.weight * np.eye(x.size)
        return f, g, h


def _shifted_cholesky_solve(h, rhs):
    """Solve ``(h + tau I) d = rhs`` with the smallest ``tau`` from a geometric ladder making it SPD."""
    low = cholesky(h)
    tau = 0.0
    if low is None:
        tau = 1e-12 * max(1.0, float(np.max(np.abs(np.diag(h)))))
        while True:
            low = cholesky(h + tau * np.eye(h.shape[0]))
            if low is not None:
                break
            tau *= 10.0
    return cholesky_solve(low, rhs), tau


_RESOLVABLE = 1e-13  # relative objective change below which values are rounding noise


def _barrier_attempt(model, x0, lower, opts, it0, trajectory):
    """Log-barrier Newton on ``model`` over ``x >= lower``; the barrier weight goes to zero."""
    x = np.maximum(np.asarray(x0, dtype=float), lower * (1.0 + 1e-3))
    mu = opts.mu0
    f, g, h = model.taylor(x)
    if trajectory is not None:
        trajectory.append((it0, x.copy(), float(np.max(np.abs(model.residual(x))))))
    for it in range(opts.max_iter):
        gap = x - lower
        if mu > 0:
            gb = g - mu / gap
            hb = h + np.diag(mu / gap**2)
            if np.max(np.abs(gb)) <= max(opts.grad_tol, mu):
                mu = mu * opts.mu_factor if mu * opts.mu_factor >= opts.mu_min else 0.0
                continue
            free = np.ones(x.size, dtype=bool)
        else:
            active = (gap <= opts.active_tol * max(1.0, lower)) & (g > 0)
            free = ~active
            pg = np.where(free, g, 0.0)
            if np.max(np.abs(pg)) <= opts.grad_tol:
                return x, CONVERGED, it
            gb, hb = g, h
        d = np.zeros_like(x)
        d[free], tau = _shifted_cholesky_solve(hb[np.ix_(free, free)], -gb[free])
        # largest step keeping x >= lower (strictly while the barrier is on)
        neg = d < 0
        alpha_max = 1.0
        if neg.any():
            to_bound = np.min(gap[neg] / -d[neg])
            alpha_max = min(1.0, opts.boundary_fraction * to_bound if mu > 0 else to_bound)
        phi0 = f - mu * np.sum(np.log(gap)) if mu > 0 else f
        slope = gb @ d
        alpha = alpha_max
        accepted = False
        if -alpha * slope <= _RESOLVABLE * abs(phi0):
            # the decrease is below the rounding level of the objective: judge by the gradient
            xt = np.maximum(x + alpha * d, lower)
            if mu == 0 or np.all(xt > lower):
                _, gt, _ = model.taylor(xt)
                gbt = gt - mu / (xt - lower) if mu > 0 else np.where(free, gt, 0.0)
                accepted = np.max(np.abs(gbt)) < np.max(np.abs(np.where(free, gb, 0.0)))
        for _ in range(0 if accepted else 60):
            xt = np.maximum(x + alpha * d, lower)
            if mu > 0 and np.any(xt <= lower):
                alpha *= 0.5
                continue
            ft = model.value(xt)
            phit = ft - mu * np.sum(np.log(xt - lower)) if mu > 0 else ft
            if phit <= phi0 + opts.armijo * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if accepted and np.array_equal(xt, x):
            accepted = False  # the step is below the spacing of x
        if not accepted:
            if mu > 0:
                mu = mu * opts.mu_factor if mu * opts.mu_factor >= opts.mu_min else 0.0
                continue
            if tau == 0 and np.max(np.abs(d)) <= opts.step_tol * max(1.0, np.max(np.abs(x))):
                # at a strict local minimum up to rounding; the gradient floor is above grad_tol
                return x, CONVERGED, it + 1
            return x, STAGNATED, it + 1
        x = xt
        f, g, h = model.taylor(x)
        if trajectory is not None:
            trajectory.append((it0 + it + 1, x.copy(), float(np.max(np.abs(model.residual(x))))))
    return x, MAX_ITER, opts.max_iter


def _gauss_newton_polish(model, x, lower, steps):
    """Gauss-Newton on the stacked residual, solved by least squares on the Jacobian itself.

    The barrier stops on the gradient ``J^T r``, whose solve squares the
    condition number of ``J``; working with ``J`` directly takes the inner
    annuli down to the rounding level of the data.  Steps that would leave
    ``x > lower`` or increase the residual are refused.
    """
    r, jac = model.stacked(x)
    norm = np.linalg.norm(r)
    taken = 0
    for _ in range(steps):
        d = np.linalg.lstsq(jac, -r, rcond=None)[0]
        xt = x + d
        if np.any(xt <= lower) or not np.all(np.isfinite(xt)):
            break
        rt, jt = model.stacked(xt)
        nt = np.linalg.norm(rt)
        if nt > norm:
            break
        x, r, jac, norm = xt, rt, jt, nt
        taken += 1
        if np.max(np.abs(d)) <= 1e-15 * np.max(np.abs(x)):
            break
    return x, taken


def minimize_misfit(model, box, seed=None, opts=None, x0=None):
    """Barrier Newton with random restarts in ``box``; returns a :class:`SolveReport`."""
    opts = opts or BarrierOptions()
    rng = _as_rng(seed)
    n = model.geom.n
    start = box.sample(rng, n) if x0 is None else np.asarray(x0, dtype=float)
    trajectory = [] if opts.record_trajectory else None
    total = 0
    attempts = []
    best = None
    for attempt in range(opts.max_restarts + 1):
        if attempt:
            start = box.sample(rng, n)
        x, status, its = _barrier_attempt(model, start, opts.eps, opts, total, trajectory)
        total += its
        f = float(model.value(x))
        attempts.append({"status": status, "iterations": its, "objective": f})
        if best is None or f < best[1] or status == CONVERGED:
            best = (x, f, status)
        if status == CONVERGED:
            break
    x, f, status = best
    if status != CONVERGED and opts.max_restarts > 0:
        status = MAX_RESTARTS
    polished = 0
    if status == CONVERGED and opts.polish_steps and np.all(x - opts.eps > opts.active_tol * max(1.0, opts.eps)):
        x, polished = _gauss_newton_polish(model, x, opts.eps, opts.polish_steps)
        f = float(model.value(x))
    _, g, h = model.taylor(x)
    active = (x - opts.eps <= opts.active_tol * max(1.0, opts.eps)) & (g > 0)
    diagnostics = {"attempts": attempts, "polish_steps": polished}
    if status != CONVERGED:
        ev = np.linalg.eigvalsh(h)
        diagnostics.update(hessian_eig_min=float(ev[0]), hessian_eig_max=float(ev[-1]))
    return SolveReport(
        status=status,
        iterations=total,
        restarts=len(attempts) - 1,
        final_residual_inf=float(np.max(np.abs(model.residual(x)))),
        final_gradient_inf=float(np.max(np.abs(np.where(active, 0.0, g)))),
        iterate=x,
        objective=f,
        trajectory=trajectory,
        diagnostics=diagnostics,
    )


def lsq_box(geom, y, box, m=None, seed=None, opts=None, x0=None):
    """Least squares ``min 0.5 ||Lambda(sigma) - y||^2`` over ``sigma >= eps``, started uniformly in ``box``."""
    y = _check_data(geom, y, m)
    if y.size < geom.n:
        raise InvalidInputError(f"least squares needs m >= n, got m={y.size}, n={geom.n}")
    return minimize_misfit(PenalisedMisfit(geom, y), box, seed, opts, x0)


# -- Tikhonov ----------------------------------------------------------------------


@dataclass(frozen=True)
class TikhonovConfig:
    lambdas: tuple
    center: tuple

    def __post_init__(self):
        lam = tuple(float(v) for v in self.lambdas)
        if not lam or any(v <= 0 for v in lam):
            raise InvalidInputError("regularisation weights must be positive")
        if any(a >= b for a, b in zip(lam, lam[1:])):
            raise InvalidInputError("regularisation weights must be sorted ascending")
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))

    @classmethod
    def log_grid(cls, box, n, lo=-7.0, hi=-2.0, count=20):
        """``10^alpha`` for ``count`` equally spaced exponents on ``[lo, hi]``, centred prior."""
        return cls(tuple(10.0 ** np.linspace(lo, hi, count)), (box.center,) * n)


@dataclass
class TikhonovResult:
    lambda_star: float
    best: SolveReport
    least_squares: SolveReport
    table: list  # one dict per weight, starting with 0 (least squares)

    @property
    def error_tikhonov(self):
        return self.table[1 + self.lambdas.index(self.lambda_star)]["error_inf"]

    @property
    def error_least_squares(self):
        return self.table[0]["error_inf"]

    @property
    def lambdas(self):
        return [row["lambda"] for row in self.table[1:]]


def tikhonov_sweep(geom, y, box, cfg, sigma_true, seed=None, opts=None):
    """Solve the penalised problem for every weight from one shared random start.

    Weight 0 gives the least-squares estimate.  The Tikhonov estimate is the
    one with the smallest l-infinity error to ``sigma_true`` among the positive
    weights; ties go to the smaller weight.  A solve that fails is recorded in
    the table with its status and still competes through its error.
    """
    y = _check_data(geom, y)
    rng = _as_rng(seed)
    st = np.asarray(sigma_true, dtype=float)
    x0 = box.sample(rng, geom.n)
    table = []
    reports = []
    for lam in (0.0,) + cfg.lambdas:
        rep = minimize_misfit(PenalisedMisfit(geom, y, lam, cfg.center), box, rng, opts, x0)
        err = float(np.max(np.abs(rep.iterate - st)))
        table.append({"lambda": lam, "error_inf": err, "status": rep.status, "objective": rep.objective})
        reports.append(rep)
    errs = [row["error_inf"] for row in table[1:]]
    k = int(np.argmin(errs))
    return TikhonovResult(
        lambda_star=cfg.lambdas[k], best=reports[k + 1], least_squares=reports[0], table=table
    )
