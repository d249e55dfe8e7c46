"""Experiment definitions run by the harness.

Each experiment maps an :class:`ExperimentConfig` to a :class:`RunManifest`
holding per-trial rows, aggregate statistics and optional figures.  Trials
draw from :func:`derive_seed` with the trial index and a stream label, so
the manifest is the same for any number of worker processes.
"""

import os
import time
from functools import partial

import numpy as np

from .convex import check_weight, estimate_c, handcrafted_weights, solve_pc
from .errors import InvalidInputError
from .forward import RadialGeometry, forward_map
from .harness import RunManifest, derive_seed, run_trials
from .landscape import (
    BoxPrior,
    GridSpec,
    scan_determinant_signs,
    trace_1d_landscape,
    trace_implicit_curves,
)
from .lp import OPTIMAL
from .solvers import TikhonovConfig, lsq_box, newton_root, tikhonov_sweep

ROOT_TOL = 1e-15  # residual defining a successful root-finding pair
HANDCRAFTED_K_LAST = (-7.5, -6.5, -5.0, -4.0)
PERTURBATION_FRACTION = 1.0 / 20.0


def _box(cfg, default=(0.5, 1.5)):
    return BoxPrior(*default) if cfg.box_is_default else BoxPrior(cfg.a, cfg.b)


def _err(x, st):
    return float(np.max(np.abs(np.asarray(x) - st)))


def _lp_backend(n):
    # the revised simplex is exact through n = 4; n = 5 runs through HiGHS
    return "simplex" if n <= 4 else "highs"


def _figure_path(cfg, name):
    return os.path.join(cfg.out, f"{name}.svg")


def _figures_enabled(cfg):
    if not cfg.figures:
        return False
    os.makedirs(cfg.out, exist_ok=True)
    return True


class _Stage:
    """Context manager recording wall-clock seconds into ``manifest.timings``."""

    def __init__(self, manifest, name):
        self.manifest, self.name = manifest, name

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.manifest.timings[self.name] = time.perf_counter() - self.t0
        return False


# -- root finding: error per annulus and mean error vs n ----------------------------------------


def _newton_trial(n, box, seed, stream, i):
    rng = derive_seed(seed, i, stream)
    geom = RadialGeometry.uniform(n)
    st = box.sample(rng, n)
    y = forward_map(geom, st, n)
    rep = newton_root(geom, y, box, seed=rng)
    return {
        "trial": i,
        "status": rep.status,
        "restarts": rep.restarts,
        "residual_inf": rep.final_residual_inf,
        "errors": np.abs(rep.iterate - st).tolist(),
    }


def error_per_annulus(cfg):
    n = cfg.n or 10
    box = _box(cfg)
    trials = cfg.trials_or(100)
    man = RunManifest(cfg.echo())
    cols = ["trial", "status", "restarts", "residual_inf"] + [f"error_{i + 1}" for i in range(n)]
    table = man.table("error_per_annulus", cols)
    with _Stage(man, "trials"):
        results = run_trials(partial(_newton_trial, n, box, cfg.seed, f"error-per-annulus:{n}"), trials, cfg.workers)
    for r in results:
        table.add(**{k: v for k, v in r.items() if k != "errors"}, **{f"error_{i + 1}": e for i, e in enumerate(r["errors"])})
    ok = [r for r in results if r["residual_inf"] <= ROOT_TOL]
    errs = np.array([r["errors"] for r in ok]) if ok else np.full((1, n), np.nan)
    means = errs.mean(axis=0)
    man.aggregates = {
        "trials": trials,
        "success_fraction": len(ok) / trials,
        "restart_fraction": float(np.mean([r["restarts"] > 0 for r in results])),
        "max_restarts": int(max(r["restarts"] for r in results)),
        "mean_error_per_annulus": means.tolist(),
        "inner_outer_orders": float(np.log10(means[-1] / means[0])),
    }
    summary = man.table("mean_error_per_annulus", ["annulus", "mean_error"])
    for i, v in enumerate(means):
        summary.add(annulus=i + 1, mean_error=float(v))
    if _figures_enabled(cfg):
        from .figures import line_figure

        line_figure(_figure_path(cfg, "error_per_annulus"), np.arange(1, n + 1), {"mean error": means}, "annulus", "mean error", logy=True)
    return man


def mean_error_vs_n(cfg):
    box = _box(cfg)
    trials = cfg.trials_or(100)
    ns = list(range(2, (cfg.n or 10) + 1))
    man = RunManifest(cfg.echo())
    table = man.table("mean_error_vs_n_trials", ["n", "trial", "status", "restarts", "residual_inf", "error_inf"])
    summary = man.table("mean_error_vs_n", ["n", "mean_error_inf", "success_fraction"])
    means = []
    for n in ns:
        with _Stage(man, f"n={n}"):
            results = run_trials(partial(_newton_trial, n, box, cfg.seed, f"mean-error-vs-n:{n}"), trials, cfg.workers)
        for r in results:
            table.add(n=n, trial=r["trial"], status=r["status"], restarts=r["restarts"], residual_inf=r["residual_inf"], error_inf=max(r["errors"]))
        ok = [max(r["errors"]) for r in results if r["residual_inf"] <= ROOT_TOL]
        mean = float(np.mean(ok)) if ok else float("nan")
        means.append(mean)
        summary.add(n=n, mean_error_inf=mean, success_fraction=len(ok) / trials)
    man.aggregates = {
        "n": ns,
        "mean_error_inf": means,
        "monotone": bool(np.all(np.diff(means) > 0)),
    }
    if _figures_enabled(cfg):
        from .figures import line_figure

        line_figure(_figure_path(cfg, "mean_error_vs_n"), ns, {"mean error": means}, "n", "mean l-infinity error", logy=True)
    return man


# -- landscape ----------------------------------------------------------------------------------


def det_table(cfg):
    box = _box(cfg)
    ns = list(range(2, (cfg.n or 6) + 1))
    man = RunManifest(cfg.echo())
    cols = [
        "n",
        "det_full_min",
        "det_sub_min",
        "det_Mk_min",
        "sigma_min_full",
        "sigma_min_sub",
        "sign_violations",
        "argmin_is_upper_corner",
    ]
    table = man.table("det_table", cols)
    for n in ns:
        geom = RadialGeometry.uniform(n)
        with _Stage(man, f"n={n}"):
            rep = scan_determinant_signs(geom, GridSpec(cfg.k, box), n)
        table.add(
            n=n,
            det_full_min=rep.min_signed_det_full,
            det_sub_min=rep.min_signed_det_sub,
            det_Mk_min=rep.min_signed_det_Mk,
            sigma_min_full=rep.min_sigma_min_full,
            sigma_min_sub=rep.min_sigma_min_sub,
            sign_violations=rep.sign_violations,
            argmin_is_upper_corner=bool(np.all(rep.argmin_det_full == box.b)),
        )
    man.aggregates = {"total_sign_violations": int(sum(r["sign_violations"] for r in table.rows))}
    return man


def landscape_1d(cfg):
    sigma_true = 1.0
    m = cfg.m or 1
    geom = RadialGeometry.uniform(1)
    man = RunManifest(cfg.echo())
    with _Stage(man, "trace"):
        tr = trace_1d_landscape(geom, sigma_true, m, 0.2, 5.0, num=400)
    table = man.table("landscape_1d", ["sigma", "f", "f1", "f2"])
    for row in zip(tr.sigma, tr.f, tr.f1, tr.f2):
        table.add(**dict(zip(table.columns, map(float, row))))
    sign_changes = int(np.sum(np.sign(tr.f1[1:]) != np.sign(tr.f1[:-1])))
    man.aggregates = {"f1_sign_changes": sign_changes, "f2_min": float(tr.f2.min()), "nonconvex": bool(tr.f2.min() < 0)}
    if _figures_enabled(cfg):
        from .figures import landscape_figure

        landscape_figure(_figure_path(cfg, "landscape_1d"), tr.sigma, tr.f, tr.f1, tr.f2, sigma_true)
    return man


def implicit_curves(cfg):
    box = _box(cfg)
    sigma_true = np.ones(2)
    geom = RadialGeometry.uniform(2)
    man = RunManifest(cfg.echo())
    with _Stage(man, "trace"):
        tr = trace_implicit_curves(geom, sigma_true, (box.a, box.b))
    table = man.table("implicit_curves", ["sigma1", "g", "h", "dh"])
    for row in zip(tr.sigma1, tr.g, tr.h, tr.dh):
        table.add(**dict(zip(table.columns, map(float, row))))
    dh_sign = np.sign(np.diff(tr.h))
    man.aggregates = {
        "complete": tr.complete,
        "h_strictly_monotone": bool(np.all(dh_sign == dh_sign[0])),
        "points": int(tr.sigma1.size),
    }
    if _figures_enabled(cfg):
        from .figures import curves_figure

        h_true = float(forward_map(geom, sigma_true, 2)[1])
        curves_figure(_figure_path(cfg, "implicit_curves"), tr.sigma1, tr.g, tr.h, sigma_true, h_true)
    return man


# -- weight estimation ---------------------------------------------------------------------------


def _weight_runs(cfg, man):
    """Estimated weights for both boxes; ``n`` up to 4 at desk scale, 5 at full scale."""
    top = cfg.n or (5 if cfg.full_scale else 4)
    boxes = [BoxPrior(0.5, 1.5), BoxPrior(0.75, 1.25)] if cfg.box_is_default else [BoxPrior(cfg.a, cfg.b)]
    runs = []
    for box in boxes:
        for n in range(2, top + 1):
            geom = RadialGeometry.uniform(n)
            with _Stage(man, f"estimate_c a={box.a} b={box.b} n={n}"):
                est = estimate_c(geom, box, GridSpec(cfg.k, box), m_start=n, backend=_lp_backend(n))
            runs.append((box, n, est))
    return runs


def c_tables(cfg):
    man = RunManifest(cfg.echo())
    table = man.table("c_tables", ["a", "b", "n", "m_min", "smallest_coefficient", "status", "backend"])
    for box, n, est in _weight_runs(cfg, man):
        table.add(a=box.a, b=box.b, n=n, m_min=est.m_used, smallest_coefficient=est.smallest_coefficient, status=est.status, backend=_lp_backend(n))
    man.aggregates = {"rows": len(table.rows)}
    return man


def c_coefficients(cfg):
    man = RunManifest(cfg.echo())
    table = man.table("c_coefficients", ["a", "b", "n", "m", "i", "c_i"])
    series = {}
    for box, n, est in _weight_runs(cfg, man):
        for i, v in enumerate(est.c):
            table.add(a=box.a, b=box.b, n=n, m=est.m_used, i=i + 1, c_i=float(v))
        if est.status == OPTIMAL:
            series.setdefault((box.a, box.b), {})[f"n={n}"] = est.c
    man.aggregates = {"rows": len(table.rows)}
    if _figures_enabled(cfg):
        from .figures import line_figure

        for (a, b), curves in series.items():
            xs = {label: np.arange(1, c.size + 1) for label, c in curves.items()}
            line_figure(_figure_path(cfg, f"c_coefficients_{a}_{b}"), xs, curves, "i", "c_i", logy=True)
    return man


def _pc_trial(n, m, box, weights, seed, stream, i):
    rng = derive_seed(seed, i, stream)
    geom = RadialGeometry.uniform(n)
    st = box.sample(rng, n)
    y = forward_map(geom, st, m)
    return {label: _err(solve_pc(geom, box, c, y).iterate, st) for label, c in weights}


def handcrafted_c(cfg):
    n = cfg.n or 5
    m = cfg.m or 13
    box = _box(cfg, default=(0.75, 1.25))
    trials = cfg.trials_or(100)
    geom = RadialGeometry.uniform(n)
    man = RunManifest(cfg.echo())
    with _Stage(man, "estimate_c"):
        est = estimate_c(geom, box, GridSpec(cfg.k, box), m_start=m, backend=_lp_backend(n))
    if est.status != OPTIMAL:
        raise InvalidInputError(f"no weight estimate at n={n}, m={m}: {est.status}")
    m = est.m_used
    weights = [("estimated", check_weight(est.c, n))]
    weights += [(f"k_n={k:g}", handcrafted_weights(n, k)) for k in HANDCRAFTED_K_LAST]
    coef = man.table("handcrafted_weights", ["weight", "i", "c_i"])
    for label, c in weights:
        for i, v in enumerate(c):
            coef.add(weight=label, i=i + 1, c_i=float(v))
    with _Stage(man, "trials"):
        results = run_trials(partial(_pc_trial, n, m, box, weights, cfg.seed, f"handcrafted-c:{n}:{m}"), trials, cfg.workers)
    table = man.table("handcrafted_errors", ["trial"] + [label for label, _ in weights])
    for i, r in enumerate(results):
        table.add(trial=i, **r)
    threshold = 0.5 * box.width / 3
    man.aggregates = {
        "m": m,
        "failure_threshold": threshold,
        "median_error": {label: float(np.median([r[label] for r in results])) for label, _ in weights},
        "failure_fraction": {label: float(np.mean([r[label] >= threshold for r in results])) for label, _ in weights},
    }
    if _figures_enabled(cfg):
        from .figures import error_histogram_figure, line_figure

        xs = np.arange(1, n + 1)
        line_figure(_figure_path(cfg, "handcrafted_weights"), xs, {label: c for label, c in weights}, "i", "c_i", logy=True)
        samples = {label: [r[label] for r in results] for label, _ in weights}
        error_histogram_figure(_figure_path(cfg, "handcrafted_errors"), samples, reference=box.width / 3)
    return man


# -- comparisons -----------------------------------------------------------------------------------


def _compare_trial(n, m, box, c, noise, seed, stream, i):
    """Least squares (barrier Newton), the convex program and a uniform guess on one instance."""
    rng = derive_seed(seed, i, stream)
    geom = RadialGeometry.uniform(n)
    st = box.sample(rng, n)
    kind, level = noise
    if kind == "uniform":
        w = rng.uniform(-level, level, m)
    elif kind == "gaussian":
        w = rng.normal(0.0, level, m)
    else:
        w = np.zeros(m)
    z = forward_map(geom, st, m) + w
    ls = lsq_box(geom, z, box, seed=rng)
    # with noise the convex program uses y = z + delta 1, delta the noise level
    pc = solve_pc(geom, box, c, z + level)
    guess = box.sample(rng, n)
    return {
        "trial": i,
        "error_newton": _err(ls.iterate, st),
        "newton_status": ls.status,
        "error_sdp": _err(pc.iterate, st),
        "sdp_status": pc.status,
        "error_random_guess": _err(guess, st),
    }


def _comparison(cfg, name, noise):
    box = _box(cfg)
    trials = cfg.trials_or(200, 1000)
    ns = [cfg.n] if cfg.n else [2, 3, 4]
    man = RunManifest(cfg.echo())
    cols = ["n", "m", "trial", "error_newton", "newton_status", "error_sdp", "sdp_status", "error_random_guess"]
    table = man.table(name, cols)
    summary = man.table(f"{name}_summary", ["n", "m", "newton_le_sdp", "median_newton", "median_sdp", "mean_random_guess"])
    samples = {}
    for n in ns:
        geom = RadialGeometry.uniform(n)
        with _Stage(man, f"estimate_c n={n}"):
            est = estimate_c(geom, box, GridSpec(cfg.k, box), m_start=cfg.m or n, backend=_lp_backend(n))
        if est.status != OPTIMAL:
            man.notes.append(f"n={n}: weight estimation ended with {est.status}; skipped")
            continue
        m = est.m_used
        with _Stage(man, f"trials n={n}"):
            results = run_trials(partial(_compare_trial, n, m, box, est.c, noise, cfg.seed, f"{name}:{n}"), trials, cfg.workers)
        for r in results:
            table.add(n=n, m=m, **r)
        en = np.array([r["error_newton"] for r in results])
        es = np.array([r["error_sdp"] for r in results])
        eg = np.array([r["error_random_guess"] for r in results])
        summary.add(
            n=n,
            m=m,
            newton_le_sdp=float(np.mean(en <= es)),
            median_newton=float(np.median(en)),
            median_sdp=float(np.median(es)),
            mean_random_guess=float(np.mean(eg)),
        )
        samples[n] = (en, es)
    man.aggregates = {"summary": summary.rows, "random_guess_reference": box.width / 3}
    if _figures_enabled(cfg):
        from .figures import error_histogram_figure

        for n, (en, es) in samples.items():
            label = "least squares" if noise[0] != "none" else "Newton"
            ref = box.width / 3 if noise[0] != "none" else None
            error_histogram_figure(_figure_path(cfg, f"{name}_n{n}"), {label: en, "convex program": es}, reference=ref, title=f"n = {n}")
    return man


def sdp_vs_newton(cfg):
    return _comparison(cfg, "sdp_vs_newton", ("none", 0.0))


def sdp_vs_lsq_noisy(cfg):
    noise = (cfg.noise, cfg.noise_level) if cfg.noise != "none" else ("uniform", 1e-4)
    return _comparison(cfg, "sdp_vs_lsq_noisy", noise)


def _tikhonov_trial(n, m, box, lo, hi, cfg_t, noise, seed, stream, i):
    rng = derive_seed(seed, i, stream)
    geom = RadialGeometry.uniform(n)
    st = rng.uniform(lo, hi, n)
    kind, level = noise
    w = rng.normal(0.0, level, m) if kind == "gaussian" else rng.uniform(-level, level, m)
    z = forward_map(geom, st, m) + w
    res = tikhonov_sweep(geom, z, box, cfg_t, st, seed=rng)
    return {
        "trial": i,
        "error_tikhonov": res.error_tikhonov,
        "error_least_squares": res.error_least_squares,
        "lambda_star": res.lambda_star,
    }


def tikhonov_vs_lsq(cfg):
    n = cfg.n or 3
    m = cfg.m or 5
    box = _box(cfg)
    trials = cfg.trials_or(100, 1000)
    noise = (cfg.noise, cfg.noise_level) if cfg.noise != "none" else ("gaussian", 1e-3)
    cfg_t = TikhonovConfig.log_grid(box, n)
    eps = PERTURBATION_FRACTION * box.width
    variants = [("uniform", box.a, box.b), ("perturbed", box.center - eps, box.center + eps)]
    man = RunManifest(cfg.echo())
    table = man.table("tikhonov_vs_lsq", ["variant", "trial", "error_tikhonov", "error_least_squares", "lambda_star"])
    agg = {}
    figs = {}
    for label, lo, hi in variants:
        with _Stage(man, label):
            results = run_trials(
                partial(_tikhonov_trial, n, m, box, lo, hi, cfg_t, noise, cfg.seed, f"tikhonov:{label}"), trials, cfg.workers
            )
        for r in results:
            table.add(variant=label, **r)
        et = np.array([r["error_tikhonov"] for r in results])
        el = np.array([r["error_least_squares"] for r in results])
        agg[label] = {
            "mean_tikhonov": float(et.mean()),
            "mean_least_squares": float(el.mean()),
            "margin": float(el.mean() - et.mean()),
            "tikhonov_better_fraction": float(np.mean(et < el)),
        }
        figs[label] = (et, el, np.array([r["lambda_star"] for r in results]))
    agg["margin_widens"] = agg["perturbed"]["margin"] > agg["uniform"]["margin"]
    man.aggregates = agg
    if _figures_enabled(cfg):
        from .figures import difference_histogram_figure, error_histogram_figure

        lam_bins = 10.0 ** np.linspace(-7.5, -1.5, 25)
        for label, (et, el, lam) in figs.items():
            error_histogram_figure(_figure_path(cfg, f"tikhonov_errors_{label}"), {"Tikhonov": et, "least squares": el}, reference=box.width / 3)
            difference_histogram_figure(_figure_path(cfg, f"tikhonov_difference_{label}"), {label: et - el}, "Tikhonov error - least squares error")
            error_histogram_figure(_figure_path(cfg, f"tikhonov_lambda_{label}"), {"best lambda": lam}, xlabel="lambda", bins=lam_bins)
    return man


def random_guess(cfg):
    box = _box(cfg)
    trials = cfg.trials_or(10000)
    ns = [cfg.n] if cfg.n else [1, 2, 3, 4, 5]
    man = RunManifest(cfg.echo())
    table = man.table("random_guess", ["n", "mean_error_inf", "reference", "relative_gap"])
    ref = box.width / 3
    for n in ns:
        rng = derive_seed(cfg.seed, n, "random-guess")
        st = rng.uniform(box.a, box.b, (trials, n))
        guess = rng.uniform(box.a, box.b, (trials, n))
        mean = float(np.mean(np.max(np.abs(guess - st), axis=1)))
        table.add(n=n, mean_error_inf=mean, reference=ref, relative_gap=(mean - ref) / ref)
    man.aggregates = {"reference": ref, "trials": trials}
    return man


EXPERIMENTS = {
    "error-per-annulus": error_per_annulus,
    "mean-error-vs-n": mean_error_vs_n,
    "det-table": det_table,
    "c-tables": c_tables,
    "c-coefficients": c_coefficients,
    "handcrafted-c": handcrafted_c,
    "sdp-vs-newton": sdp_vs_newton,
    "sdp-vs-lsq-noisy": sdp_vs_lsq_noisy,
    "tikhonov-vs-lsq": tikhonov_vs_lsq,
    "landscape-1d": landscape_1d,
    "implicit-curves": implicit_curves,
    "random-guess": random_guess,
}


def run_experiment(cfg):
    """Dispatch on ``cfg.experiment``; unknown names raise :class:`InvalidInputError`."""
    try:
        func = EXPERIMENTS[cfg.experiment]
    except KeyError:
        raise InvalidInputError(f"unknown experiment {cfg.experiment!r}; choose from {', '.join(EXPERIMENTS)}") from None
    man = func(cfg)
    man.config = cfg.echo()
    return man


__all__ = ["EXPERIMENTS", "run_experiment"]
