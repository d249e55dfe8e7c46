"""Command-line interface.

Exit codes: 0 success, 2 usage or invalid input, 3 numerical failure
(including a solver that ends without converging), 4 file-system errors.
"""

import argparse
import os
import sys

import numpy as np

from .errors import InvalidInputError, NumericalFailure
from .harness import ExperimentConfig, Table, dumps_json, emit, load_config, table_csv

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

# experiments rendered by ``radcal report``; the slow ones only with --full-scale
REPORT_QUICK = ("landscape-1d", "implicit-curves", "det-table", "error-per-annulus", "mean-error-vs-n", "random-guess")
REPORT_FULL = REPORT_QUICK + ("c-tables", "c-coefficients", "handcrafted-c", "sdp-vs-newton", "sdp-vs-lsq-noisy", "tikhonov-vs-lsq")


class _Failure(Exception):
    """A computation finished but its status is not a success."""


def _floats(text):
    try:
        return np.array([float(v) for v in text.replace(",", " ").split()])
    except ValueError:
        raise InvalidInputError(f"expected a list of numbers, got {text!r}") from None


def _geometry(args):
    from .forward import RadialGeometry

    if args.radii:
        return RadialGeometry(tuple(_floats(args.radii)))
    if not args.n:
        raise InvalidInputError("give --n or --radii")
    return RadialGeometry.uniform(args.n)


def _box(args):
    from .landscape import BoxPrior

    return BoxPrior(args.a, args.b)


def _rng(args):
    return np.random.default_rng(args.seed)


def _data(args, geom, m):
    """Measurements from --y, or synthesised from --sigma-true with optional noise."""
    from .forward import forward_map

    if args.y:
        return _floats(args.y), None
    if not args.sigma_true:
        raise InvalidInputError("give --y or --sigma-true")
    st = _floats(args.sigma_true)
    y = forward_map(geom, st, m)
    if args.noise == "uniform":
        y = y + _rng(args).uniform(-args.noise_level, args.noise_level, m)
    elif args.noise == "gaussian":
        y = y + _rng(args).normal(0.0, args.noise_level, m)
    return y, st


def _write(args, name, text):
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        print(path)
    else:
        sys.stdout.write(text)


def _emit_vector(args, name, header, values):
    if (args.format or "csv") == "csv":
        t = Table(list(header))
        for row in values:
            t.add(**dict(zip(header, row)))
        _write(args, f"{name}.csv", table_csv(t))
    else:
        _write(args, f"{name}.json", dumps_json([dict(zip(header, row)) for row in values]))


# -- subcommands --------------------------------------------------------------------------------


def cmd_forward(args):
    from .forward import forward_map, orders

    geom = _geometry(args)
    lam = forward_map(geom, _floats(args.sigma), args.m)
    _emit_vector(args, "forward", ["j", "lambda"], zip(orders(args.m).astype(int), lam))


def cmd_jacobian(args):
    from . import autodiff as ad
    from .forward import analytic_jacobian, eigenvalues

    geom = _geometry(args)
    sigma = _floats(args.sigma)
    if args.method == "analytic":
        jac = analytic_jacobian(geom, sigma, args.m)
    elif args.method == "ad":
        jac = ad.jacobian(lambda s: eigenvalues(geom, s, args.m), sigma)
    else:
        jac = ad.finite_difference_jacobian(lambda s: eigenvalues(geom, s, args.m), sigma)
    header = ["j"] + [f"d_sigma_{i + 1}" for i in range(geom.n)]
    _emit_vector(args, "jacobian", header, [[j + 1] + list(row) for j, row in enumerate(jac)])


def cmd_solve(args):
    from .solvers import TikhonovConfig, lsq_box, newton_root, tikhonov_sweep

    geom = _geometry(args)
    box = _box(args)
    m = geom.n if args.method == "newton" else (args.m or geom.n)
    y, st = _data(args, geom, m)
    rng = _rng(args)
    if args.method == "newton":
        rep = newton_root(geom, y, box, seed=rng)
    elif args.method == "lsq":
        rep = lsq_box(geom, y, box, seed=rng)
    else:
        if st is None:
            raise InvalidInputError("tikhonov selects the weight by the true error: give --sigma-true")
        res = tikhonov_sweep(geom, y, box, TikhonovConfig.log_grid(box, geom.n), st, seed=rng)
        out = {
            "lambda_star": res.lambda_star,
            "error_tikhonov": res.error_tikhonov,
            "error_least_squares": res.error_least_squares,
            "tikhonov": res.best.to_dict(),
            "least_squares": res.least_squares.to_dict(),
            "table": res.table,
        }
        _write(args, "tikhonov.json", dumps_json(out))
        return
    out = rep.to_dict()
    if st is not None:
        out["error_inf"] = float(np.max(np.abs(rep.iterate - st)))
    _write(args, f"{args.method}.json", dumps_json(out))
    if not rep.converged:
        raise _Failure(f"solver ended with status {rep.status}")


def cmd_convex(args):
    from .convex import check_kkt, estimate_c, solve_pc, validate_weight
    from .landscape import GridSpec

    geom = _geometry(args)
    box = _box(args)
    if args.action == "estimate-c":
        est = estimate_c(geom, box, GridSpec(args.k, box), m_start=args.m or None, backend=args.backend)
        _write(args, "weight.json", dumps_json(est.to_dict()))
        if est.status != "optimal":
            raise _Failure(f"weight estimation ended with status {est.status}")
        return
    if not args.c:
        raise InvalidInputError("give the weight with --c")
    c = _floats(args.c)
    if args.action == "solve":
        m = args.m or geom.n
        y, st = _data(args, geom, m)
        rep = solve_pc(geom, box, c, y)
        out = rep.to_dict()
        kkt = check_kkt(geom, box, c, rep.iterate, y, active_tol=args.active_tol)
        out["kkt"] = {
            "lambda": kkt.lam,
            "mu": kkt.mu,
            "z": kkt.z,
            "stationarity_residual_inf": kkt.stationarity_residual_inf,
            "complementarity_residual_inf": kkt.complementarity_residual_inf,
            "primal_residual_inf": kkt.primal_residual_inf,
        }
        if st is not None:
            out["error_inf"] = float(np.max(np.abs(rep.iterate - st)))
        _write(args, "convex_solve.json", dumps_json(out))
        if not rep.converged:
            raise _Failure(f"barrier solver ended with status {rep.status}")
        return
    rep = validate_weight(geom, box, c, args.m or geom.n, args.trials or 100, seed=args.seed)
    if (args.format or "json") == "csv":
        _write(args, "validation_histogram.csv", rep.histogram_csv())
    else:
        out = {
            "failure_threshold": rep.failure_threshold,
            "failure_fraction": rep.failure_fraction,
            "mean_error": rep.mean_error,
            "median_error": rep.median_error,
            "histogram": {"bin_edges": rep.bin_edges, "counts": rep.counts},
            "label": "evidence of universality on sampled instances, not a proof",
        }
        _write(args, "validation.json", dumps_json(out))


def cmd_landscape(args):
    from .landscape import GridSpec, scan_determinant_signs, trace_1d_landscape, trace_implicit_curves

    if args.action == "scan":
        geom = _geometry(args)
        box = _box(args)
        rep = scan_determinant_signs(geom, GridSpec(args.k, box), args.m or geom.n)
        out = {
            "n": rep.n,
            "m": rep.m,
            "min_signed_det_full": rep.min_signed_det_full,
            "min_signed_det_sub": rep.min_signed_det_sub,
            "min_signed_det_Mk": rep.min_signed_det_Mk,
            "min_sigma_min_full": rep.min_sigma_min_full,
            "min_sigma_min_sub": rep.min_sigma_min_sub,
            "argmin_det_full": rep.argmin_det_full,
            "sign_violations": rep.sign_violations,
        }
        _write(args, "scan.json", dumps_json(out))
        if rep.sign_violations:
            raise _Failure(f"{rep.sign_violations} sign violations")
        return
    if args.action == "trace-1d":
        from .forward import RadialGeometry

        st = float(args.sigma_true or 1.0)
        tr = trace_1d_landscape(RadialGeometry.uniform(1), st, args.m or 1, args.lo, args.hi, num=args.num)
        _emit_vector(args, "landscape_1d", ["sigma", "f", "f1", "f2"], zip(tr.sigma, tr.f, tr.f1, tr.f2))
        return
    from .forward import RadialGeometry

    st = _floats(args.sigma_true) if args.sigma_true else np.ones(2)
    tr = trace_implicit_curves(RadialGeometry.uniform(2), st, (args.lo, args.hi), steps=args.num)
    _emit_vector(args, "implicit_curves", ["sigma1", "g", "h", "dh"], zip(tr.sigma1, tr.g, tr.h, tr.dh))


def _config_from(args, name):
    base = load_config(args.config) if args.config else ExperimentConfig()
    values = base.echo()
    values["experiment"] = name
    for key in ("seed", "trials", "format", "workers"):
        if getattr(args, key, None) is not None:
            values[key] = getattr(args, key)
    if args.out:
        values["out"] = args.out
    if args.full_scale:
        values["full_scale"] = True
    if args.no_figures:
        values["figures"] = False
    return ExperimentConfig(**values)


def cmd_experiment(args):
    from .experiments import run_experiment

    cfg = _config_from(args, args.name)
    man = run_experiment(cfg)
    for path in emit(man, cfg.out, cfg.format):
        print(path)
    print(dumps_json(man.aggregates), end="")


def cmd_report(args):
    """Run a set of experiments into subdirectories and write an index with their figures."""
    from .experiments import run_experiment

    root = args.out or "report"
    names = REPORT_FULL if args.full_scale else REPORT_QUICK
    lines = ["# radcal report", ""]
    for name in names:
        cfg = _config_from(args, name)
        cfg.out = os.path.join(root, name)
        man = run_experiment(cfg)
        emit(man, cfg.out, cfg.format)
        lines += [f"## {name}", "", "```json", dumps_json(man.aggregates).rstrip(), "```", ""]
        for fig in sorted(f for f in os.listdir(cfg.out) if f.endswith(".svg")):
            lines.append(f"![{fig}]({name}/{fig})")
        lines.append("")
        print(f"{name}: done", file=sys.stderr)
    os.makedirs(root, exist_ok=True)
    path = os.path.join(root, "report.md")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))
    print(path)


# -- parser ---------------------------------------------------------------------------------------


def _global_flags(p, suppress):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="key = value experiment configuration file")
    p.add_argument("--seed", type=int, default=d, help="master seed (unsigned 64-bit)")
    p.add_argument("--out", default=d, help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default=d)
    p.add_argument("--trials", type=int, default=d)
    p.add_argument("--full-scale", action="store_true", default=d or False)


def _problem_flags(p):
    p.add_argument("--n", type=int, default=0, help="number of annuli (equal radii)")
    p.add_argument("--radii", default="", help="explicit radii 1 = r_0 > ... > r_n = 0")
    p.add_argument("--m", type=int, default=0, help="number of measurements")
    p.add_argument("--a", type=float, default=0.5)
    p.add_argument("--b", type=float, default=1.5)


def _data_flags(p):
    p.add_argument("--y", default="", help="measured eigenvalues")
    p.add_argument("--sigma-true", default="", help="synthesise data from this conductivity")
    p.add_argument("--noise", choices=("none", "uniform", "gaussian"), default="none")
    p.add_argument("--noise-level", type=float, default=0.0)


def build_parser():
    parser = argparse.ArgumentParser(prog="radcal", description="Piecewise-constant radial conductivity toolkit.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, **kw):
        p = sub.add_parser(name, **kw)
        _global_flags(p, suppress=True)
        p.set_defaults(func=func)
        return p

    p = add("forward", cmd_forward, help="eigenvalues lambda_1..lambda_m")
    _problem_flags(p)
    p.add_argument("--sigma", required=True)

    p = add("jacobian", cmd_jacobian, help="derivative of the eigenvalues")
    _problem_flags(p)
    p.add_argument("--sigma", required=True)
    p.add_argument("--method", choices=("analytic", "ad", "fd"), default="analytic")

    p = add("solve", cmd_solve, help="root finding, least squares or Tikhonov")
    p.add_argument("method", choices=("newton", "lsq", "tikhonov"))
    _problem_flags(p)
    _data_flags(p)

    p = add("convex", cmd_convex, help="weight estimation, convex program, universality check")
    p.add_argument("action", choices=("estimate-c", "solve", "validate"))
    _problem_flags(p)
    _data_flags(p)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--c", default="", help="weight vector with c_1 = 1")
    p.add_argument("--backend", choices=("simplex", "highs"), default="simplex")
    p.add_argument("--active-tol", type=float, default=1e-7)

    p = add("landscape", cmd_landscape, help="determinant scans and landscape traces")
    p.add_argument("action", choices=("scan", "trace-1d", "curves"))
    _problem_flags(p)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--sigma-true", default="")
    p.add_argument("--lo", type=float, default=0.5)
    p.add_argument("--hi", type=float, default=1.5)
    p.add_argument("--num", type=int, default=400)

    from .experiments import EXPERIMENTS

    p = add("experiment", cmd_experiment, help="run a named experiment and write its outputs")
    p.add_argument("name", choices=sorted(EXPERIMENTS))
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--no-figures", action="store_true")

    p = add("report", cmd_report, help="run the experiments and write report.md with figures")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--no-figures", action="store_true")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is None and args.command not in ("experiment", "report"):
        args.seed = 0  # experiments take theirs from the configuration
    try:
        args.func(args)
    except InvalidInputError as exc:
        print(f"radcal: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailure, _Failure) as exc:
        print(f"radcal: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"radcal: io error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
