"""Command line entry point.

Exit codes: 0 success, 1 invalid input or configuration, 2 solver did not
converge (or an experiment check failed).
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import experiments, fileio, linops, path
from . import regularizers as regs
from .solver import SolveOptions, solve

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NONCONVERGED = 2


def _operator(spec: str, shape):
    if spec == "id":
        return linops.identity(shape)
    kind, sep, file = spec.partition(":")
    if not sep or not file:
        raise ValueError(f"operator must be id, matrix:<file> or conv:<file>, got {spec!r}")
    if kind == "matrix":
        return linops.dense(fileio.read_csv_signal(file, ndim=2))
    if kind == "conv":
        if len(shape) != 1:
            raise ValueError("convolution needs a 1-d signal")
        taps = fileio.read_csv_signal(file).ravel()
        return linops.conv1d(taps, shape[0] - taps.size + 1)
    raise ValueError(f"unknown operator kind {kind!r}")


def _problem(args):
    f = fileio.read_csv_signal(args.input, ndim=2 if args.reg == "tv2d" else None)
    A = _operator(args.op, f.shape)
    if A.output_shape != f.shape:
        raise ValueError(f"data shape {f.shape} does not match operator output {A.output_shape}")
    # a single column is read as the diagonal
    M = fileio.read_csv_signal(args.M) if args.M else None
    if args.reg == "ellipse" and M is None:
        raise ValueError("--reg ellipse needs --M <csv>")
    J = regs.from_name(args.reg, A.input_shape, M=M)
    opts = SolveOptions(max_iters=args.max_iters, gap_tol=args.gap_tol)
    return A, J, f, opts


def _add_problem_args(p):
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=int, default=1, choices=(1, 2))
    p.add_argument("--reg", required=True, choices=("l1", "linf", "tv1d", "tv2d", "ellipse"))
    p.add_argument("--op", default="id", help="id | matrix:<csv> | conv:<csv>")
    p.add_argument("--M", help="CSV matrix (or diagonal) for the ellipse regularizer")
    p.add_argument("--input", required=True, help="data CSV")
    p.add_argument("--gap-tol", type=float, default=None)
    p.add_argument("--max-iters", type=int, default=100_000)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spectralpath")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    for name in ("deconv", "tv2d"):
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True)

    p = sub.add_parser("solve", help="minimize the energy at one time")
    _add_problem_args(p)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--output", required=True, help="solution CSV")

    p = sub.add_parser("path", help="sample the solution path on a grid")
    _add_problem_args(p)
    p.add_argument("--tmin", type=float, required=True)
    p.add_argument("--tmax", type=float, required=True)
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--geometric", action="store_true")
    p.add_argument("--output", required=True, help="path CSV (t,R,J,violation)")
    p.add_argument("--solutions", help="optional CSV with one solution per row")
    return ap


def _experiment(args) -> int:
    cfg = experiments.load_config(args.config)
    expected = experiments.DeconvConfig if args.command == "deconv" else experiments.TV2DConfig
    if not isinstance(cfg, expected):
        raise experiments.ConfigError(f"config describes a different experiment than {args.command!r}")
    run = experiments.run_deconv if args.command == "deconv" else experiments.run_tv2d
    report, _ = run(cfg)
    for k, v in report.checks.items():
        print(f"{k}: {'ok' if v else 'FAIL'}")
    print(f"converged: {report.converged}")
    print(f"output: {cfg.output}")
    return EXIT_OK if report.passed else EXIT_NONCONVERGED


def _solve(args) -> int:
    A, J, f, opts = _problem(args)
    if args.t < 0:
        raise ValueError("--t must be non-negative")
    res = solve(A, J, f, args.alpha, args.beta, args.t, opts)
    fileio.write_csv_signal(args.output, res.u)
    print(f"R={res.residual!r} J={res.reg_value!r} iterations={res.iterations} "
          f"violation={res.violation:.3g} {res.message}")
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def _path(args) -> int:
    A, J, f, opts = _problem(args)
    if not 0 < args.tmin < args.tmax or args.points < 2:
        raise ValueError("need 0 < tmin < tmax and at least 2 points")
    grid = (np.geomspace if args.geometric else np.linspace)(args.tmin, args.tmax, args.points)
    tb = path.sample_path(A, J, f, args.alpha, args.beta, grid, opts)
    path.write_csv(tb, args.output, args.solutions)
    bad = int((~tb.converged).sum())
    print(f"{len(tb)} samples, {bad} not converged")
    return EXIT_OK if bad == 0 else EXIT_NONCONVERGED


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"deconv": _experiment, "tv2d": _experiment, "solve": _solve, "path": _path}
    try:
        return handler[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
