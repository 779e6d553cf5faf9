"""Command-line front end.

Exit codes: 0 success, 2 user error (bad flags, files, shapes, configs),
3 numerical degeneracy.  All indices are 1-based.
"""
import argparse
import json
import logging
import os
import sys

import numpy as np

from . import inference
from .errors import DegeneracyError, DimensionError
from .hooi import HooiConfig, hooi, scree
from .io import read_tensor, write_binary, write_matrix_csv
from .simulate import SimConfig, resolve_threads, run_experiment

SCHEMA = 1
EXIT_USAGE = 2
EXIT_DEGENERATE = 3


class UsageError(Exception):
    pass


def _ints(text, n, what):
    try:
        vals = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"{what}: expected {n} comma-separated integers, got {text!r}") from None
    if len(vals) != n:
        raise UsageError(f"{what}: expected {n} comma-separated integers, got {text!r}")
    return vals


def _triples(text, what):
    return [_ints(part.strip(), 3, what) for part in text.split(";") if part.strip()]


def _load(args):
    dims = _ints(args.dims, 3, "--dims") if getattr(args, "dims", None) else None
    return read_tensor(args.tensor, dims=dims)


def _fit(args, t):
    cfg = HooiConfig(_ints(args.ranks, 3, "--ranks"), max_iters=args.max_iters, tol=args.tol)
    return hooi(t, cfg)


def _emit(obj, path):
    text = json.dumps(obj, indent=2)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_decompose(args):
    t = _load(args)
    fit = _fit(args, t)
    os.makedirs(args.out, exist_ok=True)
    for k, u in enumerate(fit.U, start=1):
        write_matrix_csv(os.path.join(args.out, f"U{k}.csv"), u)
    write_binary(os.path.join(args.out, "denoised.t3d"), fit.denoised)
    write_binary(os.path.join(args.out, "core.t3d"), fit.factors.core)
    meta = {
        "schema": SCHEMA,
        "dims": list(t.shape),
        "ranks": list(fit.ranks),
        "iterations_run": fit.iterations_run,
        "converged": fit.converged,
        "singular_values": [s.tolist() for s in fit.singular_values],
        "objective": list(fit.objective),
    }
    _emit(meta, os.path.join(args.out, "fit.json"))
    return 0


def cmd_infer(args):
    t = _load(args)
    fit = _fit(args, t)
    ctx = inference.build_context(t, fit)
    a = args.alpha
    report = {"schema": SCHEMA, "alpha": a, "ranks": list(fit.ranks)}
    if args.entry:
        i, j, k = _ints(args.entry, 3, "--entry")
        ci = inference.entry_ci(ctx, i, j, k, a)
        report.update(target="entry", index=[i, j, k], variance=ci.std_err ** 2,
                      interval=ci.to_dict())
    elif args.loading:
        mode, row = _ints(args.loading, 2, "--loading")
        region = inference.loading_region(ctx, mode, row, a)
        report.update(target="loading", mode=mode, row=row, ellipsoid=region.to_dict())
    elif args.joint:
        triples = _triples(args.joint, "--joint")
        region = inference.joint_region(ctx, triples, a)
        report.update(target="joint", indices=[list(x) for x in triples],
                      ellipsoid=region.to_dict())
    elif args.pair:
        triples = _triples(args.pair, "--pair")
        if len(triples) != 2:
            raise UsageError("--pair needs exactly two triples")
        if triples[0] == triples[1]:
            raise UsageError("--pair triples must be distinct")
        t1, t2 = triples
        ci = inference.pair_difference_ci(ctx, t1, t2, a, printed=args.printed_pair)
        test = inference.equality_test(ctx, t1, t2, a, printed=args.printed_pair)
        report.update(target="pair", indices=[list(t1), list(t2)], variance=ci.std_err ** 2,
                      interval=ci.to_dict(), test=test.to_dict())
    else:
        mode, i, i2 = _ints(args.membership, 3, "--membership")
        if i == i2:
            raise UsageError("--membership rows must differ")
        test = inference.membership_test(ctx, mode, i, i2, a)
        report.update(target="membership", mode=mode, rows=[i, i2], test=test.to_dict(),
                      covariances=[inference.loading_covariance(ctx, mode, i).tolist(),
                                   inference.loading_covariance(ctx, mode, i2).tolist()])
    _emit(report, args.json_out)
    return 0


def cmd_simulate(args):
    try:
        cfg = SimConfig.from_json(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
            cfg.validate()
    except (TypeError, ValueError, json.JSONDecodeError) as exc:
        raise UsageError(f"invalid config: {exc}") from None
    threads = resolve_threads(args.threads)
    report = run_experiment(cfg, threads=threads)
    report.write(args.out)
    sys.stdout.write(report.to_csv())
    return 0


def cmd_scree(args):
    t = _load(args)
    vals = scree(t, args.mode)
    lines = ["index,eigenvalue"] + [f"{n},{v!r}" for n, v in enumerate(vals.tolist(), start=1)]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="tensor-infer", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def tensor_args(p, ranks=True):
        p.add_argument("tensor", help="tensor file (COO CSV or T3D1 binary)")
        p.add_argument("--dims", help="p1,p2,p3 for COO files with trailing zeros")
        if ranks:
            p.add_argument("--ranks", required=True, help="r1,r2,r3")
            p.add_argument("--max-iters", type=int, default=50)
            p.add_argument("--tol", type=float, default=1e-8)

    p = sub.add_parser("decompose", help="HOOI fit; writes factors, denoised tensor, metadata")
    tensor_args(p)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("infer", help="confidence regions, intervals and tests")
    tensor_args(p)
    p.add_argument("--alpha", type=float, default=0.05)
    target = p.add_mutually_exclusive_group(required=True)
    target.add_argument("--entry", metavar="I,J,K")
    target.add_argument("--loading", metavar="K,M")
    target.add_argument("--joint", metavar="I,J,K;I,J,K;...")
    target.add_argument("--pair", metavar="I,J,K;I',J',K'")
    target.add_argument("--membership", metavar="K,I,I'")
    p.add_argument("--printed-pair", action="store_true",
                   help="subtract the overlap covariance once instead of twice")
    p.add_argument("--json-out", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("simulate", help="run a Monte-Carlo experiment from a JSON config")
    p.add_argument("config")
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes (default: $TENSOR_INFER_THREADS or 1)")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("scree", help="eigenvalues of the hollowed Gram matrix")
    tensor_args(p, ranks=False)
    p.add_argument("--mode", type=int, required=True, choices=(1, 2, 3))
    p.add_argument("--out", help="CSV destination (default stdout)")
    p.set_defaults(func=cmd_scree)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DegeneracyError as exc:
        err = {"schema": SCHEMA, "error": {"code": exc.code, "message": str(exc)}}
        print(json.dumps(err), file=sys.stderr)
        return EXIT_DEGENERATE
    except (UsageError, DimensionError, ValueError, OSError) as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
