"""Command line entry point.

Exit codes: 0 success, 1 config error, 2 validity-precondition failure,
3 bound violated by an empirical estimate (or an NA check failed).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import bounds
from .harness import (ConfigError, PreconditionError, emit_csv, fit_rate, load_config,
                      rows_to_csv, run_multivariate_experiment, run_univariate_experiment)
from .lattice import decompose_block
from .samplers import verify_na

EXIT_OK, EXIT_CONFIG, EXIT_PRECONDITION, EXIT_VIOLATION = 0, 1, 2, 3


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, default=float))


def cmd_bound(args) -> int:
    if args.kind == "univariate":
        try:
            rep = bounds.univariate_na_bound(args.B, args.cov_sum)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_PRECONDITION
    else:
        try:
            rep = bounds.field_bound_univariate(args.d, args.K, args.lam, args.kappa0, args.An, args.n)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_PRECONDITION
    _print_json(rep.to_dict())
    return EXIT_OK if rep.valid else EXIT_PRECONDITION


def cmd_decompose(args) -> int:
    try:
        part = decompose_block(args.n, args.l, args.d)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"n={part.n} l={part.l} m={part.m} r={part.r} d={part.dim} cells={len(part.cells)}")
    for cell in part.cells:
        print(f"{list(cell.index)}\tcorner={list(cell.corner)}\tsides={list(cell.sides)}")
    return EXIT_OK


def _run(cfg):
    if cfg.mode == "multivariate":
        checks = []
        rows = run_multivariate_experiment(cfg, checks)
        for c in checks:
            print(f"n={c.n} A_n={c.A_n:.6g} |Sigma^-1|max={c.max_abs_inverse:.6g} "
                  f"gershgorin={c.gershgorin_bound:.6g} ok={c.gershgorin_ok} "
                  f"-Sigma_offdiag={c.max_neg_offdiag:.6g} separated_bound={c.separated_bound:.6g} "
                  f"ok={c.separated_ok} psi_n={c.psi_n:.6g}")
        print("note: the multivariate bound has an unknown constant; only the checks above "
              "and the decay of the lower bound are testable")
        return rows, all(c.gershgorin_ok and c.separated_ok for c in checks)
    rows = run_univariate_experiment(cfg)
    return rows, all(r.passed for r in rows)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    cfg.workers = args.workers
    rows, ok = _run(cfg)
    out = args.output or cfg.output
    if out:
        emit_csv(rows, out)
        print(f"wrote {len(rows)} rows to {out}")
    else:
        sys.stdout.write(rows_to_csv(rows))
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_rate(args) -> int:
    cfg = load_config(args.config)
    cfg.workers = args.workers
    rows, ok = _run(cfg)
    for column in ("bound", "empirical_d1"):
        try:
            slope, intercept = fit_rate(rows, column)
            print(f"{column}: slope={slope:.6f} intercept={intercept:.6f}")
        except ValueError as exc:
            print(f"{column}: {exc}")
    if cfg.mode != "multivariate":
        d = cfg.field.d
        rate = -d / 2 if cfg.field.kind == "iid_rademacher" else -d / (2 * d + 2)
        print(f"theoretical rate: {rate:.6f}")
    if cfg.output:
        emit_csv(rows, cfg.output)
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_verify_na(args) -> int:
    cfg = load_config(args.config)
    spec = cfg.field
    ok = True
    for n in cfg.n_list:
        if spec.is_field:
            l = max(1, n // 4)
            m = decompose_block(n, l, spec.d).m ** spec.d
            kw = {"n": n, "l": l}
        else:
            m, kw = n, {"m": n}
        pairs = [((0,), (1,)), (tuple(range(m // 2)), tuple(range(m // 2, m)))]
        for A, B in pairs:
            if not A or not B:
                continue
            rep = verify_na(spec, (A, B), replicates=cfg.replicates, seed=cfg.seed, **kw)
            ok &= rep.passed
            print(f"n={n} A={list(A)} B={list(B)} passed={rep.passed}")
            for p in rep.pairs:
                print(f"  {p.name:<20} cov={p.cov:+.5f} se={p.stderr:.5f} {'ok' if p.passed else 'FAIL'}")
    return EXIT_OK if ok else EXIT_VIOLATION


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nastein", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bound", help="evaluate a closed-form bound")
    bsub = b.add_subparsers(dest="kind", required=True)
    u = bsub.add_parser("univariate", help="bound for a bounded NA sum with unit variance")
    u.add_argument("--B", type=float, required=True)
    u.add_argument("--cov-sum", type=float, required=True)
    f = bsub.add_parser("field", help="bound for a standardized NA lattice block sum")
    f.add_argument("--d", type=int, required=True)
    f.add_argument("--lambda", dest="lam", type=float, required=True)
    f.add_argument("--kappa0", type=float, required=True)
    f.add_argument("--K", type=float, required=True)
    f.add_argument("--An", type=float, required=True)
    f.add_argument("--n", type=int, required=True)
    b.set_defaults(func=cmd_bound)

    dc = sub.add_parser("decompose", help="print the sub-block partition of a block")
    dc.add_argument("--n", type=int, required=True)
    dc.add_argument("--l", type=int, required=True)
    dc.add_argument("--d", type=int, default=1)
    dc.set_defaults(func=cmd_decompose)

    for name, func, helptext in (("simulate", cmd_simulate, "run the experiment in a config, write CSV"),
                                 ("verify-na", cmd_verify_na, "screen a sampler for negative association"),
                                 ("rate", cmd_rate, "run an experiment and fit log-log slopes")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True)
        p.add_argument("--workers", type=int, default=1)
        if name == "simulate":
            p.add_argument("--output")
        p.set_defaults(func=func)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PreconditionError as exc:
        print(f"precondition failed: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
