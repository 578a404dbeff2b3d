"""Command-line front end: ``rank1lab <command> ...``.

Every command writes JSON (``hull`` writes CSV).  Exit codes: 0 success,
1 property violation, 2 usage or domain error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from . import __version__
from .constitutive import DomainError, Quadruple, from_spec
from .k1analysis import (CertOptions, certify_no_t4, find_rank1, l18_scan, lambda_solve,
                         structure_checks)
from .matspace import Tolerance
from .parallel import parallel_map
from .tn import SearchOptions, lamination_hull, search_all_orderings, search_ordering

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def _finite(obj):
    """Replace non-finite floats by strings so the output stays strict JSON."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def dumps(obj, pretty: bool = False) -> str:
    obj = json.loads(json.dumps(obj, default=_jsonable))
    return json.dumps(_finite(obj), indent=2 if pretty else None, allow_nan=False)


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _interval(vals):
    lo, hi = float(vals[0]), float(vals[1])
    if not lo < hi:
        raise UsageError(f"--interval needs lo < hi, got {lo} {hi}")
    return lo, hi


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def _load_matrices(path) -> np.ndarray:
    data = _load_json(path)
    if isinstance(data, dict):
        data = data.get("matrices")
    try:
        T = np.array(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad matrix file {path}: {exc}") from exc
    if T.ndim != 3:
        raise UsageError(f"bad matrix file {path}: expected a list of equally shaped matrices")
    return T


def _tol(args) -> Tolerance:
    return Tolerance(args.rank_tol, args.residual_tol)


# ------------------------------------------------------------------ commands

def cmd_find_rank1(args):
    f = from_spec(args.fn)
    res = find_rank1(f, _interval(args.interval), grid=args.grid, tol=_tol(args))
    return res.to_json(), EXIT_OK


def _sample_quadruples(f, n, seed, rng_box):
    lo, hi = rng_box
    rng = np.random.default_rng(seed)
    return [rng.uniform(lo, hi, (4, 2)) for _ in range(n)]


def cmd_certify(args):
    f = from_spec(args.fn)
    if args.quadruple:
        data = _load_json(args.quadruple)
        arr = np.array(data, dtype=float)
        items = [arr] if arr.ndim == 2 else list(arr)
    elif args.sample is not None:
        if args.sample < 1:
            raise UsageError("--sample must be positive")
        box = _interval(args.range) if args.range else (max(f.domain[0], -1.0), min(f.domain[1], 1.0))
        items = _sample_quadruples(f, args.sample, args.seed, box)
    else:
        raise UsageError("certify needs --quadruple FILE or --sample N")
    opts = CertOptions(tol=_tol(args), margin=args.margin)

    def one(K):
        try:
            Q = Quadruple.from_array(K)
            return certify_no_t4(f, Q, opts).to_json()
        except (DomainError, ValueError) as exc:
            return {"outcome": "Error", "error": str(exc), "quadruple": np.asarray(K).tolist()}

    reports = parallel_map(one, items)
    by_outcome = Counter(r["outcome"] for r in reports)
    by_path = Counter(f'{r["outcome"]}:{r.get("lemma", "-")}' for r in reports)
    summary = {"total": len(reports), "by_outcome": dict(sorted(by_outcome.items())),
               "by_path": dict(sorted(by_path.items()))}
    if not args.full:
        reports = [{k: v for k, v in r.items() if k not in ("audit",)} for r in reports]
    return {"summary": summary, "reports": reports}, EXIT_OK


def cmd_search_t4(args):
    T = _load_matrices(args.matrices)
    if len(T) < 4:
        raise UsageError(f"search-t4 needs at least 4 matrices, got {len(T)}")
    opts = SearchOptions(starts=args.starts, seed=args.seed, method=args.method, tol=_tol(args))
    if args.orderings == "given":
        return {"ordering": list(range(len(T))), "verdict": search_ordering(T, opts).to_json()}, EXIT_OK
    return search_all_orderings(T, opts).to_json(), EXIT_OK


def cmd_hull(args):
    T = _load_matrices(args.matrices)
    if args.eps <= 0:
        raise UsageError("--eps must be positive")
    H = lamination_hull(T, args.eps, max_gen=args.max_gen, tol=_tol(args), max_points=args.max_points)
    meta = {"points": len(H.points), "generations_run": H.generations_run, "converged": H.converged,
            "partial": H.partial, "seeded": H.seeded}
    sys.stderr.write(dumps(meta) + "\n")
    return H.to_csv(), EXIT_OK


def cmd_scan_lemmas(args):
    f = from_spec(args.fn)
    lo, hi = _interval(args.interval)
    fI = f.restrict(lo, hi)
    n = max(2, int(round(math.sqrt(args.grid))))
    l18 = l18_scan(fI, (lo, hi), n)
    report = {"interval": [lo, hi], "l18": l18}
    violated = l18["violations"] > 0
    sgn = l18["convexity"]
    if sgn > 0:
        rng = np.random.default_rng(args.seed)
        systems, errors = [], []
        for _ in range(args.draws):
            v = float(rng.uniform(lo, hi))
            lam1 = float(rng.uniform(-3.0, 3.0))
            lam2 = float(rng.uniform(-3.0, 3.0))
            if lam1 == 0.0 or lam2 == 0.0:
                continue
            try:
                systems.append(lambda_solve(fI, v, lam1, lam2, (lo - v, hi - v), n=args.lambda_grid))
            except ValueError as exc:
                errors.append(str(exc))
        sc = structure_checks(fI, systems)
        report["lambda_systems"] = {"draws": len(systems), "errors": len(errors),
                                    "max_count_below": max((s.count_below() for s in systems if s.lam1 > 0),
                                                           default=0)}
        report["structure"] = sc.to_json()
        violated = violated or not sc.ok or sc.max_residual > args.residual_tol * 10
    else:
        report["structure"] = {"skipped": "root-bound, sign and monotonicity checks apply to convex a"}
    report["ok"] = not violated
    return report, EXIT_VIOLATION if violated else EXIT_OK


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--pretty", action="store_true", help="indent JSON output")
    common.add_argument("--out", help="write output to this file instead of stdout")
    common.add_argument("--rank-tol", type=float, default=1e-10)
    common.add_argument("--residual-tol", type=float, default=1e-9)

    p = argparse.ArgumentParser(prog="rank1lab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"rank1lab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("find-rank1", parents=[common], help="rank-one connections on an interval")
    s.add_argument("--fn", required=True)
    s.add_argument("--interval", nargs=2, type=float, required=True, metavar=("LO", "HI"))
    s.add_argument("--grid", type=int, default=2001)
    s.set_defaults(func=cmd_find_rank1)

    s = sub.add_parser("certify", parents=[common], help="certify absence of T4 for quadruples")
    s.add_argument("--fn", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--quadruple", help="JSON file: [[u, v], ...] or a list of such quadruples")
    g.add_argument("--sample", type=int, help="number of random quadruples")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--range", nargs=2, type=float, metavar=("LO", "HI"),
                   help="sampling box for u and v (default: domain clipped to [-1, 1])")
    s.add_argument("--margin", type=float, default=1e-9)
    s.add_argument("--full", action="store_true", help="include audit matrices")
    s.set_defaults(func=cmd_certify)

    s = sub.add_parser("search-t4", parents=[common], help="search T_N certificates")
    s.add_argument("--matrices", required=True)
    s.add_argument("--orderings", choices=["all", "given"], default="all")
    s.add_argument("--starts", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--method", choices=["projected", "full"], default="projected")
    s.set_defaults(func=cmd_search_t4)

    s = sub.add_parser("hull", parents=[common], help="lamination hull approximation (CSV)")
    s.add_argument("--matrices", required=True)
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--max-gen", type=int, default=20)
    s.add_argument("--max-points", type=int, default=200_000)
    s.set_defaults(func=cmd_hull)

    s = sub.add_parser("scan-lemmas", parents=[common], help="check structure properties of a flux")
    s.add_argument("--fn", required=True)
    s.add_argument("--interval", nargs=2, type=float, required=True, metavar=("LO", "HI"))
    s.add_argument("--grid", type=int, default=10_000, help="number of (v, r) grid points")
    s.add_argument("--draws", type=int, default=200)
    s.add_argument("--lambda-grid", type=int, default=4001)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_scan_lemmas)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        if args.rank_tol <= 0 or args.residual_tol <= 0:
            raise UsageError("tolerances must be positive")
        result, code = args.func(args)
    except (UsageError, DomainError, ValueError) as exc:
        sys.stderr.write(f"rank1lab: error: {exc}\n")
        return EXIT_USAGE
    _emit(result if isinstance(result, str) else dumps(result, args.pretty), args.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
