"""Command-line entry point: ``qfdekit check|solve|study SPEC``.

Exit codes: 0 success, 1 failed audit or refused gate, 2 malformed spec or
usage, 3 non-convergence, 4 singularity.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .engine import LowerSolutionRejected, OperatorError
from .operators import SingularityError
from .problem import (GateRefused, RootBracketError, check_instance, oracle_compare, solve)
from .resolvent import NonConvergence
from .specfile import SpecError, load_spec

SCHEMA_VERSION = 1
EXIT_OK, EXIT_FAILED, EXIT_SPEC, EXIT_NONCONV, EXIT_SINGULAR = 0, 1, 2, 3, 4


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _clean(obj):
    """JSON-safe copy: NaN/inf become null, numpy scalars become Python numbers."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_json(path, payload: dict, meta: dict) -> None:
    doc = {"schema_version": SCHEMA_VERSION, **_clean(payload),
           "metadata": _clean({"created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
                               "version": __version__, "kernel_backend": _kernels.BACKEND, **meta})}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _load(args):
    doc = load_spec(args.spec)
    inst = doc.instance()
    trials, seed = doc.audit_settings()
    if getattr(args, "seed", None) is not None:
        seed = args.seed
    return doc, inst, trials, seed


def print_report(rep, out=None) -> None:
    out = out or sys.stdout
    print(rep.banner, file=out)
    print(f"{'row':<12} {'status':<6} detail", file=out)
    for key, e in rep.entries.items():
        print(f"{key:<12} {'PASS' if e.holds else 'FAIL':<6} {e.detail}", file=out)
    eq = rep.bound_check
    if "lhs" in eq:
        print(f"{'admissible':<12} {'PASS' if eq['holds'] else 'FAIL':<6} "
              f"L(|c| + ||h||) = {eq['lhs']:.17g} <= K = {eq['rhs']:.17g} (c = {eq['c']:.17g})", file=out)
    else:
        print(f"{'admissible':<12} FAIL   {eq.get('error', '')}", file=out)
    print(f"{'admissible2':<12} {'N/A':<6} {rep.second_bound}", file=out)
    cc = rep.composed_contraction
    if cc is None:
        print(f"{'contraction':<12} FAIL   {rep.composed_error}", file=out)
    else:
        print(f"{'contraction':<12} {'PASS' if cc.holds else 'FAIL':<6} M = {rep.M:.6g}, "
              f"min margin {cc.margin:.3g} at r = {cc.witness_r:.3g}; {cc.note}", file=out)
    if rep.composed_corrected is not None:
        c2 = rep.composed_corrected
        print(f"{'(corrected)':<12} {'pass' if c2.holds else 'fail':<6} with w_max^2 in psi_C "
              f"(informational), margin {c2.margin:.3g}", file=out)
    print(f"overall: {'PASS' if rep.overall else 'FAIL'}", file=out)


def cmd_check(args) -> int:
    _, inst, trials, seed = _load(args)
    rep = check_instance(inst, trials, seed)
    print_report(rep)
    if args.json:
        _write_json(args.json, {"command": "check", "report": rep.to_dict()}, {"spec": args.spec})
    return EXIT_OK if rep.overall else EXIT_FAILED


def _trace_rows(trace):
    rows = trace.rows()
    header = ["iter", "delta", "monotone_flag", "residual", "min", "max", "norm", "first", "last"]
    return header, [[r[h] for h in header] for r in rows]


def _write_trace(path, trace, record_iterates: bool) -> None:
    header, rows = _trace_rows(trace)
    _write_csv(path, header, rows)
    if record_iterates and trace.iterates:
        p = Path(path)
        it_path = p.with_name(p.stem + ".iterates.csv")
        t = trace.iterates[0].t
        _write_csv(it_path, ["iter"] + [f"t={v:.17g}" for v in t],
                   [[i] + list(x.values) for i, x in enumerate(trace.iterates)])


def cmd_solve(args) -> int:
    doc, inst, trials, seed = _load(args)
    cfg = doc.engine_config(record_full_iterates=args.record_iterates)
    out = args.out or str(Path(args.spec).with_suffix(".solution.csv"))
    try:
        rep = solve(inst, cfg, override=args.override_gate, trials=trials, rng_seed=seed)
    except GateRefused as exc:
        print_report(exc.report)
        print(f"refused: {exc} (use --override-gate to iterate anyway)", file=sys.stderr)
        if args.json:
            _write_json(args.json, {"command": "solve", "status": "refused",
                                    "hypotheses": exc.report.to_dict()}, {"spec": args.spec})
        return EXIT_FAILED
    except NonConvergence as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        if args.trace and exc.partial is not None:
            _write_trace(args.trace, exc.partial, args.record_iterates)
        if args.json:
            _write_json(args.json, {"command": "solve", "status": "nonconvergence",
                                    "message": str(exc)}, {"spec": args.spec})
        return EXIT_NONCONV
    except OperatorError as exc:
        if args.trace:
            _write_trace(args.trace, exc.trace, args.record_iterates)
        if isinstance(exc.cause, SingularityError):
            print(f"singularity at iteration {exc.iteration}, t = {exc.cause.t:.17g}: {exc.cause}",
                  file=sys.stderr)
            return EXIT_SINGULAR
        print(f"operator error: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except SingularityError as exc:
        print(f"singularity at t = {exc.t:.17g}: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    except LowerSolutionRejected as exc:
        print(f"cannot start: {exc}", file=sys.stderr)
        return EXIT_FAILED

    if not args.no_oracle:
        try:
            oracle_compare(inst, rep)
        except (RootBracketError, SingularityError) as exc:
            print(f"oracle unavailable: {exc}", file=sys.stderr)
    x, y = rep.x_star, rep.y_star
    _write_csv(out, ["t", "x", "y"], zip(x.t, x.values, y.values))
    if args.trace:
        _write_trace(args.trace, rep.trace, args.record_iterates)
    if args.json:
        payload = {"command": "solve", "status": "converged", "solution": rep.to_dict()}
        if rep.hypotheses is not None:
            payload["hypotheses"] = rep.hypotheses.to_dict()
        _write_json(args.json, payload, {"spec": args.spec, "runtime_s": rep.runtime_s})
    gap = "n/a" if rep.oracle_gap is None else f"{rep.oracle_gap:.3e}"
    print(f"converged in {rep.trace.n_iter} iterations; ode_residual {rep.ode_residual:.3e}; "
          f"oracle_gap {gap}; gate {'overridden' if rep.gate_overridden else 'passed'}")
    print(f"solution written to {out}")
    return EXIT_OK


def _study_row(spec_path: str, n: int, seed) -> dict:
    doc = load_spec(spec_path)
    inst = doc.instance(n_points=n)
    trials, s = doc.audit_settings()
    row = {"n_points": n, "oracle_gap": None, "ode_residual": None, "status": "ok"}
    try:
        rep = solve(inst, doc.engine_config(), trials=trials, rng_seed=s if seed is None else seed)
        row["ode_residual"] = rep.ode_residual
        row["oracle_gap"] = oracle_compare(inst, rep)
    except Exception as exc:  # failed rows are marked, the study goes on
        row["status"] = f"failed: {type(exc).__name__}: {exc}"
    return row


EXACT_LEVEL = 1e-11  # differentiation roundoff grows like eps/h


def observed_orders(values) -> list:
    """log2 ratios of successive errors; 'exact' when both sit at roundoff level."""
    out = [None]
    for a, b in zip(values[:-1], values[1:]):
        if a is None or b is None:
            out.append(None)
        elif a <= EXACT_LEVEL and b <= EXACT_LEVEL:
            out.append("exact")
        elif b <= 0:
            out.append(None)
        else:
            out.append(math.log2(a / b))
    return out


def run_study(spec_path: str, grids, seed=None, jobs: int = 1) -> list[dict]:
    grids = sorted(grids)
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            rows = list(ex.map(_study_row, [spec_path] * len(grids), grids, [seed] * len(grids)))
    else:
        rows = [_study_row(spec_path, n, seed) for n in grids]
    for key in ("oracle_gap", "ode_residual"):
        for row, p in zip(rows, observed_orders([r[key] for r in rows])):
            row[f"order_{key}"] = p
    return rows


def cmd_study(args) -> int:
    load_spec(args.spec).instance()  # surface spec errors before any solve
    rows = run_study(args.spec, args.grids, args.seed, args.jobs)

    def show(v):
        if v is None:
            return "-"
        return v if isinstance(v, str) else f"{v:.4g}"

    print(f"{'n_points':>9} {'oracle_gap':>12} {'ode_residual':>13} {'p_gap':>7} {'p_res':>7}  status")
    for r in rows:
        print(f"{r['n_points']:>9} {show(r['oracle_gap']):>12} {show(r['ode_residual']):>13} "
              f"{show(r['order_oracle_gap']):>7} {show(r['order_ode_residual']):>7}  {r['status']}")
    if args.json:
        _write_json(args.json, {"command": "study", "rows": rows}, {"spec": args.spec})
    return EXIT_OK if all(r["status"] == "ok" for r in rows) else EXIT_FAILED


def _grids(text: str) -> list[int]:
    try:
        grids = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--grids expects comma-separated integers, got {text!r}")
    if len(grids) < 2:
        raise argparse.ArgumentTypeError("--grids needs at least two grid sizes")
    return grids


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qfdekit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="audit the hypotheses of a problem spec")
    p.add_argument("spec")
    p.add_argument("--json", metavar="PATH")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("solve", help="solve by monotone block iteration")
    p.add_argument("spec")
    p.add_argument("--out", metavar="PATH.csv", help="solution samples t, x, y")
    p.add_argument("--trace", metavar="PATH.csv")
    p.add_argument("--json", metavar="PATH")
    p.add_argument("--override-gate", action="store_true")
    p.add_argument("--record-iterates", action="store_true")
    p.add_argument("--no-oracle", action="store_true", help="skip the RK4 cross-check")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("study", help="grid-refinement convergence table")
    p.add_argument("spec")
    p.add_argument("--grids", type=_grids, required=True, metavar="N1,N2,...")
    p.add_argument("--json", metavar="PATH")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_study)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SpecError as exc:
        print(f"{args.spec}: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except FileNotFoundError as exc:
        print(f"cannot read spec: {exc}", file=sys.stderr)
        return EXIT_SPEC


if __name__ == "__main__":
    sys.exit(main())
