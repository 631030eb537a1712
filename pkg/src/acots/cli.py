"""Command line entry point ``ots``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .acopf import best_line_heuristic, solution_to_dict, solve_local
from .cuts import tighten_all
from .driver import METHODS, RunConfig, RunError, run
from .netmodel import CaseParseError, NetworkValidationError, builtin_case, load_case


def _load(spec: str, ignore_taps: bool):
    p = Path(spec)
    if p.exists():
        return load_case(p, ignore_taps=ignore_taps)
    try:
        return builtin_case(spec, ignore_taps=ignore_taps)
    except FileNotFoundError:
        raise SystemExit(f"ots: no case file or bundled case named {spec!r}")


def _write(path: str | None, payload: dict):
    text = json.dumps(payload, indent=2)
    if path:
        Path(path).write_text(text + "\n")
    return text


def _fmt(v: float) -> str:
    return f"{v:.4f}" if math.isfinite(v) else str(v)


def _cmd_solve(args, net):
    log_file = open(args.search_log, "w") if args.search_log else None
    try:
        cfg = RunConfig(method=args.method, t1=args.t1, t2=args.t2, epsilon=args.eps, mi_gap=args.mi_gap,
                        mi_time_limit=args.mi_time_limit, radius=args.radius, workers=args.workers,
                        seed=args.seed, search_log=log_file)
        rep = run(net, cfg)
    finally:
        if log_file:
            log_file.close()
    _write(args.report, rep.to_dict())
    print(f"case {rep.case}  method {rep.method}")
    print(f"OPF(e) {_fmt(rep.baseline)}  UB {_fmt(rep.ub)}  LB {_fmt(rep.proven_lb)}")
    print(f"%OG {rep.pct_og:.2f}  %CB {rep.pct_cb:.2f}  #off {rep.off_count} {' '.join(rep.off_lines)}")
    print(f"time {rep.timings['total']:.1f}s")
    return 0


def _cmd_baseline(args, net):
    res = solve_local(net, seed=args.seed)
    _write(args.report, solution_to_dict(net, res))
    print(f"{res.status}  objective {_fmt(res.objective)}  max residual {res.max_residual:.2e}")
    return 0 if res.feasible else 1


def _cmd_best_line(args, net):
    x, obj, table = best_line_heuristic(net, workers=args.workers, seed=args.seed)
    rows = {("all-on" if k is None else net.line_label(k)): v for k, v in table.items()}
    _write(args.report, {"topology": [int(v) for v in x], "objective": obj if math.isfinite(obj) else None,
                         "candidates": {k: (v if math.isfinite(v) else None) for k, v in rows.items()}})
    for k, v in rows.items():
        print(f"{k:>10}  {_fmt(v)}")
    off = [net.line_label(l) for l in np.where(np.asarray(x) < 0.5)[0]]
    print(f"best: {'all-on' if not off else 'off ' + ' '.join(off)}  objective {_fmt(obj)}")
    return 0


def _cmd_tighten(args, net):
    rep = tighten_all(net, r=args.radius, workers=args.workers)
    payload = {"bounds": rep.bounds.to_dict(),
               "fixed_on": [net.line_label(l) for l in rep.fixed],
               "never_on": [net.line_label(l) for l in rep.never_on]}
    _write(args.report, payload)
    b = rep.bounds
    for l in range(net.n_line):
        flag = " fixed" if b.fixed_on[l] else ""
        print(f"{net.line_label(l):>10}  c [{b.c_lo[l]:+.5f}, {b.c_hi[l]:+.5f}]  "
              f"s [{b.s_lo[l]:+.5f}, {b.s_hi[l]:+.5f}]{flag}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ots", description="AC optimal transmission switching")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, workers=True):
        p.add_argument("case", help="MATPOWER case file or bundled case name")
        p.add_argument("--ignore-taps", action="store_true", help="treat transformer taps as 1 instead of failing")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--report", help="write a JSON report here")
        if workers:
            p.add_argument("--workers", type=int, default=1)

    s = sub.add_parser("solve", help="run the two-phase switching algorithm")
    common(s)
    s.add_argument("--method", default="socpa-disj",
                   choices=[m.lower().replace("_", "-") for m in METHODS])
    s.add_argument("--t1", type=int, default=5, help="cut rounds")
    s.add_argument("--t2", type=int, default=5, help="mixed-integer rounds")
    s.add_argument("--eps", type=float, default=0.001, help="early-stop relative gap")
    s.add_argument("--mi-gap", type=float, default=1e-4)
    s.add_argument("--mi-time-limit", type=float, default=720.0)
    s.add_argument("--radius", type=int, default=2)
    s.add_argument("--search-log", help="JSON-lines branch-and-bound log")
    s.set_defaults(func=_cmd_solve)

    b = sub.add_parser("baseline", help="local AC OPF with every line on")
    common(b, workers=False)
    b.set_defaults(func=_cmd_baseline)

    bl = sub.add_parser("best-line", help="best single-line removal by local AC OPF")
    common(bl)
    bl.set_defaults(func=_cmd_best_line)

    t = sub.add_parser("tighten", help="bound tightening and binary fixing")
    common(t)
    t.add_argument("--radius", type=int, default=2)
    t.set_defaults(func=_cmd_tighten)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        net = _load(args.case, args.ignore_taps)
        return args.func(args, net)
    except (CaseParseError, NetworkValidationError, RunError, ValueError) as exc:
        print(f"ots: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
