"""Command-line interface.

Subcommands: ``decompose``, ``check``, ``hstat`` and ``demos``. Exit codes
are 0 on success (or met expectations), 1 when expectations are not met and
2 for usage or input errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import expr as ex
from .core import build
from .functions import Tabulated, as_fn
from .hstat import pairwise
from .idcheck import PROPERTIES, Case, battery_for, judge, random_polynomials, run_suite
from .methods import METHOD_NAMES, MethodError, parse_method
from .space import SpaceError, load_csv, load_space_config, marginal_expect
from .subsets import SubsetJ

DEMO_DIR = Path(__file__).parent / "demos"
DEMOS = ("sec43-counterexample", "sec45-fanova", "prop2-linear")
DEMO_TOL = 1e-9

EXIT_OK, EXIT_UNMET, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Shared plumbing
# ---------------------------------------------------------------------------

def _add_inputs(p: argparse.ArgumentParser, method: bool = True) -> None:
    p.add_argument("--f", dest="formula", help="prediction function formula, e.g. 'x1*x2'; "
                   "omit to use the dataset's y column as a black box")
    p.add_argument("--space", required=True, help="space config file")
    if method:
        p.add_argument("--method", default="pd-proper",
                       help=f"method descriptor: {', '.join(METHOD_NAMES)}; suboptions as "
                       "'ce:rep=median' or 'ale:mode=binned'")
        p.add_argument("--max-order", type=int, default=None,
                       help="largest interaction order (default min(d, 3))")
        p.add_argument("--rep", default="mean",
                       help="representative rule for ce, rp and ale+rp: mean, median, mode "
                       "or a number")
        p.add_argument("--ale-mode", choices=("symbolic", "binned"), default=None,
                       help="ALE mode (default symbolic for formulas, binned for black boxes)")
        p.add_argument("--grid", type=int, default=None, help="ALE quadrature nodes per feature")
    p.add_argument("--bins", type=int, default=None, help="conditioning bins per feature "
                   "for sample spaces")
    p.add_argument("--seed", type=int, default=None, help="sampling seed")
    p.add_argument("--n", type=int, default=None, help="sample size for sample-mode spaces")


def _function(args):
    """Space and prediction function; a dataset y column becomes a black box."""
    if not Path(args.space).exists() and (DEMO_DIR / args.space).exists():
        args.space = str(DEMO_DIR / args.space)     # bundled configs by bare name
    try:
        space, y = load_space_config(args.space, bins=args.bins, seed=args.seed, n=args.n)
    except FileNotFoundError:
        raise UsageError(f"space config not found: {args.space}") from None
    if args.formula is not None:
        return space, as_fn(ex.parse(args.formula, space.d), space.d)
    if y is None:
        raise UsageError("give --f, or a dataset config whose CSV has a y column")
    X, y = load_csv(_dataset_path(args.space))
    return space, Tabulated(X, y)


def _dataset_path(cfg_path: str) -> Path:
    for line in Path(cfg_path).read_text().splitlines():
        key, sep, value = line.split("#", 1)[0].partition("=")
        if sep and key.strip() == "data":
            return Path(cfg_path).parent / value.strip()
    raise UsageError(f"{cfg_path}: no 'data' entry")


def _method(args, f):
    mode = args.ale_mode
    if mode is None and getattr(f, "tabulated", False):
        mode = "binned"
    return parse_method(args.method, rep=_rep(args.rep), mode=mode, grid=args.grid)


def _rep(text: str):
    try:
        return float(text)
    except ValueError:
        return text


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_decompose(args) -> int:
    space, f = _function(args)
    method = _method(args, f)
    dec = build(method, space, f, args.max_order, seed=args.seed)
    out = Path(args.out)
    paths = dec.export(out)
    print(f"{dec.method}: f0 = {dec.f0:.12g}; {len(dec.terms)} terms written to {out}")
    for J, t in dec.terms.items():
        print(f"  {J.key():>10}  max|f_J| = {np.max(np.abs(t.values)):.6g}  c_J = {t.centering:.6g}")
    logging.getLogger(__name__).debug("wrote %s", [str(p) for p in paths])
    return EXIT_OK


def cmd_check(args) -> int:
    space, f = _function(args)
    method = _method(args, f)
    if args.formula is not None:
        user = Case("input", args.formula)
    else:
        user = Case.from_fn("input", f)
    extra = random_polynomials(args.random, space.d, seed=args.battery_seed) if args.random else []
    cases = ([user] if args.battery == "none" else battery_for(space.d) + [user]) + extra
    report = run_suite(method, space, cases, args.max_order, space_name=str(args.space),
                       seed=args.seed or 0)
    print(report.to_table(), end="")
    if args.json:
        Path(args.json).parent.mkdir(parents=True, exist_ok=True)
        Path(args.json).write_text(report.to_json())

    expect_pass, expect_fail = [], []
    if args.expect_id:
        expect_pass = ["P1", "P2", "P3", "P4", "P5", "P6"]
    elif args.expect_p1_p5:
        expect_pass = ["P1", "P2", "P3", "P4", "P5"]
    if args.expect_failures:
        expect_fail = [p.strip() for p in args.expect_failures.split(",") if p.strip()]
        unknown = [p for p in expect_fail if p not in PROPERTIES]
        if unknown:
            raise UsageError(f"unknown properties {unknown}; choose from {', '.join(PROPERTIES)}")
        expect_pass = [p for p in expect_pass if p not in expect_fail]
    if not expect_pass and not expect_fail:
        expect_pass = list(method.expected)
    ok, problems = judge(report, expect_pass, expect_fail)
    for p in expect_pass:
        if p in PROPERTIES and report[p].status == "skipped":
            print(f"note: {p} not checked: {report[p].notes}")
    for msg in problems:
        print(f"UNMET: {msg}")
    print("expectations met" if ok else "expectations NOT met")
    return EXIT_OK if ok else EXIT_UNMET


def cmd_hstat(args) -> int:
    space, f = _function(args)
    if getattr(f, "tabulated", False):
        raise UsageError("the H-statistic needs partial dependence off the sample rows; "
                         "give a formula with --f")
    mat = pairwise(space, f)
    mat.export(args.out)
    for (j, l), s in mat.stats.items():
        h = "undefined" if s.h2 is None else f"{s.h2:.6g}"
        se = "" if not s.se else f" (se {s.se:.2g})"
        print(f"H^2(x{j}, x{l}) = {h}{se}   unnormalized = {s.unnormalized:.6g}")
    return EXIT_OK


def run_demo(name: str) -> dict:
    """Run one bundled demo against its golden file."""
    spec = json.loads((DEMO_DIR / f"{name}.json").read_text())
    space, _ = load_space_config(DEMO_DIR / spec["space"])
    d = space.d
    f = as_fn(ex.parse(spec["f"], d), d)
    pts = space.points
    results = []
    decs, reports, engines = {}, {}, {}
    for chk in spec["checks"]:
        kind = chk["kind"]
        entry = dict(chk)
        if kind == "property":
            m = chk["method"]
            if m not in reports:
                reports[m] = run_suite(parse_method(m), space, battery_for(d) + [Case("demo", spec["f"])],
                                       space_name=spec["space"])
            status = reports[m][chk["property"]].status
            entry.update(got=status, ok=status == chk["status"])
            results.append(entry)
            continue
        if kind == "constant":
            dec = build(parse_method(chk["method"]), space, f, 1)
            got = dec.f0
            entry.update(got=got, ok=abs(got - chk["expected"]) <= DEMO_TOL * (1 + abs(got)))
            results.append(entry)
            continue
        J = SubsetJ.from_indices(chk["J"])
        if kind == "pd":
            vals = marginal_expect(space, f, J)(pts)
        elif kind == "term":
            key = (chk["method"], chk.get("max_order"))
            if key not in decs:
                decs[key] = build(parse_method(chk["method"]), space, f, chk.get("max_order"))
            vals = decs[key][J].values
        elif kind == "apply":
            m = chk["method"]
            if m not in engines:
                engines[m] = parse_method(m).engine(space)
            g = as_fn(ex.parse(chk["input"], d), d)
            vals = engines[m].H(g, J)(pts)
        else:
            raise ValueError(f"unknown demo check kind {kind!r}")
        want = ex.evaluate(ex.parse(chk["expected"], d), pts)
        want = np.broadcast_to(want, vals.shape)
        dev = float(np.max(np.abs(vals - want)))
        entry.update(deviation=dev, ok=dev <= DEMO_TOL * (1 + float(np.max(np.abs(want)))))
        results.append(entry)
    return {"name": name, "ok": all(r["ok"] for r in results), "checks": results}


def cmd_demos(args) -> int:
    if args.list:
        for name in DEMOS:
            spec = json.loads((DEMO_DIR / f"{name}.json").read_text())
            print(f"{name}: {spec['description']}")
        return EXIT_OK
    names = args.names or list(DEMOS)
    unknown = [n for n in names if n not in DEMOS]
    if unknown:
        raise UsageError(f"unknown demo(s) {unknown}; choose from {', '.join(DEMOS)}")
    bundle = []
    all_ok = True
    for name in names:
        res = run_demo(name)
        bundle.append(res)
        all_ok &= res["ok"]
        print(f"{'PASS' if res['ok'] else 'FAIL'}  {name}")
        for r in res["checks"]:
            if not r["ok"]:
                print(f"      mismatch: {json.dumps({k: v for k, v in r.items() if k != 'ok'})}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "demos.json").write_text(json.dumps(bundle, indent=2, sort_keys=True) + "\n")
    return EXIT_OK if all_ok else EXIT_UNMET


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="idecomp", description="Functional decomposition of "
                                     "prediction functions into main and interaction effects.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="tabulate every term of a decomposition")
    _add_inputs(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(run=cmd_decompose)

    p = sub.add_parser("check", help="run the property suite for a method")
    _add_inputs(p)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--expect-id", action="store_true", help="require P1-P6 to pass")
    group.add_argument("--expect-p1-p5", action="store_true", help="require P1-P5 to pass")
    p.add_argument("--expect-failures", default=None,
                   help="comma-separated properties that must fail, e.g. P4,P5")
    p.add_argument("--battery", choices=("standard", "none"), default="standard",
                   help="also check the standard battery functions (default) or only --f")
    p.add_argument("--random", type=int, default=0, help="add this many random polynomials")
    p.add_argument("--battery-seed", type=int, default=0, help="seed of the random polynomials")
    p.add_argument("--json", default=None, help="write the report as JSON to this path")
    p.set_defaults(run=cmd_check)

    p = sub.add_parser("hstat", help="pairwise H-statistics")
    _add_inputs(p, method=False)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(run=cmd_hstat)

    p = sub.add_parser("demos", help="reproduce the bundled worked examples")
    p.add_argument("names", nargs="*", help=f"demos to run (default all): {', '.join(DEMOS)}")
    p.add_argument("--list", action="store_true", help="list demos")
    p.add_argument("--out", default=None, help="write the report bundle here")
    p.set_defaults(run=cmd_demos)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.run(args)
    except (UsageError, ex.ExprError, SpaceError, MethodError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
