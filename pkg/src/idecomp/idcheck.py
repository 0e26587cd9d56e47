"""Empirical verification of the interaction-decomposition requirements.

Each requirement is checked over a documented battery of functions on one
feature space and summarized in a :class:`PropertyRecord`:

* ``P1`` unbiasedness: ``H_empty = E`` and every other term has mean 0;
* ``P2`` relevance: ``d g / d x_J = 0`` implies ``H_J(g) = 0``;
* ``P3`` lean decomposability: ``g in V_J`` implies ``sum_{J' <= J} H_{J'}(g) = g``;
* ``P4`` idempotence ``H_J(H_J g) = H_J g`` and ``P5`` orthogonality
  ``H_{J'}(H_J g) = 0`` for ``J' != J``;
* ``P6`` consistency with partial dependence under independence:
  ``sum_{J' <= J} H_{J'} = E_{X\\J}``;
* the operator premises ``P2*``, ``P3*``, ``P6*`` on ``L_J``;
* ``Prop1`` reconstruction, ``Prop2`` additive recovery and ``Prop3``
  (a term constant in its own variables vanishes).

Deviations are normalized by ``1 + max|reference|`` over the evaluation
points. On the exact backend the tolerance is the method's (1e-9, or 1e-3
for quadrature-based ALE); on a sample it is ``4/sqrt(n)`` and every record
is advisory.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import expr as ex
from .core import DEngine, Decomposition, build, engine_for, is_partial_zero
from .functions import ExprFn, Fn, Marginal, as_fn, lincomb
from .space import FeatureSpace
from .subsets import SubsetJ, lattice

PROPERTIES = ("P1", "P2", "P3", "P4", "P5", "P6", "P2*", "P3*", "P6*",
              "Prop1", "Prop2", "Prop3")
MC_PROBE_ROWS = 256


# ---------------------------------------------------------------------------
# Battery
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Case:
    """A battery function. ``components`` maps 1-based feature indices to the
    one-variable parts of an additive function (the rest is a constant)."""

    name: str
    formula: str | None
    components: tuple[tuple[int, str], ...] | None = None
    func: Fn | None = field(default=None, compare=False, repr=False)

    @classmethod
    def from_fn(cls, name: str, g: Fn) -> Case:
        return cls(name, None, None, g)

    @property
    def dim(self) -> int:
        if self.func is not None:
            return self.func.d
        return max(ex.parse(self.formula, 16).variables(), default=0)

    def fn(self, d: int) -> Fn:
        if self.func is not None:
            return as_fn(self.func, d)
        return ExprFn(ex.parse(self.formula, d), d)


STANDARD_CASES = (
    Case("const", "5", ()),
    Case("linear", "3 + 2*x1 - x2", ((1, "2*x1"), (2, "-x2"))),
    Case("sum12", "x1 + x2", ((1, "x1"), (2, "x2"))),
    Case("exp-additive", "x1 + exp(x2)", ((1, "x1"), (2, "exp(x2)"))),
    Case("prod12", "x1*x2"),
    Case("prod23", "x2*x3"),
    Case("prod123", "x1*x2*x3"),
    Case("exp1", "exp(x1)", ((1, "exp(x1)"),)),
    Case("prod-plus-sum", "x1*x2 + x1 + x2"),
    Case("square-prod", "x1^2*x2^2"),
    Case("prod12-sq3", "x1*x2*x3^2"),
)


def random_polynomials(n: int = 20, d: int = 3, degree: int = 3, seed: int = 0) -> list[Case]:
    """Seeded random polynomials: every monomial of total degree ``<= degree``
    is kept with probability 1/2 with an integer coefficient in -3..3."""
    from itertools import product
    rng = np.random.default_rng(seed)
    monomials = sorted((p for p in product(range(degree + 1), repeat=d) if sum(p) <= degree),
                       key=lambda p: (sum(p), p))
    cases = []
    for i in range(n):
        parts = []
        for p in monomials:
            keep = rng.random() < 0.5
            coef = int(rng.integers(1, 4)) * (1 if rng.random() < 0.5 else -1)
            if not keep:
                continue
            factors = [f"x{j + 1}" + (f"^{r}" if r > 1 else "") for j, r in enumerate(p) if r]
            parts.append("*".join([str(coef)] + factors))
        cases.append(Case(f"poly{i:02d}", " + ".join(parts) if parts else "0"))
    return cases


def battery_for(d: int, extra: Sequence[Case] = ()) -> list[Case]:
    """Standard cases that fit in dimension ``d`` followed by ``extra``."""
    return [c for c in STANDARD_CASES if c.dim <= d] + [c for c in extra if c.dim <= d]


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------

@dataclass
class PropertyRecord:
    property: str
    status: str                     # pass | fail | skipped
    deviation: float | None
    tolerance: float | None
    witness: dict | None = None
    notes: str = ""
    advisory: bool = False

    def to_dict(self) -> dict:
        return {"property": self.property, "status": self.status,
                "deviation": _num(self.deviation), "tolerance": _num(self.tolerance),
                "witness": _clean(self.witness), "notes": self.notes,
                "advisory": self.advisory}


@dataclass
class PropertyReport:
    method: str
    space: str
    records: list[PropertyRecord] = field(default_factory=list)
    settings: dict = field(default_factory=dict)

    def __getitem__(self, prop: str) -> PropertyRecord:
        for r in self.records:
            if r.property == prop:
                return r
        raise KeyError(prop)

    def status(self, prop: str) -> str:
        return self[prop].status

    def to_dict(self) -> dict:
        return {"method": self.method, "space": self.space, "settings": _clean(self.settings),
                "records": [r.to_dict() for r in self.records]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        rows = [("property", "status", "deviation", "tolerance", "witness / notes")]
        for r in self.records:
            note = r.notes
            if r.witness:
                note = _brief(r.witness) + (f"; {note}" if note else "")
            status = r.status + (" (advisory)" if r.advisory and r.status != "skipped" else "")
            rows.append((r.property, status, _fmt(r.deviation), _fmt(r.tolerance), note))
        widths = [max(len(row[i]) for row in rows) for i in range(4)]
        lines = [f"method: {self.method}    space: {self.space}"]
        for row in rows:
            lines.append("  ".join(c.ljust(w) for c, w in zip(row[:4], widths)) + "  " + row[4])
        return "\n".join(lines) + "\n"


def _num(v):
    if v is None:
        return None
    v = float(v)
    if not math.isfinite(v):
        return str(v)
    return float(f"{v:.6g}")


def _fmt(v) -> str:
    return "-" if v is None else f"{float(v):.3g}"


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _brief(w: dict) -> str:
    keys = ("case", "J", "J'", "x")
    parts = []
    for k in keys:
        if k in w:
            v = w[k]
            if isinstance(v, list):
                v = "(" + ", ".join(f"{float(t):g}" for t in v) + ")"
            parts.append(f"{k}={v}")
    return " ".join(parts)


class _Tracker:
    """Running maximum of normalized deviations with its witness."""

    def __init__(self, prop: str, tol: float, advisory: bool):
        self.prop, self.tol, self.advisory = prop, tol, advisory
        self.worst = None
        self.witness = None
        self.count = 0

    def observe(self, deviation: float, witness: dict) -> None:
        self.count += 1
        if self.worst is None or deviation > self.worst:
            self.worst, self.witness = float(deviation), witness

    def compare(self, got: np.ndarray, want: np.ndarray, pts: np.ndarray, witness: dict) -> None:
        err = np.abs(np.asarray(got) - np.asarray(want))
        i = int(np.argmax(err))
        dev = float(err[i]) / (1.0 + float(np.max(np.abs(want))))
        self.observe(dev, dict(witness, x=pts[i].tolist(), got=float(np.asarray(got)[i]),
                               expected=float(np.asarray(want)[i])))

    def record(self, notes: str = "", empty: str = "no applicable battery instance") -> PropertyRecord:
        if self.count == 0:
            return PropertyRecord(self.prop, "skipped", None, self.tol, None, empty, self.advisory)
        status = "pass" if self.worst <= self.tol else "fail"
        return PropertyRecord(self.prop, status, self.worst, self.tol, self.witness, notes,
                              self.advisory)


def _skipped(prop: str, reason: str, advisory: bool = False) -> PropertyRecord:
    return PropertyRecord(prop, "skipped", None, None, None, reason, advisory)


# ---------------------------------------------------------------------------
# Context
# ---------------------------------------------------------------------------

@dataclass
class _Context:
    method: object
    space: FeatureSpace
    engine: object
    cases: list[Case]
    max_order: int
    tol: float
    points: np.ndarray
    advisory: bool
    skipped_cases: list = field(default_factory=list)
    fns: dict = field(default_factory=dict)
    decs: dict = field(default_factory=dict)

    def fn(self, case: Case) -> Fn:
        if case.name not in self.fns:
            self.fns[case.name] = case.fn(self.space.d)
        return self.fns[case.name]

    def dec(self, case: Case) -> Decomposition:
        if case.name not in self.decs:
            self.decs[case.name] = build(self.engine, self.space, self.fn(case), self.max_order)
        return self.decs[case.name]

    def subsets(self, nonempty: bool = True) -> list[SubsetJ]:
        return [J for J in lattice(self.space.d, self.max_order) if J or not nonempty]

    def tracker(self, prop: str) -> _Tracker:
        return _Tracker(prop, self.tol, self.advisory)

    def zero(self, g: Fn, J: SubsetJ, tol: float | None = None):
        return is_partial_zero(g, J, self.space, self.tol if tol is None else tol,
                               points=None if self.space.is_exact else self.points)


def make_context(method, space: FeatureSpace, cases: Sequence[Case] | None = None,
                 max_order: int | None = None, seed: int = 0) -> _Context:
    d = space.d
    limit = getattr(method, "order_limit", None)
    if max_order is None:
        max_order = min(d, 3) if limit is None else min(d, limit)
    cases = battery_for(d) if cases is None else [c for c in cases if c.dim <= d]
    accepts = getattr(method, "accepts", None)
    skipped_cases = []
    if accepts is not None:
        skipped_cases = [c.name for c in cases if not accepts(c.fn(d))]
        cases = [c for c in cases if c.name not in skipped_cases]
    if space.is_exact:
        tol = getattr(method, "tol", 1e-9)
        pts = space.points
        advisory = False
    else:
        tol = max(4.0 / math.sqrt(space.effective_n), getattr(method, "tol", 1e-9))
        rng = np.random.default_rng(seed)
        take = np.sort(rng.choice(space.n, size=min(MC_PROBE_ROWS, space.n), replace=False))
        pts = space.points[take]
        advisory = True
    return _Context(method, space, engine_for(method, space), list(cases), max_order,
                    tol, pts, advisory, skipped_cases=skipped_cases)


# ---------------------------------------------------------------------------
# Individual checks
# ---------------------------------------------------------------------------

def check_P1(dec: Decomposition, tol: float = 1e-9) -> PropertyRecord:
    """``f_empty = E[f]`` and ``E[f_J] = 0`` for the stored terms."""
    space = dec.space
    fvals = space.evaluate(dec.f)
    scale = 1.0 + float(np.max(np.abs(fvals)))
    tr = _Tracker("P1", tol, not space.is_exact)
    tr.observe(abs(dec.f0 - float(np.sum(space.weights * fvals))) / scale, {"J": "[]"})
    for J, t in dec.terms.items():
        tr.observe(abs(float(np.sum(space.weights * t.values))) / scale, {"J": J.key()})
    return tr.record()


def _check_P1_battery(ctx: _Context) -> PropertyRecord:
    tr = ctx.tracker("P1")
    for case in ctx.cases:
        rec = check_P1(ctx.dec(case), ctx.tol)
        tr.observe(rec.deviation, dict(rec.witness or {}, case=case.name))
    return tr.record()


def check_P2(ctx: _Context) -> PropertyRecord:
    tr = ctx.tracker("P2")
    for case in ctx.cases:
        g = ctx.fn(case)
        for J in ctx.subsets():
            if ctx.zero(g, J, tol=1e-12).holds:
                h = ctx.engine.H(g, J)(ctx.points)
                tr.compare(h, np.zeros_like(h), ctx.points, {"case": case.name, "J": J.key()})
    return tr.record()


def _owning_sets(ctx: _Context, g: Fn) -> list[SubsetJ]:
    """Subsets ``J`` (within the order limit) with ``g in V_J``."""
    return [J for J in ctx.subsets(nonempty=False) if g.scope <= set(J.columns)]


def check_P3(ctx: _Context) -> PropertyRecord:
    tr = ctx.tracker("P3")
    for case in ctx.cases:
        g = ctx.fn(case)
        want = g(ctx.points)
        for J in _owning_sets(ctx, g):
            got = sum(ctx.engine.H(g, sub)(ctx.points) for sub in J.subsets())
            tr.compare(got, want, ctx.points, {"case": case.name, "J": J.key()})
    return tr.record()


def check_P4_P5(ctx: _Context) -> tuple[PropertyRecord, PropertyRecord]:
    p4, p5 = ctx.tracker("P4"), ctx.tracker("P5")
    for case in ctx.cases:
        dec = ctx.dec(case)
        for J, term in dec.terms.items():
            t = term.fn
            tv = term.values
            for Jp in ctx.subsets(nonempty=False):
                got = ctx.engine.H(t, Jp)(ctx.points)
                wit = {"case": case.name, "J": J.key(), "J'": Jp.key()}
                if Jp == J:
                    p4.compare(got, t(ctx.points), ctx.points, wit)
                else:
                    # normalize by the term being re-decomposed
                    err = np.abs(got)
                    i = int(np.argmax(err))
                    p5.observe(float(err[i]) / (1.0 + float(np.max(np.abs(tv)))),
                               dict(wit, x=ctx.points[i].tolist(), got=float(got[i]),
                                    expected=0.0))
    return p4.record(), p5.record()


def check_P6(ctx: _Context) -> PropertyRecord:
    if not ctx.space.is_exact:
        return _skipped("P6", "independence cannot be certified on a sample", True)
    if not ctx.space.is_independent():
        return _skipped("P6", "requires independent features; the joint law does not factorize")
    tr = ctx.tracker("P6")
    for case in ctx.cases:
        g = ctx.fn(case)
        for J in ctx.subsets():
            got = sum(ctx.engine.H(g, sub)(ctx.points) for sub in J.subsets())
            want = Marginal(g, J.columns, ctx.space)(ctx.points)
            tr.compare(got, want, ctx.points, {"case": case.name, "J": J.key()})
    return tr.record()


def check_premises(ctx: _Context) -> list[PropertyRecord]:
    eng = ctx.engine
    if not isinstance(eng, DEngine):
        reason = "the method defines its terms directly, without operators L_J"
        return [_skipped(p, reason, ctx.advisory) for p in ("P2*", "P3*", "P6*")]
    p2, p3, p6 = ctx.tracker("P2*"), ctx.tracker("P3*"), ctx.tracker("P6*")
    independent = ctx.space.is_exact and ctx.space.is_independent()

    def observe(tr, zc, wit):
        scale = zc.tolerance / ctx.tol
        tr.observe(zc.deviation / scale, dict(wit, **(zc.witness or {})))

    for case in ctx.cases:
        g = ctx.fn(case)
        for J in ctx.subsets():
            wit = {"case": case.name, "J": J.key()}
            Lg = eng.L(g, J)
            if ctx.zero(g, J, tol=1e-12).holds:
                observe(p2, ctx.zero(Lg, J), wit)
            if g.scope <= set(J.columns):
                observe(p3, ctx.zero(lincomb([(1.0, Lg), (-1.0, g)]), J), wit)
            if independent:
                diff = lincomb([(1.0, Lg), (-1.0, Marginal(g, J.columns, ctx.space))])
                observe(p6, ctx.zero(diff, J), wit)
    out = [p2.record(), p3.record()]
    if independent:
        out.append(p6.record())
    else:
        out.append(_skipped("P6*", "requires exact independent features", ctx.advisory))
    return out


def check_prop2_centering(ctx: _Context) -> PropertyRecord:
    """Additive ``f = c + sum_j g_j`` must give ``f_j = g_j - E[g_j]`` and no
    interactions."""
    tr = ctx.tracker("Prop2")
    d = ctx.space.d
    for case in ctx.cases:
        if case.components is None:
            continue
        dec = ctx.dec(case)
        parts = dict(case.components)
        for J, term in dec.terms.items():
            if len(J) == 1 and J.indices[0] in parts:
                comp = ExprFn(ex.parse(parts[J.indices[0]], d), d)
                want = comp(ctx.points) - ctx.space.expect(comp)
            else:
                want = np.zeros(ctx.points.shape[0])
            tr.compare(term.fn(ctx.points), want, ctx.points, {"case": case.name, "J": J.key()})
    return tr.record()


def check_prop1_prop3(dec: Decomposition, tol: float = 1e-9, points=None) -> tuple[PropertyRecord, PropertyRecord]:
    space = dec.space
    advisory = not space.is_exact
    pts = space.points if points is None else points
    if dec.max_order < space.d:
        p1 = _skipped("Prop1", f"needs max_order = d = {space.d}", advisory)
    else:
        tr = _Tracker("Prop1", tol, advisory)
        tr.compare(dec.reconstruct(pts), dec.f(pts), pts, {})
        p1 = tr.record()
    tr = _Tracker("Prop3", tol, advisory)
    for J, term in dec.terms.items():
        zc = is_partial_zero(term.fn, J, space, tol, points=None if space.is_exact else pts)
        if zc.holds:
            v = term.fn(pts)
            tr.compare(v, np.zeros_like(v), pts, {"J": J.key()})
    return p1, tr.record()


def _check_prop1_prop3_battery(ctx: _Context) -> tuple[PropertyRecord, PropertyRecord]:
    t1, t3 = ctx.tracker("Prop1"), ctx.tracker("Prop3")
    skipped1 = None
    for case in ctx.cases:
        r1, r3 = check_prop1_prop3(ctx.dec(case), ctx.tol, ctx.points)
        for tr, rec in ((t1, r1), (t3, r3)):
            if rec.status == "skipped":
                if tr is t1:
                    skipped1 = rec
                continue
            tr.observe(rec.deviation, dict(rec.witness or {}, case=case.name))
    rec1 = skipped1 if skipped1 is not None and t1.count == 0 else t1.record()
    return rec1, t3.record(empty="no term is constant in its own variables")


# ---------------------------------------------------------------------------
# Suite
# ---------------------------------------------------------------------------

def run_suite(method, space: FeatureSpace, cases: Sequence[Case] | None = None,
              max_order: int | None = None, space_name: str = "", seed: int = 0,
              properties: Iterable[str] = PROPERTIES) -> PropertyReport:
    """Run the requested property checks and collect a report."""
    props = set(properties)
    ctx = make_context(method, space, cases, max_order, seed)
    name = getattr(method, "name", getattr(ctx.engine, "name", str(method)))
    report = PropertyReport(name, space_name or f"{space.kind} d={space.d} n={space.effective_n}",
                            settings={"max_order": ctx.max_order, "tolerance": ctx.tol,
                                      "cases": [c.name for c in ctx.cases],
                                      "inapplicable_cases": ctx.skipped_cases,
                                      "backend": space.kind, "seed": seed})
    recs: dict[str, PropertyRecord] = {}
    if any(getattr(ctx.fn(c), "tabulated", False) for c in ctx.cases):
        # every other check evaluates functions away from the data rows
        for p in props - {"P1"}:
            recs[p] = _skipped(p, "black-box f is known only at the sample rows", ctx.advisory)
        props = props & {"P1"}
    if "P1" in props:
        recs["P1"] = _check_P1_battery(ctx)
    if "P2" in props:
        recs["P2"] = check_P2(ctx)
    if "P3" in props:
        recs["P3"] = check_P3(ctx)
    if props & {"P4", "P5"}:
        recs["P4"], recs["P5"] = check_P4_P5(ctx)
    if "P6" in props:
        recs["P6"] = check_P6(ctx)
    if props & {"P2*", "P3*", "P6*"}:
        for r in check_premises(ctx):
            recs[r.property] = r
    if props & {"Prop1", "Prop3"}:
        recs["Prop1"], recs["Prop3"] = _check_prop1_prop3_battery(ctx)
    if "Prop2" in props:
        recs["Prop2"] = check_prop2_centering(ctx)
    report.records = [recs[p] for p in PROPERTIES if p in recs]
    return report


def judge(report: PropertyReport, expect_pass: Iterable[str] = (),
          expect_fail: Iterable[str] = ()) -> tuple[bool, list[str]]:
    """Compare a report with expectations.

    An expected pass is unmet when the record fails (advisory records never
    count). An expected failure is unmet unless the record fails.
    """
    problems = []
    for p in expect_pass:
        rec = report[p]
        if rec.status == "fail" and not rec.advisory:
            problems.append(f"{p} expected to pass but failed (deviation {rec.deviation:.3g} > "
                            f"{rec.tolerance:.3g})")
    for p in expect_fail:
        rec = report[p]
        if rec.status != "fail":
            problems.append(f"{p} expected to fail but is {rec.status}")
    return not problems, problems
