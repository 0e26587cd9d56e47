"""Decomposition methods.

Methods built from an operator family ``L_J`` go through the recursion in
:mod:`idecomp.core`: partial-dependence proper, conditional expectations of
anchored differences (CE), representative-point substitution (RP),
accumulated local effects (ALE) and the ALE+RP hybrid. PD-naive, functional
ANOVA and the two polynomial decompositions define their terms directly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import expr as ex
from .core import DEngine, Engine, LFamily, centered, partial_difference
from .functions import (ALEIntegral, BinnedALE, Conditional, Const, ExprFn, Fn, LinComb,
                        Marginal, NotDifferentiableError, conditional, Product, Substituted, lincomb,
                        substitute)
from .space import FeatureSpace, representatives
from .subsets import EMPTY, SubsetJ

ID_PROPERTIES = ("P1", "P2", "P3", "P4", "P5", "P6")
P1_P5 = ("P1", "P2", "P3", "P4", "P5")
DEFAULT_GRID = 64
# the hybrid integrates first-order effects only, so a finer grid is cheap
HYBRID_GRID = 256


class MethodError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Operator families
# ---------------------------------------------------------------------------

def pd_proper_family() -> LFamily:
    """``L_J = E_{X\\J}``: average over the unconditional law of ``X_{\\J}``."""
    def apply(g: Fn, J: SubsetJ, space: FeatureSpace) -> Fn:
        if g.scope <= set(J.columns):
            return g
        return Marginal(g, J.columns, space)
    return LFamily("pd-proper", apply, "partial dependence, routed through the recursion")


def ce_family(rep) -> LFamily:
    """``L_J(g)(x_J) = E[Delta_{J,Rep}(g)(x_J, X_{\\J}) | X_J = x_J]``.

    ``rep`` is a representative rule (see :func:`idecomp.space.representatives`)
    or a resolved :class:`~idecomp.space.RepVector`.
    """
    rep_for = _rep_resolver(rep)

    def apply(g, J, space):
        if not J.columns or not set(J.columns) <= g.scope:
            return Const(0.0, g.d)
        r = rep_for(space)
        delta = partial_difference(g, J, [r[c] for c in J.columns])
        return conditional(delta, J.columns, space, clamp=True)
    return LFamily("ce", apply, "conditional expectation of the anchored difference")


def rp_family(rep) -> LFamily:
    """``L_J(g) = g`` with ``x_{\\J}`` fixed to the representatives."""
    rep_for = _rep_resolver(rep)

    def apply(g, J, space):
        r = rep_for(space)
        out = [c for c in sorted(g.scope) if c not in J.columns]
        return substitute(g, out, [r[c] for c in out])
    return LFamily("rp", apply, "representative-point substitution")


def ale_family(mode: str = "symbolic", grid: int = DEFAULT_GRID) -> LFamily:
    """Accumulated local effects.

    ``symbolic`` integrates ``E[d g / d x_J (z_J, X_{\\J}) | X_J = z_J]`` from
    the support minima by the trapezoid rule on ``grid`` nodes per feature.
    ``binned`` accumulates finite differences over the space's bins (orders 1
    and 2 only) and needs no derivatives.
    """
    if mode not in ("symbolic", "binned"):
        raise MethodError(f"unknown ALE mode {mode!r}")

    def apply(g, J, space):
        if not set(J.columns) <= g.scope:
            return Const(0.0, g.d)
        if mode == "binned":
            if len(J) > 2:
                raise MethodError("binned ALE is limited to order 2; use symbolic mode "
                                  "for higher orders")
            return BinnedALE(g, J.columns, space)
        try:
            dg = g.deriv(J.columns)
        except NotDifferentiableError as err:
            raise MethodError(f"symbolic ALE needs a differentiable formula: {err}") from None
        h = conditional(dg, J.columns, space, clamp=True)
        return ALEIntegral(h, J.columns, space, grid)
    return LFamily("ale" if mode == "symbolic" else "ale-binned", apply,
                   f"accumulated local effects ({mode})")


def hybrid_ale_rp_family(rep, ale_mode: str = "symbolic", grid: int = HYBRID_GRID) -> LFamily:
    """ALE operators for main effects, RP substitution for interactions."""
    ale = ale_family(ale_mode, grid)
    rp = rp_family(rep)

    def apply(g, J, space):
        return (ale if len(J) == 1 else rp).apply(g, J, space)
    return LFamily("ale+rp", apply, "ALE main effects with RP interactions")


def _rep_resolver(rep) -> Callable[[FeatureSpace], np.ndarray]:
    cache: dict = {}

    def resolve(space: FeatureSpace) -> np.ndarray:
        key = id(space)
        if key not in cache:
            cache[key] = (space, np.asarray(representatives(space, rep), dtype=float))
        return cache[key][1]
    return resolve


# ---------------------------------------------------------------------------
# Direct methods
# ---------------------------------------------------------------------------

class _MemoEngine(Engine):
    def __init__(self, space, name):
        super().__init__(space, name)
        self._memo: dict = {}

    def _get(self, g, J):
        hit = self._memo.get((id(g), J.mask))
        return None if hit is None else hit[1]

    def _put(self, g, J, value):
        self._memo[(id(g), J.mask)] = (g, value)
        return value


class PDNaiveEngine(_MemoEngine):
    """``H*_J = (I - E) o (E_{X\\J} - sum_{J' < J} H*_{J'})``."""

    def _raw(self, g, J):
        return lincomb([(1.0, Marginal(g, J.columns, self.space))]
                       + [(-1.0, self.H(g, sub)) for sub in J.strict_subsets()], d=g.d)

    def term(self, g, J):
        hit = self._get(g, J)
        if hit is None:
            if not J:
                hit = (Const(self.space.expect(g), g.d), 0.0)
            else:
                hit = centered(self._raw(g, J), self.space)
            self._put(g, J, hit)
        return hit

    def H(self, g, J):
        return self.term(g, J)[0]


class FANOVAEngine(_MemoEngine):
    """``f_J = E[f | X_J = x_J] - sum_{J' < J} f_{J'}``, uncentered."""

    accepts_black_box = True

    def H(self, g, J):
        hit = self._get(g, J)
        if hit is None:
            if not J:
                hit = Const(self.space.expect(g), g.d)
            else:
                hit = lincomb([(1.0, Conditional(g, J.columns, self.space, clamp=False))]
                              + [(-1.0, self.H(g, sub)) for sub in J.strict_subsets()], d=g.d)
            self._put(g, J, hit)
        return hit


class PolyEngine(_MemoEngine):
    """Polynomial decomposition: ``f_J`` collects the monomials whose
    variables are exactly ``J`` (plain basis for ``poly1``, mean-centered for
    ``poly2``), minus its mean ``c_J``."""

    def __init__(self, space, centered_basis: bool, max_degree: int | None = None):
        super().__init__(space, "poly2" if centered_basis else "poly1")
        self.centers = ([float(np.sum(v * p)) for v, p in
                         (space.feature_weights(j) for j in range(space.d))]
                        if centered_basis else None)
        self.max_degree = max_degree

    def coeffs(self, g: Fn) -> ex.PolyCoeffs:
        hit = self._get(g, EMPTY)
        if hit is None:
            try:
                e = fn_to_expr(g)
            except MethodError as err:
                raise ex.NotPolynomialError(str(err)) from None
            hit = ex.expand_polynomial(e, g.d, self.centers)
            if self.max_degree is not None and hit.degree > self.max_degree:
                raise ex.NotPolynomialError(f"degree {hit.degree} exceeds {self.max_degree}")
            self._put(g, EMPTY, hit)
        return hit

    def term(self, g, J):
        if not J:
            return Const(self.space.expect(g), g.d), 0.0
        hit = self._get(g, J)
        if hit is None:
            mask = tuple(j in J.columns for j in range(g.d))
            keep = lambda powers: tuple(r > 0 for r in powers) == mask
            raw = ExprFn(self.coeffs(g).to_expr(keep), g.d)
            hit = self._put(g, J, centered(raw, self.space))
        return hit

    def H(self, g, J):
        return self.term(g, J)[0]


def fn_to_expr(g: Fn) -> ex.Expr:
    """Recover a formula from a function built of formulas, constants and
    linear combinations, products and substitutions of those."""
    if isinstance(g, ExprFn):
        return g.expr
    if isinstance(g, Const):
        return ex.Const(g.value)
    if isinstance(g, LinComb):
        node: ex.Expr = ex.Const(g.const)
        for c, f in g.terms:
            node = ex.Binary("add", node, ex.Binary("mul", ex.Const(c), fn_to_expr(f)))
        return node
    if isinstance(g, Product):
        return ex.Binary("mul", fn_to_expr(g.f), fn_to_expr(g.g))
    if isinstance(g, Substituted):
        values = {c + 1: float(v) for c, v in zip(g.cols, g.values)}
        return _substitute_expr(fn_to_expr(g.g), values)
    raise MethodError(f"{g!r} has no formula representation")


def _substitute_expr(e: ex.Expr, values: dict[int, float]) -> ex.Expr:
    if isinstance(e, ex.Var):
        return ex.Const(values[e.index]) if e.index in values else e
    if isinstance(e, ex.Const):
        return e
    if isinstance(e, ex.Unary):
        return ex.Unary(e.op, _substitute_expr(e.arg, values))
    if isinstance(e, ex.Pow):
        return ex.Pow(_substitute_expr(e.base, values), e.exponent)
    return ex.Binary(e.op, _substitute_expr(e.left, values), _substitute_expr(e.right, values))


# ---------------------------------------------------------------------------
# Method descriptors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Method:
    """A named decomposition method with its expected property profile.

    ``expected`` lists the properties the method is known to satisfy on
    every instance; ``negative`` those it is known to violate on at least
    one documented instance.
    """

    name: str
    make: Callable[[FeatureSpace], Engine] = field(repr=False)
    expected: tuple[str, ...]
    premises: tuple[str, ...] = ()
    tol: float = 1e-9
    family: LFamily | None = field(default=None, repr=False)
    accepts_black_box: bool = False
    options: dict = field(default_factory=dict)
    order_limit: int | None = None
    applicable: Callable[[Fn], bool] | None = field(default=None, repr=False)

    def accepts(self, g: Fn) -> bool:
        """Whether ``g`` is in the class of functions the method handles."""
        return self.applicable is None or self.applicable(g)

    @property
    def routed(self) -> bool:
        return self.family is not None

    def engine(self, space: FeatureSpace) -> Engine:
        return self.make(space)


def _family_method(family: LFamily, expected, premises, tol=1e-9, order_limit=None,
                   **options) -> Method:
    return Method(family.name, lambda s: DEngine(family, s), tuple(expected),
                  tuple(premises), tol, family, options=options, order_limit=order_limit)


def pd_proper() -> Method:
    return _family_method(pd_proper_family(), ID_PROPERTIES, ("P2*", "P3*", "P6*"))


def ce(rep="mean") -> Method:
    # the anchored terms with J' != empty drop x_{J'}, so (P6)* holds for any Rep
    return _family_method(ce_family(rep), ID_PROPERTIES, ("P2*", "P3*", "P6*"), rep=rep)


def rp(rep="mean") -> Method:
    return _family_method(rp_family(rep), P1_P5, ("P2*", "P3*"), rep=rep)


def ale(mode: str = "symbolic", grid: int = DEFAULT_GRID) -> Method:
    tol = 1e-3 if mode == "symbolic" else 1e-9
    return _family_method(ale_family(mode, grid), ID_PROPERTIES, ("P2*", "P3*", "P6*"), tol,
                          2 if mode == "binned" else None, mode=mode, grid=grid)


def ale_rp(rep="mean", mode: str = "symbolic", grid: int = HYBRID_GRID) -> Method:
    tol = 1e-3 if mode == "symbolic" else 1e-9
    return _family_method(hybrid_ale_rp_family(rep, mode, grid), P1_P5, ("P2*", "P3*"), tol,
                          rep=rep, mode=mode, grid=grid)


def pd_naive() -> Method:
    return Method("pd-naive", lambda s: PDNaiveEngine(s, "pd-naive"), ("P1", "P2", "P3"))


def fanova() -> Method:
    return Method("fanova", lambda s: FANOVAEngine(s, "fanova"), ("P1",),
                  accepts_black_box=True)


def poly(variant: str = "poly1", max_degree: int | None = None) -> Method:
    if variant not in ("poly1", "poly2"):
        raise MethodError(f"unknown polynomial variant {variant!r}")
    return Method(variant, lambda s: PolyEngine(s, variant == "poly2", max_degree), P1_P5,
                  applicable=_is_polynomial)


def _is_polynomial(g: Fn) -> bool:
    try:
        ex.expand_polynomial(fn_to_expr(g), g.d)
    except (MethodError, ex.NotPolynomialError):
        return False
    return True


METHOD_NAMES = ("pd-proper", "pd-naive", "ce", "rp", "ale", "ale+rp", "poly1", "poly2", "fanova")


def parse_method(descriptor: str, rep="mean", mode: str | None = None,
                 grid: int | None = None) -> Method:
    """Method from a descriptor such as ``ce``, ``rp:rep=median`` or
    ``ale:mode=binned``. Suboptions override the keyword defaults."""
    name, _, opts = descriptor.strip().partition(":")
    name = name.lower()
    for item in filter(None, (o.strip() for o in opts.split(","))):
        key, _, value = item.partition("=")
        key = key.strip().lower()
        if key == "rep":
            rep = value.strip()
        elif key == "mode":
            mode = value.strip()
        elif key == "grid":
            grid = int(value)
        else:
            raise MethodError(f"unknown method option {key!r}")
    mode = mode or "symbolic"
    if name == "pd-proper":
        return pd_proper()
    if name == "pd-naive":
        return pd_naive()
    if name == "ce":
        return ce(rep)
    if name == "rp":
        return rp(rep)
    if name == "ale":
        return ale(mode, grid or DEFAULT_GRID)
    if name == "ale+rp":
        return ale_rp(rep, mode, grid or HYBRID_GRID)
    if name in ("poly1", "poly2"):
        return poly(name)
    if name == "fanova":
        return fanova()
    raise MethodError(f"unknown method {descriptor!r}; choose from {', '.join(METHOD_NAMES)}")


# convenience wrappers mirroring the direct recursions

def pd_naive_decomposition(space, f, max_order=None):
    from .core import build
    return build(pd_naive(), space, f, max_order)


def functional_anova_decomposition(space, f, max_order=None):
    from .core import build
    return build(fanova(), space, f, max_order)


def poly_decomposition(variant, f, space, r=None, max_order=None):
    from .core import build
    return build(poly(variant.lower(), r), space, f, max_order)
