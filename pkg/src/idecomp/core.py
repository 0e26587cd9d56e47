"""Operator algebra and the recursive construction of decompositions.

Given linear operators ``L_J`` mapping functions into ``V_J``, the
construction

    H_empty = E,    H_J = (I - sum_{J' strict subset J} H_{J'}) o L_J

yields one operator per subset. The inner ``H_{J'}`` act on the *new*
function ``L_J(g)`` and are obtained by running the same recursion on it, so
everything is memoized on ``(function identity, J)``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .functions import Const, Fn, as_fn, lincomb, substitute as _substitute
from .space import FeatureSpace
from .subsets import EMPTY, SubsetJ, lattice

DEFAULT_MAX_ORDER = 3


# ---------------------------------------------------------------------------
# Elementary operations
# ---------------------------------------------------------------------------

def _as_subset(J) -> SubsetJ:
    if isinstance(J, SubsetJ):
        return J
    return SubsetJ.from_indices(J)


def substitute(g: Fn, J, a_J: Sequence[float]) -> Fn:
    """``g`` with ``x_J`` fixed to ``a_J`` (values in increasing index order)."""
    J = _as_subset(J)
    return _substitute(g, J.columns, a_J)


def partial_difference(g: Fn, J, a_J: Sequence[float]) -> Fn:
    """Alternating sum ``sum_{J' <= J} (-1)^{|J'|} g|_{x_{J'} = a_{J'}}``."""
    J = _as_subset(J)
    a = dict(zip(J.columns, np.asarray(a_J, dtype=float).reshape(len(J)).tolist()))
    terms = []
    for sub in J.subsets():
        cols = sub.columns
        terms.append(((-1.0) ** len(sub), _substitute(g, cols, [a[c] for c in cols])))
    return lincomb(terms, d=g.d)


@dataclass(frozen=True)
class ZeroCheck:
    """Outcome of a ``d g / d x_J = 0`` test."""

    holds: bool
    deviation: float
    tolerance: float
    witness: dict | None = None
    advisory: bool = False


def anchor_grid(space: FeatureSpace, J: SubsetJ, probes: int = 64, seed: int = 0) -> np.ndarray:
    """Anchor values ``a_J``: the product of per-feature values on the exact
    backend, else ``probes`` rows drawn from the sample."""
    cols = J.columns
    if space.is_exact:
        return np.array(list(product(*(space.values[c] for c in cols))), dtype=float)
    rng = np.random.default_rng(seed)
    rows, _ = space.marginal_law(cols)
    take = rng.choice(rows.shape[0], size=min(probes, rows.shape[0]), replace=False)
    return rows[np.sort(take)]


def is_partial_zero(g: Fn, J, space: FeatureSpace, tol: float = 1e-9,
                    probes: int = 64, seed: int = 0, points=None) -> ZeroCheck:
    """Whether ``partial_difference(g, J, a_J)`` vanishes for every anchor.

    Evaluation points are ``points`` or the space's probe points; the tolerance is
    relative to ``1 + max|g|`` there. On a sample the anchors are sampled
    and the verdict is advisory.
    """
    J = _as_subset(J)
    g = as_fn(g, space.d)
    X = space.probe_points() if points is None else np.asarray(points, dtype=float)
    scale = 1.0 + float(np.max(np.abs(g(X))))
    if not J:
        return ZeroCheck(True, 0.0, tol * scale)
    A = anchor_grid(space, J, probes, seed)
    cols = J.columns
    m = X.shape[0]
    big = np.repeat(X[None, :, :], A.shape[0], axis=0)  # (k, m, d)
    acc = np.zeros((A.shape[0], m))
    for sub in J.subsets():
        Y = big.copy()
        for c in sub.columns:
            Y[:, :, c] = A[:, cols.index(c)][:, None]
        acc += (-1.0) ** len(sub) * g(Y.reshape(-1, space.d)).reshape(A.shape[0], m)
    dev = np.abs(acc)
    k, i = np.unravel_index(int(np.argmax(dev)), dev.shape)
    worst = float(dev[k, i])
    witness = {"a_J": A[k].tolist(), "x": X[i].tolist(), "value": float(acc[k, i])}
    return ZeroCheck(worst <= tol * scale, worst, tol * scale, witness,
                     advisory=not space.is_exact)


def centered(h: Fn, space: FeatureSpace) -> tuple[Fn, float]:
    """``(I - E) h`` and the constant removed."""
    c = space.expect(h)
    return lincomb([(1.0, h)], const=-c, d=h.d), c


# ---------------------------------------------------------------------------
# Operator families and engines
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LFamily:
    """A family of linear operators ``L_J``.

    ``apply(g, J, space)`` returns ``L_J(g)`` as a :class:`Fn` in ``V_J``.
    """

    name: str
    apply: Callable[[Fn, SubsetJ, FeatureSpace], Fn]
    description: str = ""


class _Memo:
    """Dictionary keyed by ``(id(fn), J)`` that keeps its keys alive."""

    def __init__(self):
        self._data: dict = {}

    def get(self, g: Fn, J: SubsetJ):
        hit = self._data.get((id(g), J.mask))
        return None if hit is None else hit[1]

    def put(self, g: Fn, J: SubsetJ, value):
        self._data[(id(g), J.mask)] = (g, value)
        return value

    def __len__(self):
        return len(self._data)


class Engine:
    """Evaluates the decomposition operators ``H_J`` of one method on one
    space. Subclasses implement :meth:`H` and :meth:`term`."""

    routed = False

    def __init__(self, space: FeatureSpace, name: str):
        self.space = space
        self.name = name

    def as_fn(self, g) -> Fn:
        return as_fn(g, self.space.d)

    def H(self, g: Fn, J: SubsetJ) -> Fn:
        raise NotImplementedError

    def term(self, g: Fn, J: SubsetJ) -> tuple[Fn, float]:
        """``(H_J(g), c_J)`` with ``c_J`` the centering constant removed."""
        return self.H(g, J), 0.0


class DEngine(Engine):
    """Operators obtained from an :class:`LFamily` by the recursion."""

    routed = True

    def __init__(self, family: LFamily, space: FeatureSpace):
        super().__init__(space, family.name)
        self.family = family
        self._L, self._H, self._K = _Memo(), _Memo(), _Memo()

    def L(self, g: Fn, J: SubsetJ) -> Fn:
        hit = self._L.get(g, J)
        if hit is None:
            hit = self._L.put(g, J, self.family.apply(g, J, self.space))
        return hit

    def H(self, g: Fn, J: SubsetJ) -> Fn:
        hit = self._H.get(g, J)
        if hit is not None:
            return hit
        if not J:
            value = Const(self.space.expect(g), g.d)
        else:
            Lg = self.L(g, J)
            value = lincomb([(1.0, Lg)] + [(-1.0, self.H(Lg, sub)) for sub in J.strict_subsets()],
                            d=g.d)
        return self._H.put(g, J, value)

    def K(self, g: Fn, J: SubsetJ) -> Fn:
        """Auxiliary operators ``K_J = (I - sum_{empty != J' < J} K_{J'}) o L_J``."""
        if not J:
            raise ValueError("K is defined for nonempty J only")
        hit = self._K.get(g, J)
        if hit is not None:
            return hit
        Lg = self.L(g, J)
        value = lincomb([(1.0, Lg)] + [(-1.0, self.K(Lg, sub))
                                       for sub in J.strict_subsets() if sub],
                        d=g.d)
        return self._K.put(g, J, value)

    def term(self, g, J):
        # H_J = (I - E) o K_J, so the centering constant is E[K_J g]
        h = self.H(g, J)
        return h, self.space.expect(self.K(g, J)) if J else 0.0


def engine_for(method, space: FeatureSpace) -> Engine:
    """An engine from an :class:`LFamily` or any object with ``engine(space)``."""
    if isinstance(method, Engine):
        return method
    if isinstance(method, LFamily):
        return DEngine(method, space)
    if hasattr(method, "engine"):
        return method.engine(space)
    raise TypeError(f"cannot build an engine from {method!r}")


# ---------------------------------------------------------------------------
# Decompositions
# ---------------------------------------------------------------------------

@dataclass
class TermTable:
    """A term ``f_J`` tabulated on the backend points."""

    J: SubsetJ
    values: np.ndarray
    method: str
    centering: float = 0.0
    fn: Fn | None = field(default=None, repr=False)

    def distinct(self, space: FeatureSpace) -> tuple[np.ndarray, np.ndarray]:
        """Distinct ``x_J`` coordinates and the term value at each."""
        cols = list(self.J.columns)
        keys, first = np.unique(space.points[:, cols], axis=0, return_index=True)
        return keys, self.values[first]

    def measurability(self, space: FeatureSpace) -> float:
        """Largest value spread among points sharing their ``x_J`` coordinates."""
        cols = list(self.J.columns)
        if not cols:
            return float(np.ptp(self.values))
        _, inv = np.unique(space.points[:, cols], axis=0, return_inverse=True)
        inv = inv.ravel()
        hi = np.full(inv.max() + 1, -np.inf)
        lo = np.full(inv.max() + 1, np.inf)
        np.maximum.at(hi, inv, self.values)
        np.minimum.at(lo, inv, self.values)
        return float(np.max(hi - lo))


@dataclass
class Decomposition:
    method: str
    space: FeatureSpace
    max_order: int
    f0: float
    terms: dict[SubsetJ, TermTable]
    f: Fn | None = field(default=None, repr=False)
    seed: int | None = None

    def __getitem__(self, J) -> TermTable:
        return self.terms[_as_subset(J)]

    def value(self, J, X=None) -> np.ndarray:
        """Term values at the backend points, or at ``X`` via the term function."""
        J = _as_subset(J)
        if not J:
            n = self.space.n if X is None else np.atleast_2d(X).shape[0]
            return np.full(n, self.f0)
        t = self.terms[J]
        if X is None:
            return t.values
        return t.fn(np.atleast_2d(np.asarray(X, dtype=float)))

    def reconstruct(self, X=None) -> np.ndarray:
        """``sum_J f_J`` at the backend points or at the rows of ``X``."""
        total = self.value(EMPTY, X).copy()
        for J in self.terms:
            total = total + self.value(J, X)
        return total

    # -- export -----------------------------------------------------------
    def to_json_dict(self) -> dict:
        terms = {}
        for J, t in self.terms.items():
            keys, vals = t.distinct(self.space)
            terms[J.key()] = {"centering": _num(t.centering),
                              "points": [[_num(v) for v in row] for row in keys.tolist()],
                              "values": [_num(v) for v in vals.tolist()]}
        return {"method": self.method,
                "backend": self.space.kind,
                "n": int(self.space.effective_n),
                "d": int(self.space.d),
                "seed": self.seed,
                "max_order": self.max_order,
                "f0": _num(self.f0),
                "terms": terms}

    def export(self, out_dir: str | Path) -> list[Path]:
        """Write ``summary.json`` and one ``term_<indices>.csv`` per term."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for J, t in self.terms.items():
            keys, vals = t.distinct(self.space)
            path = out / ("term_" + "_".join(map(str, J.indices)) + ".csv")
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow([f"x{j}" for j in J.indices] + ["value"])
                for row, v in zip(keys.tolist(), vals.tolist()):
                    w.writerow([_fmt(x) for x in row] + [_fmt(v)])
            written.append(path)
        path = out / "summary.json"
        path.write_text(json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n")
        written.append(path)
        return written


def _num(v: float) -> float:
    v = float(v)
    if abs(v) < 1e-13:
        return 0.0
    return float(f"{v:.15g}")


def _fmt(v: float) -> str:
    return repr(_num(v))


def build(method, space: FeatureSpace, f, max_order: int | None = None,
          seed: int | None = None) -> Decomposition:
    """Decompose ``f`` into all terms with ``|J| <= max_order``.

    ``method`` is an :class:`LFamily` (routed through the recursion), an
    engine, or a method object providing ``engine(space)``.
    """
    d = space.d
    if max_order is None:
        max_order = min(d, DEFAULT_MAX_ORDER)
    if not 0 <= max_order <= d:
        raise ValueError(f"max_order must be in 0..{d}, got {max_order}")
    limit = getattr(method, "order_limit", None)
    if limit is not None and max_order > limit:
        raise ValueError(f"{method.name} is limited to interaction order {limit}")
    eng = engine_for(method, space)
    g = eng.as_fn(f)
    if getattr(g, "tabulated", False) and not (getattr(method, "accepts_black_box", False)
                                                  or getattr(eng, "accepts_black_box", False)):
        raise ValueError(f"{eng.name} must evaluate f off the sample rows; a black-box "
                         "function known only at the data is accepted by fanova only")
    terms = {}
    for J in lattice(d, max_order):
        if not J:
            continue
        fn, c = eng.term(g, J)
        terms[J] = TermTable(J, fn(space.points), eng.name, c, fn)
    f0 = float(eng.H(g, EMPTY)(space.points[:1])[0])
    return Decomposition(eng.name, space, max_order, f0, terms, g, seed)


def build_K(family, space: FeatureSpace, f, max_order: int | None = None) -> dict[SubsetJ, TermTable]:
    """Tabulate the auxiliary operators ``K_J(f)`` for ``0 < |J| <= max_order``."""
    eng = engine_for(family, space)
    if not isinstance(eng, DEngine):
        raise TypeError(f"{eng.name} is not built from an operator family")
    d = space.d
    max_order = min(d, DEFAULT_MAX_ORDER) if max_order is None else max_order
    g = eng.as_fn(f)
    out = {}
    for J in lattice(d, max_order):
        if J:
            k = eng.K(g, J)
            out[J] = TermTable(J, k(space.points), eng.name, 0.0, k)
    return out


def reconstruct(dec: Decomposition, x) -> float | np.ndarray:
    """``sum_J f_J(x_J)`` for one point or the rows of an array."""
    x = np.asarray(x, dtype=float)
    out = dec.reconstruct(np.atleast_2d(x))
    return float(out[0]) if x.ndim == 1 else out
