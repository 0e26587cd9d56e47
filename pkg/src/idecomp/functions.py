"""Lazy functions on the feature domain.

Every operator of the decomposition algebra maps functions to functions. A
:class:`Fn` is evaluated on rows of an ``(m, d)`` array and knows its
*scope*, the 0-based columns it can depend on, so that ``f in V_J`` is the
statement ``f.scope <= J``. Values are memoized per distinct scope
coordinates, which keeps nested compositions of operators affordable.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from . import expr as ex

_CACHE_LIMIT = 200_000
_CHUNK = 2_000_000


class NotDifferentiableError(ValueError):
    pass


class BlackBoxError(ValueError):
    pass


def _void_keys(U: np.ndarray) -> list:
    U = np.ascontiguousarray(U)
    if U.shape[1] == 0:
        return [b""] * U.shape[0]
    return U.view(np.dtype((np.void, U.dtype.itemsize * U.shape[1]))).ravel().tolist()


class Fn:
    """Base class. Subclasses implement ``_eval`` and optionally ``_deriv``."""

    differentiable = True
    tabulated = False

    def __init__(self, d: int, scope: Iterable[int]):
        self.d = d
        self.scope = frozenset(scope)
        self._cols = tuple(sorted(self.scope))
        self._cache: dict = {}

    # -- evaluation -------------------------------------------------------
    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X2 = X.reshape(1, -1) if single else X
        if X2.shape[1] != self.d:
            raise ValueError(f"expected {self.d} columns, got {X2.shape[1]}")
        out = self._cached(X2)
        return float(out[0]) if single else out

    def _cached(self, X: np.ndarray) -> np.ndarray:
        m = X.shape[0]
        if m == 0:
            return np.zeros(0)
        P = X[:, self._cols] + 0.0
        if not self._cols:
            if b"" not in self._cache:
                self._cache[b""] = float(self._checked(X[:1])[0])
            return np.full(m, self._cache[b""])
        U, first, inv = np.unique(P, axis=0, return_index=True, return_inverse=True)
        inv = inv.ravel()
        if U.shape[0] > _CACHE_LIMIT:
            return self._checked(X[first])[inv]
        keys = _void_keys(U)
        cache = self._cache
        missing = [i for i, k in enumerate(keys) if k not in cache]
        if missing:
            vals = self._checked(X[first[missing]])
            for i, v in zip(missing, vals.tolist()):
                cache[keys[i]] = v
        return np.array([cache[k] for k in keys])[inv]

    def _checked(self, X: np.ndarray) -> np.ndarray:
        vals = np.asarray(self._eval(X), dtype=float)
        vals = np.broadcast_to(vals, (X.shape[0],)).copy()
        if not np.all(np.isfinite(vals)):
            bad = int(np.flatnonzero(~np.isfinite(vals))[0])
            raise ex.DomainError(f"{self!r} is not finite at {X[bad].tolist()}")
        return vals

    def _eval(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # -- differentiation --------------------------------------------------
    def deriv(self, cols: Iterable[int]) -> Fn:
        """Mixed partial derivative over distinct 0-based ``cols``."""
        cols = frozenset(cols)
        if not cols:
            return self
        if not cols <= self.scope:
            return Const(0.0, self.d)
        return self._deriv(cols)

    def _deriv(self, cols: frozenset[int]) -> Fn:
        raise NotDifferentiableError(f"{type(self).__name__} has no derivative")

    # -- linear structure -------------------------------------------------
    def __add__(self, other) -> Fn:
        return lincomb([(1.0, self), (1.0, _lift(other, self.d))])

    def __radd__(self, other) -> Fn:
        return self + other

    def __sub__(self, other) -> Fn:
        return lincomb([(1.0, self), (-1.0, _lift(other, self.d))])

    def __rsub__(self, other) -> Fn:
        return lincomb([(1.0, _lift(other, self.d)), (-1.0, self)])

    def __mul__(self, c) -> Fn:
        if isinstance(c, Fn):
            return Product(self, c)
        return lincomb([(float(c), self)])

    def __rmul__(self, c) -> Fn:
        return self * c

    def __neg__(self) -> Fn:
        return lincomb([(-1.0, self)])

    def __repr__(self) -> str:
        scope = ",".join(f"x{j + 1}" for j in self._cols)
        return f"{type(self).__name__}({scope})"


def _lift(value, d: int) -> Fn:
    if isinstance(value, Fn):
        return value
    return Const(float(value), d)


def as_fn(g, d: int) -> Fn:
    """Coerce a formula string, :class:`~idecomp.expr.Expr`, number or
    vectorized callable to a :class:`Fn`."""
    if isinstance(g, Fn):
        if g.d != d:
            raise ValueError(f"function has dimension {g.d}, space has {d}")
        return g
    if isinstance(g, str):
        return ExprFn(ex.parse(g, d), d)
    if isinstance(g, ex.Expr):
        return ExprFn(g, d)
    if isinstance(g, (int, float)):
        return Const(float(g), d)
    if callable(g):
        return CallableFn(g, d)
    raise TypeError(f"cannot interpret {g!r} as a function")


# ---------------------------------------------------------------------------
# Leaves
# ---------------------------------------------------------------------------

class Const(Fn):
    def __init__(self, value: float, d: int):
        super().__init__(d, ())
        self.value = float(value)

    def _eval(self, X):
        return np.full(X.shape[0], self.value)

    def _deriv(self, cols):
        return Const(0.0, self.d)

    def __repr__(self):
        return f"Const({self.value:g})"


class ExprFn(Fn):
    def __init__(self, e: ex.Expr, d: int):
        bad = [j for j in e.variables() if j > d]
        if bad:
            raise ex.ExprError(f"x{bad[0]} out of range for d={d}")
        super().__init__(d, (j - 1 for j in e.variables()))
        self.expr = e

    def _eval(self, X):
        return ex.evaluate(self.expr, X)

    def _deriv(self, cols):
        return ExprFn(ex.diff_many(self.expr, [c + 1 for c in sorted(cols)]), self.d)

    def __repr__(self):
        return f"ExprFn({ex.to_text(self.expr)})"


class CallableFn(Fn):
    """Wrap a vectorized black-box callable ``g(X) -> (m,)``."""

    differentiable = False

    def __init__(self, g: Callable, d: int, scope: Iterable[int] | None = None):
        super().__init__(d, range(d) if scope is None else scope)
        self.g = g

    def _eval(self, X):
        return self.g(X)


class Tabulated(Fn):
    """A prediction function known only at its sample rows."""

    differentiable = False
    tabulated = True

    def __init__(self, X: np.ndarray, y: np.ndarray):
        X = np.asarray(X, dtype=float) + 0.0
        super().__init__(X.shape[1], range(X.shape[1]))
        rows, inv = np.unique(X, axis=0, return_inverse=True)
        sums = np.zeros(rows.shape[0])
        counts = np.zeros(rows.shape[0])
        np.add.at(sums, inv.ravel(), y)
        np.add.at(counts, inv.ravel(), 1.0)
        # duplicated rows keep their mean response
        self._table = dict(zip(_void_keys(rows), (sums / counts).tolist()))

    def _eval(self, X):
        keys = _void_keys(X + 0.0)
        try:
            return np.array([self._table[k] for k in keys])
        except KeyError:
            missing = next(i for i, k in enumerate(keys) if k not in self._table)
            raise BlackBoxError(
                f"black-box function is known only at sample rows; "
                f"requested {X[missing].tolist()}") from None


# ---------------------------------------------------------------------------
# Combinators
# ---------------------------------------------------------------------------

class LinComb(Fn):
    def __init__(self, terms: Sequence[tuple[float, Fn]], const: float, d: int):
        scope = frozenset().union(*(f.scope for _, f in terms)) if terms else frozenset()
        super().__init__(d, scope)
        self.terms = tuple(terms)
        self.const = const
        self.differentiable = all(f.differentiable for _, f in terms)

    def _eval(self, X):
        out = np.full(X.shape[0], self.const)
        for c, f in self.terms:
            out = out + c * f(X)
        return out

    def _deriv(self, cols):
        return lincomb([(c, f.deriv(cols)) for c, f in self.terms], d=self.d)


def lincomb(terms: Iterable[tuple[float, Fn]], const: float = 0.0, d: int | None = None) -> Fn:
    """Linear combination with constants folded and nested sums flattened."""
    flat: list[tuple[float, Fn]] = []
    for c, f in terms:
        if d is None:
            d = f.d
        if c == 0.0:
            continue
        if isinstance(f, Const):
            const += c * f.value
        elif isinstance(f, LinComb):
            const += c * f.const
            flat.extend((c * c2, f2) for c2, f2 in f.terms)
        else:
            flat.append((c, f))
    if d is None:
        raise ValueError("empty combination needs d")
    if not flat:
        return Const(const, d)
    if len(flat) == 1 and const == 0.0 and flat[0][0] == 1.0:
        return flat[0][1]
    return LinComb(flat, const, d)


class Product(Fn):
    def __init__(self, f: Fn, g: Fn):
        super().__init__(f.d, f.scope | g.scope)
        self.f, self.g = f, g
        self.differentiable = f.differentiable and g.differentiable

    def _eval(self, X):
        return self.f(X) * self.g(X)

    def _deriv(self, cols):
        # Leibniz rule over the subsets of cols
        from itertools import combinations
        cols = sorted(cols)
        terms = []
        for k in range(len(cols) + 1):
            for a in combinations(cols, k):
                b = set(cols) - set(a)
                terms.append((1.0, Product(self.f.deriv(a), self.g.deriv(b))))
        return lincomb(terms, d=self.d)


class Substituted(Fn):
    """``g`` with columns ``cols`` fixed to ``values``."""

    def __init__(self, g: Fn, cols: Sequence[int], values: Sequence[float]):
        cols = tuple(cols)
        super().__init__(g.d, g.scope - set(cols))
        self.g = g
        self.cols = cols
        self.values = np.asarray(values, dtype=float).reshape(len(cols))
        self.differentiable = g.differentiable

    def _eval(self, X):
        Y = X.copy()
        Y[:, list(self.cols)] = self.values
        return self.g(Y)

    def _deriv(self, cols):
        return Substituted(self.g.deriv(cols), self.cols, self.values)


def substitute(g: Fn, cols: Sequence[int], values: Sequence[float]) -> Fn:
    cols = tuple(cols)
    if not cols:
        return g
    return Substituted(g, cols, values)


def _pair_eval(g: Fn, Q: np.ndarray, cols: Sequence[int], R: np.ndarray) -> np.ndarray:
    """``g`` on every (query, row) pair with ``cols`` of the query replaced by
    the row entries, as an ``(m, r)`` array."""
    m, r = Q.shape[0], R.shape[0]
    cols = list(cols)
    out = np.empty((m, r))
    step = max(1, _CHUNK // max(r, 1))
    for s in range(0, m, step):
        q = Q[s:s + step]
        P = np.repeat(q, r, axis=0)
        if cols:
            P[:, cols] = np.tile(R, (q.shape[0], 1))
        out[s:s + step] = g(P).reshape(q.shape[0], r)
    return out


class Marginal(Fn):
    """``E_{X\\J}(g)``: average over the unconditional law of the columns
    outside ``keep``."""

    def __init__(self, g: Fn, keep: Sequence[int], space):
        keep = tuple(sorted(keep))
        super().__init__(g.d, g.scope & set(keep))
        self.g = g
        self.keep = keep
        self.space = space
        self.out_cols = tuple(c for c in range(g.d) if c not in keep and c in g.scope)
        self.differentiable = g.differentiable

    def _eval(self, X):
        R, w = self.space.marginal_law(self.out_cols)
        vals = _pair_eval(self.g, X, self.out_cols, R)
        return (vals * w).sum(axis=1)

    def _deriv(self, cols):
        return Marginal(self.g.deriv(cols), self.keep, self.space)


class Conditional(Fn):
    """``x_J -> E[g(...) | X_J = x_J]``.

    With ``clamp`` the integrand is ``g(x_J, X_{\\J})``; without, it is
    ``g(X_D)`` at the conditioning rows themselves.
    """

    differentiable = False

    def __init__(self, g: Fn, cols: Sequence[int], space, clamp: bool = True):
        cols = tuple(sorted(cols))
        super().__init__(g.d, cols)
        self.g = g
        self.cols = cols
        self.space = space
        self.clamp = clamp

    def _eval(self, X):
        out = np.empty(X.shape[0])
        pts = self.space.points
        for qidx, rows, w in self.space.conditional_law(self.cols, X[:, list(self.cols)]):
            if self.clamp:
                others = [c for c in range(self.d) if c not in self.cols]
                Qg = X[qidx]
                vals = _pair_eval(self.g, Qg, others, pts[rows][:, others])
            else:
                vals = np.broadcast_to(self.g(pts[rows]), (qidx.size, rows.size))
            out[qidx] = (vals * w).sum(axis=1)
        return out


def conditional(g: Fn, cols: Sequence[int], space, clamp: bool = True) -> Fn:
    """:class:`Conditional`, or ``g`` itself when clamping leaves nothing to
    average."""
    if clamp and g.scope <= set(cols):
        return g
    return Conditional(g, cols, space, clamp)


# ---------------------------------------------------------------------------
# Accumulated local effects
# ---------------------------------------------------------------------------

def _trap_weights(nodes: np.ndarray) -> np.ndarray:
    w = np.zeros(nodes.size)
    if nodes.size > 1:
        h = np.diff(nodes)
        w[:-1] += h / 2
        w[1:] += h / 2
    return w


class ALEIntegral(Fn):
    """``x -> integral of h over z_K from the feature minima to x_K``, with K
    the columns ``over`` and the other coordinates of ``x`` passed to ``h``.

    The trapezoid rule runs on a fixed uniform grid of ``grid`` nodes per
    feature plus the query value itself, so each value depends only on its
    own query point. With more than ``exact_limit`` distinct queries (large
    samples) the integrand at off-grid boundary points is interpolated
    multilinearly from the node values instead of evaluated.
    """

    exact_limit = 512

    def __init__(self, h: Fn, over: Sequence[int], space, grid: int = 64):
        over = tuple(sorted(over))
        super().__init__(h.d, h.scope | set(over))
        self.h = h
        self.over = over
        self.space = space
        self.grid = grid
        self.nodes = [np.linspace(space.lo[c], space.hi[c], grid) for c in over]
        self.passthrough = tuple(c for c in self._cols if c not in over)
        self.differentiable = h.differentiable

    def _deriv(self, cols):
        inner = cols & set(self.over)
        rest = frozenset(cols - inner)
        base = self.h.deriv(rest)
        remaining = [c for c in self.over if c not in inner]
        if not remaining:
            return base
        return ALEIntegral(base, remaining, self.space, self.grid)

    def _eval(self, X):
        over = list(self.over)
        self.space.check_in_range(X[:, over], over)
        k = len(over)
        keys = X[:, list(self.passthrough)]
        if keys.shape[1]:
            _, groups = np.unique(keys, axis=0, return_inverse=True)
            groups = groups.ravel()
        else:
            groups = np.zeros(X.shape[0], dtype=int)
        ng = int(groups.max()) + 1
        first = np.zeros(ng, dtype=int)
        first[groups[::-1]] = np.arange(X.shape[0])[::-1]

        # h on the full node grid once per passthrough group
        mesh = [m.ravel() for m in np.meshgrid(*self.nodes, indexing="ij")]
        size = mesh[0].size
        G = np.repeat(X[first], size, axis=0)
        for a, c in enumerate(over):
            G[:, c] = np.tile(mesh[a], ng)
        grid_vals = self.h(G).reshape([ng] + [self.grid] * k)
        counts = np.column_stack([np.searchsorted(nd, X[:, c], side="left")
                                  for nd, c in zip(self.nodes, over)])
        interp = X.shape[0] > self.exact_limit
        if k == 1:
            return self._eval_1d(X, groups, grid_vals, counts[:, 0], interp)
        return self._eval_nd(X, groups, grid_vals, counts, interp)

    def _interpolate(self, grid_vals, groups, P):
        """Multilinear interpolation of node values at the ``over``
        coordinates of the rows of ``P``."""
        k = len(self.over)
        lo_idx, frac = [], []
        for a, c in enumerate(self.over):
            nodes = self.nodes[a]
            i = np.clip(np.searchsorted(nodes, P[:, c], side="right") - 1, 0, self.grid - 2)
            lo_idx.append(i)
            frac.append(np.clip((P[:, c] - nodes[i]) / (nodes[i + 1] - nodes[i]), 0.0, 1.0))
        out = np.zeros(P.shape[0])
        for _, corner in _corners(k):
            w = np.ones(P.shape[0])
            idx = [groups]
            for a, bit in enumerate(corner):
                w = w * (frac[a] if bit else 1.0 - frac[a])
                idx.append(lo_idx[a] + bit)
            out += w * grid_vals[tuple(idx)]
        return out

    def _eval_1d(self, X, groups, grid_vals, counts, interp=False):
        c = self.over[0]
        nodes = self.nodes[0]
        steps = np.diff(nodes)
        cum = np.zeros_like(grid_vals)
        cum[:, 1:] = np.cumsum(steps * (grid_vals[:, 1:] + grid_vals[:, :-1]) / 2, axis=1)
        fx = self._interpolate(grid_vals, groups, X) if interp else self.h(X)
        last = np.maximum(counts - 1, 0)
        tail = (X[:, c] - nodes[last]) * (grid_vals[groups, last] + fx) / 2
        return np.where(counts > 0, cum[groups, last] + tail, 0.0)

    def _eval_nd(self, X, groups, grid_vals, counts, interp=False):
        k = len(self.over)
        plans, boundary, owner = [], [], []
        for x, cnt in zip(X, counts):
            shape = [int(n) + 1 for n in cnt]
            idx = np.indices(shape).reshape(k, -1).T
            on_edge = np.any(idx == cnt, axis=1)
            pts = np.repeat(x[None, :], int(on_edge.sum()), axis=0)
            for a, c in enumerate(self.over):
                col = idx[on_edge, a]
                pts[:, c] = np.where(col == cnt[a], x[c],
                                     self.nodes[a][np.minimum(col, self.grid - 1)])
            plans.append((shape, idx, on_edge))
            boundary.append(pts)
            owner.append(np.full(pts.shape[0], len(owner)))
        sizes = [b.shape[0] for b in boundary]
        B = np.concatenate(boundary)
        if interp:
            bvals = self._interpolate(grid_vals, groups[np.concatenate(owner)], B)
        else:
            bvals = self.h(B)
        out = np.empty(X.shape[0])
        offset = 0
        for i, (x, cnt, (shape, idx, on_edge)) in enumerate(zip(X, counts, plans)):
            F = np.empty(idx.shape[0])
            inner = idx[~on_edge]
            if inner.size:
                F[~on_edge] = grid_vals[(groups[i],) + tuple(inner.T)]
            F[on_edge] = bvals[offset:offset + sizes[i]]
            offset += sizes[i]
            F = F.reshape(shape)
            for a, c in enumerate(self.over):
                nodes = np.append(self.nodes[a][:cnt[a]], x[c])
                F = np.tensordot(_trap_weights(nodes), F, axes=(0, 0))
            out[i] = float(F)
        return out


class BinnedALE(Fn):
    """Finite-difference ALE accumulation over bins (first or second order).

    Bin edges are the distinct feature values (or the quantile bin edges of
    a sample); the local effect of a bin averages the differences of ``g``
    across it over the rows in the bin. Values between edges interpolate
    (bi)linearly.
    """

    differentiable = False

    def __init__(self, g: Fn, cols: Sequence[int], space):
        cols = tuple(sorted(cols))
        if not 1 <= len(cols) <= 2:
            raise ValueError("binned ALE supports first and second order only; "
                             "use symbolic mode for higher orders")
        super().__init__(g.d, cols)
        self.g = g
        self.cols = cols
        self.space = space
        self.edges = [space.ale_edges(c) for c in cols]
        self._table = None

    def _bin_rows(self):
        pts = self.space.points
        codes = []
        for c, e in zip(self.cols, self.edges):
            # interval k = (e[k-1], e[k]], the first one closed on the left
            codes.append(np.clip(np.searchsorted(e, pts[:, c], side="left"), 1, e.size - 1))
        return np.column_stack(codes)

    def _accumulated(self) -> np.ndarray:
        if self._table is not None:
            return self._table
        pts, w = self.space.points, self.space.weights
        codes = self._bin_rows()
        sizes = [e.size - 1 for e in self.edges]
        cells = list(np.ndindex(*sizes))
        occupied = {}
        for key in cells:
            mask = np.all(codes == np.array(key) + 1, axis=1)
            if np.any(mask):
                occupied[key] = np.flatnonzero(mask)
        if not occupied:
            raise ValueError("no rows fall in any ALE bin")
        occ_keys = np.array(list(occupied))
        local = np.zeros(sizes)
        signs_corners = [(s, corner) for s, corner in _corners(len(self.cols))]
        for key in cells:
            if key in occupied:
                rows = occupied[key]
            else:
                dist = np.abs(occ_keys - np.array(key)).sum(axis=1)
                ties = occ_keys[dist == dist.min()]
                rows = np.concatenate([occupied[tuple(t)] for t in ties])
            R = pts[rows]
            acc = np.zeros(rows.size)
            for sign, corner in signs_corners:
                P = R.copy()
                for a, c in enumerate(self.cols):
                    P[:, c] = self.edges[a][key[a] + corner[a]]
                acc += sign * self.g(P)
            ww = w[rows]
            local[key] = np.sum(acc * ww) / ww.sum()
        table = local
        for a in range(len(self.cols)):
            table = np.cumsum(table, axis=a)
        table = np.pad(table, [(1, 0)] * len(self.cols))
        self._table = table
        return table

    def _eval(self, X):
        self.space.check_in_range(X[:, list(self.cols)], self.cols)
        table = self._accumulated()
        pos = []
        for a, c in enumerate(self.cols):
            e = self.edges[a]
            k = np.clip(np.searchsorted(e, X[:, c], side="right") - 1, 0, e.size - 2)
            t = (X[:, c] - e[k]) / (e[k + 1] - e[k])
            pos.append((k, np.clip(t, 0.0, 1.0)))
        if len(self.cols) == 1:
            (k, t), = pos
            return (1 - t) * table[k] + t * table[k + 1]
        (k1, t1), (k2, t2) = pos
        return ((1 - t1) * (1 - t2) * table[k1, k2] + t1 * (1 - t2) * table[k1 + 1, k2]
                + (1 - t1) * t2 * table[k1, k2 + 1] + t1 * t2 * table[k1 + 1, k2 + 1])


def _corners(k: int):
    """Signed cell corners of the k-fold difference: offset 1 is the upper edge."""
    from itertools import product
    for corner in product((1, 0), repeat=k):
        yield (-1.0) ** (k - sum(corner)), corner
