"""Joint feature distributions and the expectation operators on them.

Two backends share one representation, a weighted point set:

* ``exact`` -- a finite discrete law; points are the support, weights the
  probabilities. Every expectation is an exact finite sum.
* ``sample`` -- a Monte Carlo sample; points are the distinct sample rows and
  weights their relative frequencies, so sums are ordinary sample means.

Conditional laws ``X_{\\J} | X_J = x_J`` condition on the exact value (exact
backend, or sample features with at most ``bins`` distinct values) or on the
per-feature equal-mass quantile bin of the query. Queries inside the feature
ranges whose conditioning cell carries no mass borrow the law of the nearest
occupied cell(s); queries outside the ranges raise :class:`NoMassError`.
"""
from __future__ import annotations

import configparser
import csv
import itertools
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_SUPPORT_CAP = 10**6
DEFAULT_BINS = 20
_TIE_TOL = 1e-12


class SpaceError(ValueError):
    pass


class NoMassError(SpaceError):
    pass


class EvaluationError(SpaceError):
    pass


# ---------------------------------------------------------------------------
# Latent laws and mixing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LatentMarginal:
    """A one-dimensional latent law.

    ``kind`` is ``"discrete"`` (``values``/``probs``), ``"uniform"`` on
    ``[low, high]`` or ``"normal"`` with ``mean``/``sd`` truncated to
    ``mean +- bound * sd``.
    """

    kind: str
    values: tuple[float, ...] = ()
    probs: tuple[float, ...] = ()
    low: float = 0.0
    high: float = 1.0
    mean: float = 0.0
    sd: float = 1.0
    bound: float = 3.0

    @classmethod
    def rademacher(cls) -> LatentMarginal:
        return cls("discrete", (-1.0, 1.0), (0.5, 0.5))

    @classmethod
    def discrete(cls, values: Sequence[float], probs: Sequence[float]) -> LatentMarginal:
        if len(values) != len(probs) or not values:
            raise SpaceError("discrete latent needs matching non-empty values/probs")
        if any(p <= 0 for p in probs) or abs(sum(probs) - 1) > 1e-12:
            raise SpaceError("discrete latent probabilities must be positive and sum to 1")
        return cls("discrete", tuple(map(float, values)), tuple(map(float, probs)))

    @property
    def is_discrete(self) -> bool:
        return self.kind == "discrete"

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "discrete":
            return rng.choice(np.asarray(self.values), size=n, p=np.asarray(self.probs))
        if self.kind == "uniform":
            return rng.uniform(self.low, self.high, size=n)
        if self.kind == "normal":
            # rejection keeps the support compact
            out = np.empty(0)
            while out.size < n:
                draw = rng.normal(self.mean, self.sd, size=2 * (n - out.size) + 16)
                draw = draw[np.abs(draw - self.mean) <= self.bound * self.sd]
                out = np.concatenate([out, draw])
            return out[:n]
        raise SpaceError(f"unknown latent kind {self.kind!r}")


_LATENT_RE = re.compile(r"^\s*(\w+)\s*(?:\((.*)\))?\s*$")


def parse_latent(text: str) -> LatentMarginal:
    """Parse ``rademacher``, ``discrete(v:p, ...)``, ``uniform(a, b)`` or
    ``normal[(mean, sd[, bound])]``."""
    m = _LATENT_RE.match(text)
    if not m:
        raise SpaceError(f"cannot parse latent law {text!r}")
    name, args = m.group(1).lower(), (m.group(2) or "").strip()
    if name == "rademacher":
        return LatentMarginal.rademacher()
    if name == "discrete":
        values, probs = [], []
        for part in args.split(","):
            v, _, p = part.partition(":")
            values.append(float(v))
            probs.append(float(p))
        return LatentMarginal.discrete(values, probs)
    nums = [float(a) for a in args.split(",")] if args else []
    if name == "uniform" and len(nums) == 2:
        return LatentMarginal("uniform", low=nums[0], high=nums[1])
    if name == "normal" and not nums:
        return LatentMarginal("normal")
    if name == "normal" and len(nums) in (2, 3):
        return LatentMarginal("normal", mean=nums[0], sd=nums[1],
                              bound=nums[2] if len(nums) == 3 else 3.0)
    raise SpaceError(f"cannot parse latent law {text!r}")


@dataclass(frozen=True)
class MixingSpec:
    """``X = A @ Z + b`` with independent latent coordinates ``Z``."""

    latents: tuple[LatentMarginal, ...]
    A: np.ndarray
    b: np.ndarray | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.shape[1] != len(self.latents):
            raise SpaceError(f"mixing matrix has {A.shape[1]} columns for "
                             f"{len(self.latents)} latents")
        b = np.zeros(A.shape[0]) if self.b is None else np.asarray(self.b, dtype=float)
        if b.shape != (A.shape[0],):
            raise SpaceError("offset b must have one entry per feature")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return len(self.latents)


def from_mixing(spec: MixingSpec, mode: str = "exact", n: int = 10_000, seed: int = 0,
                bins: int = DEFAULT_BINS, cap: int = DEFAULT_SUPPORT_CAP) -> FeatureSpace:
    """Build a space from a latent mixing specification.

    ``exact`` enumerates the latent product law and pushes it forward,
    merging coinciding images; ``sample`` draws ``n`` i.i.d. rows with a
    generator seeded by ``seed``.
    """
    if mode == "exact":
        if not all(z.is_discrete for z in spec.latents):
            raise SpaceError("exact mode requires every latent marginal to be finite discrete")
        size = math.prod(len(z.values) for z in spec.latents)
        if size > cap:
            raise SpaceError(f"latent support has {size} points, above the cap {cap}")
        combos = np.array(list(itertools.product(*(z.values for z in spec.latents))))
        probs = np.array([math.prod(p) for p in itertools.product(*(z.probs for z in spec.latents))])
        return FeatureSpace.exact(combos @ spec.A.T + spec.b, probs)
    if mode == "sample":
        rng = np.random.default_rng(seed)
        Z = np.column_stack([z.sample(rng, n) for z in spec.latents])
        return FeatureSpace.sample(Z @ spec.A.T + spec.b, bins=bins, seed=seed)
    raise SpaceError(f"unknown mode {mode!r}")


def independent(values: Sequence[Sequence[float]], probs: Sequence[Sequence[float]]) -> FeatureSpace:
    """Exact product law of independent discrete marginals."""
    latents = tuple(LatentMarginal.discrete(v, p) for v, p in zip(values, probs))
    return from_mixing(MixingSpec(latents, np.eye(len(latents))), "exact")


# ---------------------------------------------------------------------------
# FeatureSpace
# ---------------------------------------------------------------------------

def _round_key(X: np.ndarray) -> np.ndarray:
    # merge images equal up to float noise from the mixing product
    return np.round(X, 12) + 0.0


@dataclass
class _Conditioning:
    cell_codes: np.ndarray      # (C, k) occupied cell codes
    cell_coords: np.ndarray     # (C, k) representative coordinates
    cell_rows: list[np.ndarray]
    cell_mass: np.ndarray
    radix: np.ndarray
    sorted_keys: np.ndarray
    key_order: np.ndarray


@dataclass(eq=False)
class FeatureSpace:
    """Weighted point representation of the law of ``X_D``.

    Use :meth:`exact` / :meth:`sample` (or :func:`from_mixing`) rather than
    the constructor.
    """

    kind: str
    points: np.ndarray
    weights: np.ndarray
    n_samples: int | None = None
    bins: int = DEFAULT_BINS
    seed: int | None = None
    values: list[np.ndarray] = field(init=False, repr=False)
    _binned: list[bool] = field(init=False, repr=False)
    _edges: list[np.ndarray | None] = field(init=False, repr=False)
    _codes: np.ndarray = field(init=False, repr=False)
    _reps: list[np.ndarray] = field(init=False, repr=False)
    _marginals: dict = field(init=False, repr=False, default_factory=dict)
    _conditionings: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=float) + 0.0
        self.weights = np.asarray(self.weights, dtype=float)
        self.points.setflags(write=False)
        self.weights.setflags(write=False)
        if self.points.ndim != 2 or self.points.shape[0] != self.weights.shape[0]:
            raise SpaceError("points must be (n, d) with one weight per point")
        if self.points.shape[0] < 2:
            raise SpaceError("a space needs at least 2 points")
        if np.any(self.weights <= 0) or abs(self.weights.sum() - 1) > 1e-12:
            raise SpaceError("weights must be positive and sum to 1")
        self.values = [np.unique(self.points[:, j]) for j in range(self.d)]
        for j, v in enumerate(self.values):
            if v.size < 2:
                logger.warning("feature x%d is degenerate (single value %g); "
                               "its effects are identically 0", j + 1, v[0])
        self._build_cells()

    # -- construction -----------------------------------------------------
    @classmethod
    def exact(cls, points, probs) -> FeatureSpace:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        probs = np.asarray(probs, dtype=float)
        if np.any(probs <= 0):
            raise SpaceError("probabilities must be positive")
        if abs(probs.sum() - 1) > 1e-12:
            raise SpaceError(f"probabilities sum to {probs.sum()!r}, not 1")
        if not np.all(np.isfinite(points)):
            raise SpaceError("support points must be finite")
        keys, inverse = np.unique(_round_key(points), axis=0, return_inverse=True)
        merged = np.zeros(keys.shape[0])
        np.add.at(merged, inverse.ravel(), probs)
        return cls("exact", keys, merged / merged.sum())

    @classmethod
    def sample(cls, X, bins: int = DEFAULT_BINS, seed: int | None = None) -> FeatureSpace:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[0] < 2:
            raise SpaceError("a sample needs n >= 2 rows")
        if not np.all(np.isfinite(X)):
            raise SpaceError("sample contains non-finite values")
        rows, counts = np.unique(X + 0.0, axis=0, return_counts=True)
        return cls("sample", rows, counts / X.shape[0], n_samples=X.shape[0],
                   bins=bins, seed=seed)

    # -- basic properties -------------------------------------------------
    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def n(self) -> int:
        """Number of backend points (support points or distinct sample rows)."""
        return self.points.shape[0]

    @property
    def is_exact(self) -> bool:
        return self.kind == "exact"

    @property
    def effective_n(self) -> int:
        return self.n_samples if self.n_samples is not None else self.n

    @property
    def lo(self) -> np.ndarray:
        return np.array([v[0] for v in self.values])

    @property
    def hi(self) -> np.ndarray:
        return np.array([v[-1] for v in self.values])

    @property
    def scale(self) -> np.ndarray:
        span = self.hi - self.lo
        return np.where(span > 0, span, 1.0)

    def feature_weights(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Marginal law of column ``j`` (0-based) as (values, probabilities)."""
        vals, inv = np.unique(self.points[:, j], return_inverse=True)
        p = np.zeros(vals.size)
        np.add.at(p, inv.ravel(), self.weights)
        return vals, p

    def probe_points(self, cap: int = 4096) -> np.ndarray:
        """Points at which functions are compared: the product grid of
        per-feature values when it has at most ``cap`` points, else the
        backend points."""
        size = math.prod(v.size for v in self.values)
        if size <= cap:
            return np.array(list(itertools.product(*self.values)), dtype=float).reshape(-1, self.d)
        return self.points

    def is_independent(self, tol: float = 1e-12) -> bool:
        """True iff the exact joint law factorizes into its marginals."""
        if not self.is_exact:
            return False
        if self.n != math.prod(v.size for v in self.values):
            return False
        prod = np.ones(self.n)
        for j in range(self.d):
            vals, p = self.feature_weights(j)
            prod *= p[np.searchsorted(vals, self.points[:, j])]
        return bool(np.max(np.abs(prod - self.weights)) <= tol)

    def check_in_range(self, X: np.ndarray, cols: Sequence[int]) -> None:
        if not cols:
            return
        cols = list(cols)
        tol = 1e-9 * self.scale[cols]
        lo, hi = self.lo[cols] - tol, self.hi[cols] + tol
        bad = np.any((X < lo) | (X > hi), axis=1)
        if np.any(bad):
            row = X[np.flatnonzero(bad)[0]]
            names = ", ".join(f"x{c + 1}={v:g}" for c, v in zip(cols, row))
            raise NoMassError(f"no mass at condition {names}: outside the support range")

    # -- expectations -----------------------------------------------------
    def evaluate(self, g: Callable, X: np.ndarray | None = None) -> np.ndarray:
        X = self.points if X is None else X
        vals = np.asarray(g(X), dtype=float)
        vals = np.broadcast_to(vals, (X.shape[0],))
        if not np.all(np.isfinite(vals)):
            bad = int(np.flatnonzero(~np.isfinite(vals))[0])
            raise EvaluationError(f"function is not finite at point {X[bad].tolist()}")
        return vals

    def expect(self, g: Callable) -> float:
        """``E[g(X_D)]``: an exact weighted sum or a sample mean."""
        return float(np.sum(self.weights * self.evaluate(g)))

    def marginal_law(self, cols: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        """Distinct rows of ``X_cols`` with their total probabilities."""
        cols = tuple(cols)
        if cols not in self._marginals:
            if not cols:
                self._marginals[cols] = (np.zeros((1, 0)), np.ones(1))
            else:
                rows, inv = np.unique(self.points[:, cols], axis=0, return_inverse=True)
                p = np.zeros(rows.shape[0])
                np.add.at(p, inv.ravel(), self.weights)
                self._marginals[cols] = (rows, p)
        return self._marginals[cols]

    # -- conditioning -----------------------------------------------------
    def _build_cells(self) -> None:
        self._binned, self._edges, self._reps = [], [], []
        codes = np.empty(self.points.shape, dtype=np.int64)
        for j in range(self.d):
            col = self.points[:, j]
            vals = self.values[j]
            if self.is_exact or vals.size <= self.bins:
                self._binned.append(False)
                self._edges.append(None)
                self._reps.append(vals)
                codes[:, j] = np.searchsorted(vals, col)
            else:
                edges = np.unique(_weighted_quantiles(col, self.weights,
                                                      np.linspace(0, 1, self.bins + 1)))
                nb = max(edges.size - 1, 1)
                code = np.clip(np.searchsorted(edges, col, side="right") - 1, 0, nb - 1)
                reps = np.array([np.average(col[code == k], weights=self.weights[code == k])
                                 if np.any(code == k) else 0.5 * (edges[k] + edges[k + 1])
                                 for k in range(nb)])
                self._binned.append(True)
                self._edges.append(edges)
                self._reps.append(reps)
                codes[:, j] = code
        self._codes = codes

    def _query_codes(self, j: int, q: np.ndarray) -> np.ndarray:
        if self._binned[j]:
            edges = self._edges[j]
            return np.clip(np.searchsorted(edges, q, side="right") - 1, 0, edges.size - 2)
        vals = self.values[j]
        idx = np.clip(np.searchsorted(vals, q), 0, vals.size - 1)
        # nearer of the two neighbours, then an exactness test
        left = np.clip(idx - 1, 0, vals.size - 1)
        idx = np.where(np.abs(vals[left] - q) < np.abs(vals[idx] - q), left, idx)
        hit = np.abs(vals[idx] - q) <= 1e-12 * self.scale[j]
        return np.where(hit, idx, -1)

    def _conditioning(self, cols: tuple[int, ...]) -> _Conditioning:
        if cols not in self._conditionings:
            codes = self._codes[:, cols]
            cells, inv = np.unique(codes, axis=0, return_inverse=True)
            inv = inv.ravel()
            rows = [np.flatnonzero(inv == c) for c in range(cells.shape[0])]
            coords = np.column_stack([self._reps[j][cells[:, k]] for k, j in enumerate(cols)])
            mass = np.array([self.weights[r].sum() for r in rows])
            sizes = [self._reps[j].size for j in cols]
            radix = np.array([math.prod(sizes[k + 1:]) for k in range(len(cols))], dtype=np.int64)
            keys = cells @ radix
            order = np.argsort(keys)
            self._conditionings[cols] = _Conditioning(cells, coords, rows, mass, radix,
                                                      keys[order], order)
        return self._conditionings[cols]

    def conditional_law(self, cols: Sequence[int], Q: np.ndarray):
        """Conditional law of the backend rows given ``X_cols = q`` for each
        query row ``q`` of ``Q``.

        Returns a list of ``(query_indices, rows, weights)`` groups: every
        query in a group shares the same conditional law, a probability
        vector over backend ``rows``.
        """
        cols = tuple(cols)
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        m = Q.shape[0]
        if not cols:
            return [(np.arange(m), np.arange(self.n), self.weights.copy())]
        self.check_in_range(Q, cols)
        cond = self._conditioning(cols)
        qcodes = np.column_stack([self._query_codes(j, Q[:, k]) for k, j in enumerate(cols)])
        qkeys = np.where(np.any(qcodes < 0, axis=1), -1, qcodes @ cond.radix)
        pos = np.clip(np.searchsorted(cond.sorted_keys, qkeys), 0, cond.sorted_keys.size - 1)
        hit = (qkeys >= 0) & (cond.sorted_keys[pos] == qkeys)
        chosen = np.full(m, -1, dtype=np.int64)
        chosen[hit] = cond.key_order[pos[hit]]
        ties: dict[tuple[int, ...], list[int]] = {}
        miss = np.flatnonzero(~hit)
        scale = self.scale[list(cols)]
        for start in range(0, miss.size, 4096):
            block = miss[start:start + 4096]
            diff = (cond.cell_coords[None, :, :] - Q[block, None, :]) / scale
            dist = np.sqrt(np.sum(diff ** 2, axis=2))
            best = dist.min(axis=1, keepdims=True)
            tied = dist <= best + _TIE_TOL * np.maximum(1.0, best)
            single = tied.sum(axis=1) == 1
            chosen[block[single]] = np.argmax(tied[single], axis=1)
            for i in np.flatnonzero(~single):
                ties.setdefault(tuple(np.flatnonzero(tied[i]).tolist()), []).append(block[i])
        out = []
        singles = np.flatnonzero(chosen >= 0)
        order = singles[np.argsort(chosen[singles], kind="stable")]
        cells, starts = np.unique(chosen[order], return_index=True)
        for cell, qidx in zip(cells, np.split(order, starts[1:])):
            rows = cond.cell_rows[cell]
            out.append((qidx, rows, self.weights[rows] / cond.cell_mass[cell]))
        for sig, qidx in ties.items():
            rows = np.concatenate([cond.cell_rows[c] for c in sig])
            w = self.weights[rows]
            out.append((np.asarray(qidx), rows, w / w.sum()))
        return out

    def has_mass(self, cols: Sequence[int], q: Sequence[float]) -> bool:
        """Whether the conditioning cell of ``q`` itself carries mass."""
        cols = tuple(cols)
        cond = self._conditioning(cols)
        code = np.array([int(self._query_codes(j, np.array([v]))[0]) for j, v in zip(cols, q)])
        if np.any(code < 0):
            return False
        key = code @ cond.radix
        return bool(np.any(cond.sorted_keys == key))

    def ale_edges(self, j: int) -> np.ndarray:
        """Bin edges for finite-difference ALE on column ``j``: the distinct
        values, or the quantile edges when the feature is binned."""
        return self._edges[j] if self._binned[j] else self.values[j]

    # -- representatives --------------------------------------------------
    def representatives(self, rules) -> RepVector:
        return representatives(self, rules)


def _weighted_quantiles(x: np.ndarray, w: np.ndarray, qs: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    xs, ws = x[order], w[order]
    cdf = np.cumsum(ws)
    cdf /= cdf[-1]
    idx = np.clip(np.searchsorted(cdf, qs - 1e-12), 0, xs.size - 1)
    out = xs[idx]
    out[0], out[-1] = xs[0], xs[-1]
    return out


# ---------------------------------------------------------------------------
# Representative values
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RepVector:
    values: tuple[float, ...]
    rules: tuple[str, ...]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __getitem__(self, j: int) -> float:
        return self.values[j]

    def __len__(self) -> int:
        return len(self.values)


def representatives(space: FeatureSpace, rules) -> RepVector:
    """Per-feature representative values.

    ``rules`` is one rule for every feature or a sequence of per-feature
    rules; a rule is ``"mean"``, ``"median"`` (smallest value with CDF >=
    0.5), ``"mode"`` (most probable value, ties to the smallest) or a number.
    """
    if isinstance(rules, (str, int, float)):
        rules = [rules] * space.d
    if len(rules) != space.d:
        raise SpaceError(f"need {space.d} representative rules, got {len(rules)}")
    values, names = [], []
    for j, rule in enumerate(rules):
        vals, p = space.feature_weights(j)
        if isinstance(rule, str):
            try:
                rule = float(rule)
            except ValueError:
                pass
        if rule == "mean":
            v = float(np.sum(vals * p))
        elif rule == "median":
            v = float(vals[np.flatnonzero(np.cumsum(p) >= 0.5 - 1e-12)[0]])
        elif rule == "mode":
            v = float(vals[np.flatnonzero(p >= p.max() - 1e-15)[0]])
        elif isinstance(rule, (int, float)):
            v = float(rule)
            if not vals[0] - 1e-12 <= v <= vals[-1] + 1e-12:
                raise SpaceError(f"representative {v} for x{j + 1} outside "
                                 f"[{vals[0]}, {vals[-1]}]")
            rule = "explicit"
        else:
            raise SpaceError(f"unknown representative rule {rule!r}")
        values.append(v)
        names.append(str(rule))
    return RepVector(tuple(values), tuple(names))


# ---------------------------------------------------------------------------
# Public expectation operators
# ---------------------------------------------------------------------------

def expect(space: FeatureSpace, g: Callable) -> float:
    return space.expect(g)


def marginal_expect(space: FeatureSpace, g: Callable, J):
    """The partial-dependence operator: ``x_J -> E[g(x_J, X_{\\J})]`` with
    ``X_{\\J}`` drawn from its unconditional marginal law."""
    from .functions import Marginal, as_fn
    return Marginal(as_fn(g, space.d), _cols(J), space)


def conditional_expect(space: FeatureSpace, g: Callable, J, x_J) -> float:
    """``E[g(X_D) | X_J = x_J]``.

    ``x_J`` lists the values of the features in ``J`` in increasing index
    order. Raises :class:`NoMassError` when the condition carries no mass.
    """
    cols = _cols(J)
    q = np.asarray(x_J, dtype=float).reshape(1, -1)
    if q.shape[1] != len(cols):
        raise SpaceError(f"condition needs {len(cols)} values")
    space.check_in_range(q, cols)
    if cols and not space.has_mass(cols, q[0]):
        names = ", ".join(f"x{c + 1}={v:g}" for c, v in zip(cols, q[0]))
        raise NoMassError(f"no mass at condition {names}")
    (_, rows, w), = space.conditional_law(cols, q)
    vals = space.evaluate(g, space.points[rows])
    return float(np.sum(w * vals))


def _cols(J) -> tuple[int, ...]:
    from .subsets import SubsetJ
    if isinstance(J, SubsetJ):
        return J.columns
    return tuple(sorted(int(j) - 1 for j in J))


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------

def load_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray | None]:
    """Read a dataset with header ``x1..xd`` and an optional ``y`` column."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        rows = [[float(v) for v in row] for row in reader if row]
    xcols = [h for h in header if re.fullmatch(r"x\d+", h)]
    expected = [f"x{j}" for j in range(1, len(xcols) + 1)]
    if sorted(xcols, key=lambda h: int(h[1:])) != expected:
        raise SpaceError(f"CSV header must contain x1..x{len(xcols)}, got {header}")
    data = np.asarray(rows, dtype=float)
    X = data[:, [header.index(h) for h in expected]]
    y = data[:, header.index("y")] if "y" in header else None
    return X, y


def _parse_matrix(text: str) -> np.ndarray:
    return np.array([[float(v) for v in row.replace(",", " ").split()]
                     for row in text.split(";") if row.strip()])


def load_space_config(path: str | Path, bins: int | None = None, seed: int | None = None,
                      n: int | None = None):
    """Load a space config file.

    The format is ``key = value`` lines (``#`` comments, optional ``[space]``
    header)::

        mode   = exact            # exact | sample
        latent = rademacher; rademacher; discrete(0:0.25, 1:0.75)
        A      = 1 0 0; 1 1 0; 0 0 1
        b      = 0 0 0            # optional
        n      = 10000            # sample mode
        seed   = 0
        bins   = 20

    or, for a dataset, ``data = path.csv`` (relative to the config file).
    Returns ``(space, y)`` where ``y`` is the dataset's ``y`` column or None.
    ``bins``, ``seed`` and ``n`` override the file's values.
    """
    path = Path(path)
    text = path.read_text()
    if not re.search(r"^\s*\[", text, flags=re.M):
        text = "[space]\n" + text
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.read_string(text)
    cfg = parser[parser.sections()[0]]
    bins = cfg.getint("bins", DEFAULT_BINS) if bins is None else bins
    seed = cfg.getint("seed", 0) if seed is None else seed
    n = cfg.getint("n", 10_000) if n is None else n
    if "data" in cfg:
        X, y = load_csv(path.parent / cfg["data"])
        return FeatureSpace.sample(X, bins=bins, seed=seed), y
    if "latent" not in cfg or "A" not in cfg:
        raise SpaceError(f"{path}: config needs either 'data' or 'latent' and 'A'")
    latents = tuple(parse_latent(t) for t in cfg["latent"].split(";") if t.strip())
    A = _parse_matrix(cfg["A"])
    b = _parse_matrix(cfg["b"]).ravel() if "b" in cfg else None
    spec = MixingSpec(latents, A, b)
    space = from_mixing(spec, cfg.get("mode", "exact").strip(), n=n, seed=seed, bins=bins)
    return space, None
