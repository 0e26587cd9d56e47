"""Friedman's pairwise H-statistic from PD-naive terms.

For features ``j, l`` with PD-naive terms ``f*_j, f*_l, f*_jl``::

    H^2 = sum_i f*_jl(x_i)^2 / sum_i (f*_jl + f*_j + f*_l)(x_i)^2

with sums over the sample rows, or probability weighted over the support of
an exact space. The unnormalized variant is the root mean square of
``f*_jl``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Decomposition, build
from .methods import pd_naive
from .space import FeatureSpace
from .subsets import SubsetJ


@dataclass(frozen=True)
class HStat:
    """H-statistic of one feature pair.

    ``h2`` is None when the denominator vanishes (no joint effect at all).
    ``se`` is the delta-method standard error of the ratio over the sample
    rows, treating the terms as fixed; it is 0 on an exact space.
    """

    j: int
    l: int
    h2: float | None
    se: float | None
    unnormalized: float
    numerator: float
    denominator: float


def _pair_terms(dec: Decomposition, j: int, l: int):
    pair = dec[SubsetJ.of(j, l)].values
    return pair, pair + dec[SubsetJ.of(j)].values + dec[SubsetJ.of(l)].values


def _naive(space: FeatureSpace, f) -> Decomposition:
    if space.d < 2:
        raise ValueError("the H-statistic needs at least two features")
    return build(pd_naive(), space, f, max_order=2)


def pair_statistic(dec: Decomposition, j: int, l: int, zero_tol: float = 1e-24) -> HStat:
    """H-statistic for the pair ``(j, l)`` (1-based) from a PD-naive build."""
    if j == l:
        raise ValueError("the H-statistic needs two distinct features")
    j, l = sorted((j, l))
    w = dec.space.weights
    pair, joint = _pair_terms(dec, j, l)
    N, D = pair ** 2, joint ** 2
    num, den = float(np.sum(w * N)), float(np.sum(w * D))
    scale = 1.0 + float(np.max(np.abs(dec.space.evaluate(dec.f))))
    if num <= zero_tol * scale ** 2:
        num = 0.0                   # round-off in the pair term, not an interaction
    unnorm = math.sqrt(num)
    if den <= zero_tol * scale ** 2:
        return HStat(j, l, None, None, unnorm, num, den)
    r = num / den
    se = 0.0
    n = dec.space.effective_n
    if not dec.space.is_exact and n > 1:
        counts = w * n
        resid = float(np.sum(counts * (N - r * D) ** 2))
        se = math.sqrt(resid / (n * (n - 1))) / den
    return HStat(j, l, r, se, unnorm, num, den)


def h_squared(space: FeatureSpace, f, j: int, l: int) -> float | None:
    """``H^2`` for features ``j, l``; None when undefined."""
    return pair_statistic(_naive(space, f), j, l).h2


def h_unnormalized(space: FeatureSpace, f, j: int, l: int) -> float:
    """``sqrt(E[f*_jl^2])``."""
    return pair_statistic(_naive(space, f), j, l).unnormalized


@dataclass
class HMatrix:
    d: int
    stats: dict[tuple[int, int], HStat]

    def h2(self) -> list[list[float | None]]:
        return self._matrix(lambda s: s.h2)

    def unnormalized(self) -> list[list[float | None]]:
        return self._matrix(lambda s: s.unnormalized)

    def _matrix(self, get):
        out = [[None] * self.d for _ in range(self.d)]
        for (j, l), s in self.stats.items():
            out[j - 1][l - 1] = out[l - 1][j - 1] = get(s)
        return out

    def to_json_dict(self) -> dict:
        clean = lambda m: [[None if v is None else float(f"{v:.15g}") for v in row] for row in m]
        return {"d": self.d, "h2": clean(self.h2()), "unnormalized": clean(self.unnormalized()),
                "se": clean(self._matrix(lambda s: s.se))}

    def export(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, mat in (("h2", self.h2()), ("h_unnormalized", self.unnormalized())):
            path = out / f"{name}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow([""] + [f"x{j}" for j in range(1, self.d + 1)])
                for i, row in enumerate(mat):
                    w.writerow([f"x{i + 1}"] + ["" if v is None else repr(float(f"{v:.15g}"))
                                                for v in row])
            paths.append(path)
        path = out / "hstat.json"
        path.write_text(json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n")
        paths.append(path)
        return paths


def pairwise(space: FeatureSpace, f) -> HMatrix:
    """All pairwise statistics from one PD-naive build; the diagonal is
    undefined."""
    dec = _naive(space, f)
    stats = {(j, l): pair_statistic(dec, j, l)
             for j in range(1, space.d + 1) for l in range(j + 1, space.d + 1)}
    return HMatrix(space.d, stats)
