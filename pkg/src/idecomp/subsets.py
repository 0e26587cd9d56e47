"""Feature-index subsets ``J`` of ``D = {1..d}`` stored as bitmasks."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Iterator

MAX_DIM = 16


@dataclass(frozen=True, order=True)
class SubsetJ:
    """A subset of 1-based feature indices. Bit ``j-1`` is set iff ``j`` is in J."""

    mask: int

    @classmethod
    def of(cls, *indices: int) -> SubsetJ:
        return cls.from_indices(indices)

    @classmethod
    def from_indices(cls, indices: Iterable[int]) -> SubsetJ:
        mask = 0
        for j in indices:
            if not 1 <= j <= MAX_DIM:
                raise ValueError(f"feature index {j} outside 1..{MAX_DIM}")
            mask |= 1 << (j - 1)
        return cls(mask)

    @classmethod
    def full(cls, d: int) -> SubsetJ:
        if not 0 <= d <= MAX_DIM:
            raise ValueError(f"dimension {d} outside 0..{MAX_DIM}")
        return cls((1 << d) - 1)

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(j + 1 for j in range(MAX_DIM) if self.mask >> j & 1)

    @property
    def columns(self) -> tuple[int, ...]:
        """0-based array columns."""
        return tuple(j for j in range(MAX_DIM) if self.mask >> j & 1)

    def __len__(self) -> int:
        return bin(self.mask).count("1")

    def __bool__(self) -> bool:
        return self.mask != 0

    def __iter__(self) -> Iterator[int]:
        return iter(self.indices)

    def __contains__(self, j: int) -> bool:
        return 1 <= j <= MAX_DIM and bool(self.mask >> (j - 1) & 1)

    def __or__(self, other: SubsetJ) -> SubsetJ:
        return SubsetJ(self.mask | other.mask)

    def __and__(self, other: SubsetJ) -> SubsetJ:
        return SubsetJ(self.mask & other.mask)

    def __sub__(self, other: SubsetJ) -> SubsetJ:
        return SubsetJ(self.mask & ~other.mask)

    def issubset(self, other: SubsetJ) -> bool:
        return self.mask & ~other.mask == 0

    def isstrictsubset(self, other: SubsetJ) -> bool:
        return self.issubset(other) and self.mask != other.mask

    def complement(self, d: int) -> SubsetJ:
        return SubsetJ.full(d) - self

    def subsets(self) -> Iterator[SubsetJ]:
        """All subsets including the empty set and J itself, by increasing size."""
        idx = self.indices
        for k in range(len(idx) + 1):
            for combo in combinations(idx, k):
                yield SubsetJ.from_indices(combo)

    def strict_subsets(self) -> Iterator[SubsetJ]:
        """The ``2^|J| - 1`` proper subsets, by increasing size."""
        for s in self.subsets():
            if s.mask != self.mask:
                yield s

    def key(self) -> str:
        return "[" + ",".join(str(j) for j in self.indices) + "]"

    def __repr__(self) -> str:
        return "{" + ",".join(str(j) for j in self.indices) + "}"


EMPTY = SubsetJ(0)


def lattice(d: int, max_order: int | None = None) -> list[SubsetJ]:
    """All subsets of ``D`` with at most ``max_order`` elements, by size then
    lexicographically."""
    if max_order is None:
        max_order = d
    return [SubsetJ.from_indices(c)
            for k in range(max_order + 1)
            for c in combinations(range(1, d + 1), k)]
