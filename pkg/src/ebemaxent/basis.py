"""Monomial constraint functions ``c_j(x) = x**j`` indexed by multi-indices."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb
from typing import Iterable, Sequence

import numpy as np

from .exceptions import DomainError

MAX_ORDER = 16


@dataclass(frozen=True)
class MultiIndex:
    """Exponent vector of a single monomial; the zero vector is not allowed."""

    exponents: tuple[int, ...]

    def __post_init__(self):
        exps = tuple(int(e) for e in self.exponents)
        if not exps:
            raise ValueError("multi-index needs at least one exponent")
        if any(e < 0 for e in exps):
            raise ValueError(f"negative exponent in {exps}")
        if sum(exps) < 1:
            raise ValueError("the zeroth moment is not a constraint")
        object.__setattr__(self, "exponents", exps)

    @property
    def dimension(self) -> int:
        return len(self.exponents)

    @property
    def total_order(self) -> int:
        return sum(self.exponents)

    def is_pure_power(self) -> bool:
        return sum(1 for e in self.exponents if e) == 1

    def __str__(self):
        return "(" + ",".join(map(str, self.exponents)) + ")"


@dataclass(frozen=True)
class BasisSet:
    """Ordered list of multi-indices.

    ``permutation[k]`` is the position in the user-facing (original) ordering
    of ``indices[k]``. It is the identity unless the set was produced by
    :func:`reorder_for_convexity`.
    """

    dimension: int
    max_order: int
    indices: tuple[MultiIndex, ...]
    permutation: tuple[int, ...] = field(default=(), compare=False)

    def __post_init__(self):
        idx = tuple(i if isinstance(i, MultiIndex) else MultiIndex(tuple(i)) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        if any(i.dimension != self.dimension for i in idx):
            raise ValueError("all multi-indices must have the basis dimension")
        if len(set(idx)) != len(idx):
            raise ValueError("duplicate multi-index in basis")
        if idx and max(i.total_order for i in idx) > MAX_ORDER:
            raise ValueError(f"total order above {MAX_ORDER} is not supported")
        perm = tuple(self.permutation) or tuple(range(len(idx)))
        if sorted(perm) != list(range(len(idx))):
            raise ValueError("permutation must be a permutation of range(n)")
        object.__setattr__(self, "permutation", perm)

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def exponent_matrix(self) -> np.ndarray:
        """(n, d) integer array of exponents."""
        return np.array([i.exponents for i in self.indices], dtype=np.int64).reshape(len(self), self.dimension)

    def to_user_order(self, values: Sequence[float]) -> np.ndarray:
        """Map a vector aligned with this basis back to the original ordering."""
        out = np.empty(len(self))
        out[list(self.permutation)] = np.asarray(values, dtype=float)
        return out

    def from_user_order(self, values: Sequence[float]) -> np.ndarray:
        return np.asarray(values, dtype=float)[list(self.permutation)]

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "max_order": self.max_order,
            "indices": [list(i.exponents) for i in self.indices],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BasisSet":
        return cls(
            dimension=int(data["dimension"]),
            max_order=int(data["max_order"]),
            indices=tuple(MultiIndex(tuple(i)) for i in data["indices"]),
        )

    @classmethod
    def from_indices(cls, indices: Iterable[Sequence[int]]) -> "BasisSet":
        idx = tuple(MultiIndex(tuple(i)) for i in indices)
        if not idx:
            raise ValueError("empty basis")
        return cls(idx[0].dimension, max(i.total_order for i in idx), idx)


def count_multi_indices(d: int, p: int) -> int:
    return sum(comb(j + d - 1, d - 1) for j in range(1, p + 1))


def _grade(d: int, order: int) -> list[tuple[int, ...]]:
    # lexicographically decreasing: (order,0,..) comes before (0,..,order)
    out = []
    for combo in itertools.combinations_with_replacement(range(d), order):
        exps = [0] * d
        for k in combo:
            exps[k] += 1
        out.append(tuple(exps))
    out.sort(reverse=True)
    return out


def enumerate_multi_indices(d: int, p: int) -> BasisSet:
    """All multi-indices with ``1 <= |j| <= p``, graded then lexicographic."""
    if d < 1 or p < 1:
        raise ValueError(f"need d >= 1 and p >= 1, got d={d}, p={p}")
    if p > MAX_ORDER:
        raise ValueError(f"order p={p} exceeds the supported maximum {MAX_ORDER}")
    indices = [MultiIndex(e) for order in range(1, p + 1) for e in _grade(d, order)]
    return BasisSet(d, p, tuple(indices))


def reorder_for_convexity(b: BasisSet) -> BasisSet:
    """Move the pure even powers ``x_k**p`` of maximal order ``p`` to the front.

    Solving those constraints first keeps the leading even terms of the
    exponent available, which is what keeps the fitted density integrable-looking
    when later constraints are discarded. The relative order of all other
    indices is preserved.
    """
    if len(b) == 0:
        raise ValueError("empty basis")
    p = b.max_order
    front, rest = [], []
    for pos, idx in enumerate(b.indices):
        if p % 2 == 0 and idx.total_order == p and idx.is_pure_power():
            front.append(pos)
        else:
            rest.append(pos)
    order = front + rest
    perm = tuple(b.permutation[k] for k in order)
    return BasisSet(b.dimension, b.max_order, tuple(b.indices[k] for k in order), perm)


def eval_basis_matrix(b: BasisSet, nodes: np.ndarray) -> np.ndarray:
    """Matrix ``M[i, j] = c_j(x_i)`` for nodes inside ``[-1, 1]^d``.

    Powers are built by repeated multiplication so that ``x**0 == 1`` exactly
    and results are reproducible bit-for-bit.
    """
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    if nodes.shape[1] != b.dimension:
        raise ValueError(f"nodes have dimension {nodes.shape[1]}, basis has {b.dimension}")
    outside = np.flatnonzero(np.any(np.abs(nodes) > 1.0, axis=1))
    if outside.size:
        k = outside[0]
        raise DomainError(f"node {k} at {nodes[k].tolist()} lies outside [-1, 1]^{b.dimension}")

    p = b.max_order
    N, d = nodes.shape
    powers = np.empty((p + 1, N, d))
    powers[0] = 1.0
    for e in range(1, p + 1):
        powers[e] = powers[e - 1] * nodes

    exps = b.exponent_matrix()
    out = np.empty((N, len(b)))
    for col, row in enumerate(exps):
        val = powers[row[0], :, 0].copy()
        for k in range(1, d):
            if row[k]:
                val *= powers[row[k], :, k]
        out[:, col] = val
    return out
