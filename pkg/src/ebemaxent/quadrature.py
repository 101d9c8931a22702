"""Nested Clenshaw-Curtis rules, their Smolyak combination, and tensor trapezoid grids.

All rules live on ``[-1, 1]^d``. Level ``l`` of the 1-D Clenshaw-Curtis family
has ``m_1 = 1`` node and ``m_l = 2**(l-1) + 1`` nodes for ``l >= 2``.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import comb, prod
from typing import Callable

import numpy as np
import scipy.fft

from .exceptions import EvaluationError, ResourceLimitError

DEFAULT_NODE_CAP = 10**7


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    dimension: int
    level: int
    nodes: np.ndarray
    weights: np.ndarray
    kind: str = "sparse"

    def __post_init__(self):
        nodes = np.ascontiguousarray(np.atleast_2d(self.nodes), dtype=float)
        weights = np.ascontiguousarray(self.weights, dtype=float)
        if nodes.shape != (weights.size, self.dimension):
            raise ValueError(f"nodes shape {nodes.shape} does not match {weights.size} weights in d={self.dimension}")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return self.weights.size

    @property
    def num_nodes(self) -> int:
        return self.weights.size

    def to_dict(self) -> dict:
        """Recipe that rebuilds this rule (``level`` doubles as per-axis count for uniform grids)."""
        if self.kind == "uniform":
            return {"kind": "uniform", "dimension": self.dimension, "m": self.level}
        return {"kind": self.kind, "dimension": self.dimension, "level": self.level}

    @classmethod
    def from_dict(cls, data: dict, dimension: int | None = None) -> "QuadratureRule":
        d = int(data.get("dimension", dimension or 0))
        if d < 1:
            raise ValueError("quadrature recipe lacks a dimension")
        kind = data.get("kind", "sparse")
        if kind == "uniform":
            return uniform_grid(d, int(data["m"]))
        if kind == "sparse":
            return smolyak_sparse_grid(d, int(data["level"]))
        raise ValueError(f"unknown quadrature kind {kind!r}")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{k + 1}" for k in range(self.dimension)] + ["weight"])
            for x, w in zip(self.nodes, self.weights):
                writer.writerow([repr(float(v)) for v in x] + [repr(float(w))])


def cc_num_nodes(level: int) -> int:
    if level < 1:
        raise ValueError(f"level must be >= 1, got {level}")
    return 1 if level == 1 else 2 ** (level - 1) + 1


@lru_cache(maxsize=64)
def _cc_1d(level: int) -> tuple[np.ndarray, np.ndarray]:
    if level == 1:
        return np.array([0.0]), np.array([2.0])
    n = 2 ** (level - 1)
    k = np.arange(n + 1)
    # k/n is a dyadic rational, exact in binary, so a node shared by two
    # levels is computed from the identical double and compares bitwise equal.
    x = -np.cos(np.pi * (k / n))
    half = n // 2
    x[half] = 0.0
    x[half + 1 :] = -x[:half][::-1]
    even = k[k % 2 == 0].astype(float)
    moments = np.zeros(n + 1)
    moments[k % 2 == 0] = 1.0 / (1.0 - even**2)
    # DCT-I realises sum_j' 2/(1 - j^2) cos(j k pi / n) with halved end terms
    w = scipy.fft.dct(moments, type=1) / n
    w[1:-1] *= 2.0
    w = 0.5 * (w + w[::-1])
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def clenshaw_curtis_1d(level: int) -> QuadratureRule:
    """1-D Clenshaw-Curtis rule on the Chebyshev extrema (ascending nodes)."""
    cc_num_nodes(level)
    x, w = _cc_1d(level)
    return QuadratureRule(1, level, x[:, None], w.copy(), kind="sparse")


def _new_points(level: int) -> int:
    if level == 1:
        return 1
    if level == 2:
        return 2
    return 2 ** (level - 2)


def _admissible_levels(d: int, level: int):
    top = level + d - 1
    for idx in itertools.product(range(1, level + 1), repeat=d):
        if sum(idx) <= top:
            yield idx


def sparse_grid_size(d: int, level: int) -> int:
    """Number of distinct nodes of the level-``level`` Smolyak grid in ``d`` dimensions."""
    if d < 1 or level < 1:
        raise ValueError("need d >= 1 and level >= 1")
    return sum(prod(_new_points(i) for i in idx) for idx in _admissible_levels(d, level))


def smolyak_sparse_grid(d: int, level: int, node_cap: int = DEFAULT_NODE_CAP) -> QuadratureRule:
    """Smolyak combination of nested Clenshaw-Curtis rules with ``|i|_1 <= level + d - 1``."""
    if d < 1 or level < 1:
        raise ValueError(f"need d >= 1 and level >= 1, got d={d}, level={level}")
    if d == 1:
        return clenshaw_curtis_1d(level)
    predicted = sparse_grid_size(d, level)
    if predicted > node_cap:
        raise ResourceLimitError(f"sparse grid d={d}, level={level} needs {predicted} nodes (cap {node_cap})")

    L = level
    finest_x, _ = _cc_1d(L)
    # integer position of every 1-D node on the finest-level grid
    keys_1d, weights_1d = {}, {}
    for i in range(1, L + 1):
        _, w = _cc_1d(i)
        if i == 1:
            keys_1d[i] = np.array([0 if L == 1 else 2 ** (L - 2)], dtype=np.int64)
        else:
            keys_1d[i] = np.arange(2 ** (i - 1) + 1, dtype=np.int64) * 2 ** (L - i)
        weights_1d[i] = w

    key_blocks, weight_blocks = [], []
    top = level + d - 1
    for idx in _admissible_levels(d, level):
        s = sum(idx)
        if s < max(d, level):
            continue
        coef = (-1) ** (top - s) * comb(d - 1, top - s)
        grids = np.meshgrid(*(keys_1d[i] for i in idx), indexing="ij")
        wgrids = np.meshgrid(*(weights_1d[i] for i in idx), indexing="ij")
        key_blocks.append(np.stack([g.ravel() for g in grids], axis=1))
        w = np.full(grids[0].size, float(coef))
        for g in wgrids:
            w = w * g.ravel()
        weight_blocks.append(w)

    keys = np.concatenate(key_blocks)
    weights = np.concatenate(weight_blocks)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    merged = np.bincount(inverse.ravel(), weights=weights, minlength=len(uniq))
    nodes = finest_x[uniq]
    return QuadratureRule(d, level, nodes, merged, kind="sparse")


def uniform_grid(d: int, m: int, node_cap: int = DEFAULT_NODE_CAP) -> QuadratureRule:
    """Tensor grid of ``m`` equispaced points per axis with trapezoidal weights."""
    if d < 1 or m < 2:
        raise ValueError(f"need d >= 1 and m >= 2, got d={d}, m={m}")
    if m**d > node_cap:
        raise ResourceLimitError(f"uniform grid {m}^{d} exceeds node cap {node_cap}")
    x = np.linspace(-1.0, 1.0, m)
    h = 2.0 / (m - 1)
    w = np.full(m, h)
    w[0] = w[-1] = h / 2
    grids = np.meshgrid(*([x] * d), indexing="ij")
    wgrids = np.meshgrid(*([w] * d), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.ones(nodes.shape[0])
    for g in wgrids:
        weights = weights * g.ravel()
    return QuadratureRule(d, m, nodes, weights, kind="uniform")


def integrate(rule: QuadratureRule, f: Callable[[np.ndarray], np.ndarray], vectorized: bool = True) -> float:
    """``sum_i f(x_i) w_i``.

    With ``vectorized=True`` ``f`` receives the whole ``(N, d)`` node array and
    must return ``N`` values; otherwise it is called once per node.
    """
    if vectorized:
        vals = np.asarray(f(rule.nodes), dtype=float).reshape(-1)
    else:
        vals = np.array([float(f(x)) for x in rule.nodes])
    if vals.size != rule.num_nodes:
        raise ValueError(f"integrand returned {vals.size} values for {rule.num_nodes} nodes")
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        k = int(bad[0])
        raise EvaluationError(f"integrand is {vals[k]} at node {k} ({rule.nodes[k].tolist()})", k, rule.nodes[k])
    return float(vals @ rule.weights)


def make_rule(kind: str, d: int, level: int | None = None, m: int | None = None) -> QuadratureRule:
    if kind == "sparse":
        if level is None:
            raise ValueError("sparse rule needs a level")
        return smolyak_sparse_grid(d, level)
    if kind == "uniform":
        if m is None:
            raise ValueError("uniform rule needs nodes per axis")
        return uniform_grid(d, m)
    raise ValueError(f"unknown quadrature kind {kind!r}")
