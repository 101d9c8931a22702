import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ebemaxent.exceptions import EvaluationError, ResourceLimitError
from ebemaxent.quadrature import (
    QuadratureRule,
    cc_num_nodes,
    clenshaw_curtis_1d,
    integrate,
    make_rule,
    smolyak_sparse_grid,
    sparse_grid_size,
    uniform_grid,
)


def _cc_reference(level):
    """Clenshaw-Curtis weights from a dense solve of the Chebyshev moment system."""
    if level == 1:
        return np.array([0.0]), np.array([2.0])
    n = 2 ** (level - 1)
    x = np.cos(np.pi * np.arange(n + 1) / n)
    # weights from exactness on Chebyshev polynomials T_k, k = 0..n
    T = np.cos(np.outer(np.arange(n + 1), np.arccos(np.clip(x, -1, 1))))
    rhs = np.array([2.0 / (1 - k * k) if k % 2 == 0 else 0.0 for k in range(n + 1)])
    return x, np.linalg.solve(T, rhs)


@pytest.mark.parametrize("level, count", [(1, 1), (2, 3), (3, 5), (7, 65), (20, 524_289)])
def test_node_counts(level, count):
    assert cc_num_nodes(level) == count
    if level <= 7:
        assert clenshaw_curtis_1d(level).num_nodes == count


def test_level_20_rule_size():
    assert clenshaw_curtis_1d(20).num_nodes == 524_289


def test_level_one():
    r = clenshaw_curtis_1d(1)
    assert r.nodes.tolist() == [[0.0]] and r.weights.tolist() == [2.0]


def test_rejects_level_zero():
    with pytest.raises(ValueError):
        clenshaw_curtis_1d(0)


@pytest.mark.parametrize("level", [2, 3, 5, 7, 9])
def test_weights_match_independent_construction(level):
    x, w = _cc_reference(level)
    r = clenshaw_curtis_1d(level)
    order = np.argsort(x)
    assert np.allclose(r.nodes[:, 0], x[order], atol=1e-15)
    assert np.allclose(r.weights, w[order], atol=1e-13)


@pytest.mark.parametrize("level", range(1, 11))
def test_polynomial_exactness(level):
    r = clenshaw_curtis_1d(level)
    x = r.nodes[:, 0]
    for k in range(r.num_nodes):
        exact = 0.0 if k % 2 else 2.0 / (k + 1)
        assert abs(np.sum(r.weights * x**k) - exact) <= 1e-13


@pytest.mark.parametrize("level", range(1, 12))
def test_nested_bitwise(level):
    coarse = set(clenshaw_curtis_1d(level).nodes[:, 0].tolist())
    fine = set(clenshaw_curtis_1d(level + 1).nodes[:, 0].tolist())
    assert coarse <= fine


@pytest.mark.parametrize("level", [2, 5, 8])
def test_symmetry(level):
    r = clenshaw_curtis_1d(level)
    assert np.array_equal(r.nodes[:, 0], -r.nodes[::-1, 0])
    assert np.array_equal(r.weights, r.weights[::-1])
    x = r.nodes[:, 0]
    for k in (1, 3, 5, 7):
        assert abs(np.sum(r.weights * x**k)) <= 1e-14


def test_integrate_examples():
    r = clenshaw_curtis_1d(7)
    assert integrate(r, lambda x: np.ones(len(x))) == pytest.approx(2.0, abs=1e-14)
    assert abs(integrate(r, lambda x: x[:, 0] ** 2) - 2 / 3) <= 1e-12
    assert abs(integrate(r, lambda x: np.exp(x[:, 0])) - (math.e - 1 / math.e)) <= 1e-10


def test_integrate_scalar_mode():
    r = smolyak_sparse_grid(2, 3)
    assert integrate(r, lambda x: x[0] ** 2 * x[1] ** 2, vectorized=False) == pytest.approx(4 / 9, abs=1e-13)


def test_integrate_names_bad_node():
    r = clenshaw_curtis_1d(3)
    with pytest.raises(EvaluationError) as info, np.errstate(divide="ignore"):
        integrate(r, lambda x: 1.0 / x[:, 0])
    assert info.value.node_index == 2


@pytest.mark.parametrize("d, level, count", [(2, 11, 7169), (3, 8, 2561), (4, 8, 7537), (5, 8, 19313)])
def test_sparse_sizes(d, level, count):
    assert sparse_grid_size(d, level) == count
    if d <= 4:
        assert smolyak_sparse_grid(d, level).num_nodes == count


def test_sparse_reduces_to_1d():
    a, b = smolyak_sparse_grid(1, 7), clenshaw_curtis_1d(7)
    assert np.array_equal(a.nodes, b.nodes) and np.array_equal(a.weights, b.weights)


def _smolyak_reference(d, level):
    """Unmerged Smolyak combination, nodes rounded only for bookkeeping (brute force)."""
    top = level + d - 1
    acc = {}
    for idx in itertools.product(range(1, level + 1), repeat=d):
        s = sum(idx)
        if s > top or s < max(d, level):
            continue
        coef = (-1) ** (top - s) * math.comb(d - 1, top - s)
        rules = [_cc_reference(i) for i in idx]
        for combo in itertools.product(*[range(len(r[0])) for r in rules]):
            key = tuple(round(float(rules[k][0][c]), 12) + 0.0 for k, c in enumerate(combo))
            w = coef * math.prod(rules[k][1][c] for k, c in enumerate(combo))
            acc[key] = acc.get(key, 0.0) + w
    return acc


@pytest.mark.parametrize("d, level", [(2, 3), (2, 5), (3, 4)])
def test_sparse_matches_brute_force_union(d, level):
    ref = _smolyak_reference(d, level)
    r = smolyak_sparse_grid(d, level)
    assert r.num_nodes == len(ref)
    got = {tuple(round(float(v), 12) + 0.0 for v in x): w for x, w in zip(r.nodes, r.weights)}
    assert got.keys() == ref.keys()
    for k in ref:
        assert got[k] == pytest.approx(ref[k], abs=1e-12)


@pytest.mark.parametrize("d, level", [(2, 4), (3, 5), (4, 6)])
def test_sparse_weight_sum_and_low_degree_exactness(d, level):
    r = smolyak_sparse_grid(d, level)
    assert abs(r.weights.sum() - 2.0**d) <= 1e-12 * 2**d
    assert np.all(np.abs(r.nodes) <= 1.0)
    for e in itertools.product(range(4), repeat=d):
        if sum(e) > 3:
            continue
        exact = math.prod(0.0 if k % 2 else 2.0 / (k + 1) for k in e)
        assert abs(integrate(r, lambda x: np.prod(x ** np.array(e), axis=1)) - exact) <= 1e-12


def test_sparse_resource_guard():
    with pytest.raises(ResourceLimitError):
        smolyak_sparse_grid(5, 8, node_cap=1000)


def test_uniform_grid_examples():
    assert uniform_grid(2, 85).num_nodes == 7225
    r = uniform_grid(1, 2)
    assert r.nodes[:, 0].tolist() == [-1.0, 1.0] and r.weights.tolist() == [1.0, 1.0]
    r = uniform_grid(1, 101)
    assert abs(integrate(r, lambda x: x[:, 0] ** 2) / 2 - 1 / 3) <= 1e-3


def test_uniform_guard_and_validation():
    with pytest.raises(ResourceLimitError):
        uniform_grid(3, 1000)
    with pytest.raises(ValueError):
        uniform_grid(2, 1)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 4), st.integers(2, 12))
def test_uniform_weight_sum(d, m):
    r = uniform_grid(d, m)
    assert abs(r.weights.sum() - 2.0**d) <= 1e-12 * 2**d


def test_recipe_roundtrip_and_csv(tmp_path):
    for rule in (smolyak_sparse_grid(2, 4), uniform_grid(2, 5)):
        back = QuadratureRule.from_dict(rule.to_dict())
        assert np.array_equal(back.nodes, rule.nodes) and np.array_equal(back.weights, rule.weights)
    rule = clenshaw_curtis_1d(3)
    rule.to_csv(tmp_path / "r.csv")
    data = np.loadtxt(tmp_path / "r.csv", delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 0], rule.nodes[:, 0]) and np.array_equal(data[:, 1], rule.weights)
    assert make_rule("uniform", 1, m=3).num_nodes == 3
    with pytest.raises(ValueError):
        make_rule("gauss", 1, level=3)
