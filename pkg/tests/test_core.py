import json
import math

import numpy as np
import pytest

from ebemaxent.basis import BasisSet, enumerate_multi_indices
from ebemaxent.core import (
    MomentProblem,
    eval_jacobian,
    eval_residuals,
    jv_derivative,
    moment_error,
    normalize,
    solve_linear,
)
from ebemaxent.exceptions import ExponentOverflow, SingularMatrix
from ebemaxent.quadrature import clenshaw_curtis_1d, smolyak_sparse_grid, uniform_grid
from ebemaxent.rescale import AffineRescale

from conftest import density_moments


def fd_jacobian(p, lam, active, h=1e-6):
    cols = []
    for k in active:
        e = np.zeros_like(lam)
        e[k] = h
        cols.append((eval_residuals(p, lam + e, active).residuals - eval_residuals(p, lam - e, active).residuals) / (2 * h))
    return np.array(cols).T


def test_example1_residual_vanishes_at_solution(example1):
    F = eval_residuals(example1, np.ones(3)).residuals
    assert np.linalg.norm(F) <= 1e-12


def test_single_constraint_residual():
    p = MomentProblem(BasisSet.from_indices([(1,)]), np.array([0.0]), clenshaw_curtis_1d(7))
    assert eval_residuals(p, [1.0]).residuals[0] == pytest.approx(2 / math.e, abs=1e-10)


def test_inactive_entries_enter_exponent(example1):
    lam = np.array([0.2, 0.0, 0.0])
    a = eval_residuals(example1, lam, [0]).residuals
    lam[2] = 0.5
    b = eval_residuals(example1, lam, [0]).residuals
    assert a.shape == (1,) and a[0] != b[0]


def test_jacobian_at_zero():
    p = MomentProblem(BasisSet.from_indices([(1,)]), np.array([0.0]), clenshaw_curtis_1d(7))
    assert eval_jacobian(p, [0.0])[0, 0] == pytest.approx(2 / 3, abs=1e-13)


def test_jacobian_matches_finite_differences(example1):
    lam = np.array([0.4, -0.3, 0.8])
    J = eval_jacobian(example1, lam)
    assert np.allclose(J, fd_jacobian(example1, lam, [0, 1, 2]), rtol=1e-6, atol=1e-9)


def test_jacobian_rectangular_block(example1):
    lam = np.array([0.4, -0.3, 0.8])
    full = eval_jacobian(example1, lam)
    assert np.allclose(eval_jacobian(example1, lam, [0, 2], [1, 2, 0]), full[np.ix_([0, 2], [1, 2, 0])])


def test_example1_jacobian_nonsingular(example1):
    assert np.isfinite(np.linalg.cond(eval_jacobian(example1, np.ones(3))))
    assert np.linalg.cond(eval_jacobian(example1, np.ones(3))) < 1e6


def test_jv_derivative_matches_finite_differences():
    b = enumerate_multi_indices(2, 3)
    rule = smolyak_sparse_grid(2, 5)
    rng = np.random.default_rng(5)
    p = MomentProblem(b, density_moments(b, rule, rng.uniform(-0.5, 0.5, len(b))), rule)
    lam = rng.uniform(-0.5, 0.5, len(b))
    rows, cols, wrt = [0, 3, 4], [0, 3, 4], [0, 3, 4, 6]
    v = rng.normal(size=3)
    D = jv_derivative(p, lam, rows, cols, v, wrt)
    h = 1e-6
    for c, k in enumerate(wrt):
        e = np.zeros_like(lam)
        e[k] = h
        fd = (eval_jacobian(p, lam + e, rows, cols) @ v - eval_jacobian(p, lam - e, rows, cols) @ v) / (2 * h)
        assert np.allclose(D[:, c], fd, rtol=1e-6, atol=1e-8)


def test_overflow_reports_node():
    p = MomentProblem(BasisSet.from_indices([(1,)]), np.array([0.5]), clenshaw_curtis_1d(3))
    with pytest.raises(ExponentOverflow) as info:
        eval_residuals(p, [800.0])
    assert info.value.node.tolist() == [1.0]
    assert info.value.exponent == pytest.approx(800.0)


def test_normalize_zero():
    for d in (1, 2, 3):
        b = enumerate_multi_indices(d, 2)
        f = np.array([0.0 if i.total_order % 2 else 1 / 3 for i in b.indices])
        f = np.where([i.is_pure_power() or i.total_order == 1 for i in b.indices], f, 0.0)
        Z, rho = normalize(MomentProblem(b, f, smolyak_sparse_grid(d, 3)), np.zeros(len(b)))
        assert Z == pytest.approx(2.0**d, rel=1e-13)
        assert rho(np.zeros((1, d)))[0] == pytest.approx(2.0**-d)


def test_example1_normalization_against_fine_rule(example1):
    Z, rho = normalize(example1, np.ones(3))
    fine = clenshaw_curtis_1d(20)
    x = fine.nodes[:, 0]
    assert abs(Z - np.sum(fine.weights * np.exp(x + x**2 + x**3))) <= 1e-8
    assert rho(np.array([[0.0]]))[0] == pytest.approx(1 / Z)


def test_moment_error_examples(example1):
    assert moment_error(example1, np.ones(3)) <= 1e-10
    uniform = np.array([0.0, 1 / 3, 0.0])
    assert moment_error(example1, np.zeros(3)) == pytest.approx(np.linalg.norm(uniform - example1.targets), rel=1e-12)
    p = MomentProblem(example1.basis, uniform, example1.rule)
    assert moment_error(p, np.zeros(3)) <= 1e-14


def test_solve_linear():
    b = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(solve_linear(np.eye(3), b), b)
    with pytest.raises(SingularMatrix) as info:
        solve_linear(np.diag([1.0, 1e-16]), [1.0, 1.0])
    assert info.value.indicator < 1e-12
    rng = np.random.default_rng(0)
    A = rng.normal(size=(10, 10)) + 10 * np.eye(10)
    b = rng.normal(size=10)
    assert np.linalg.norm(A @ solve_linear(A, b) - b) <= 1e-10 * np.linalg.norm(b)
    with pytest.raises(ValueError):
        solve_linear(np.ones((2, 3)), [1.0, 1.0])


def test_problem_validation():
    b = enumerate_multi_indices(1, 2)
    rule = clenshaw_curtis_1d(5)
    with pytest.raises(ValueError):
        MomentProblem(b, np.array([0.0, -0.1]), rule)
    with pytest.raises(ValueError):
        MomentProblem(b, np.array([0.0]), rule)
    with pytest.raises(ValueError):
        MomentProblem(b, np.array([np.nan, 0.3]), rule)
    with pytest.raises(ValueError):
        MomentProblem(b, np.array([0.0, 0.3]), smolyak_sparse_grid(2, 3))


def test_problem_json_roundtrip():
    b = enumerate_multi_indices(2, 2)
    p = MomentProblem(b, np.array([0.1, 0.0, 0.3, 0.01, 0.4]), uniform_grid(2, 9), AffineRescale([0, 1], [2, 5]))
    data = json.loads(json.dumps(p.to_dict()))
    assert set(data) == {"basis", "targets", "quad", "rescale"}
    assert data["quad"] == {"kind": "uniform", "dimension": 2, "m": 9}
    back = MomentProblem.from_dict(data)
    assert back.basis.indices == b.indices
    assert np.array_equal(back.targets, p.targets)
    assert np.array_equal(back.rule.weights, p.rule.weights)
    assert np.array_equal(back.rescale.lo, p.rescale.lo)


def test_reordered_problem_keeps_targets_aligned(example1):
    from ebemaxent.basis import BasisSet

    rev = BasisSet(1, 3, tuple(reversed(example1.basis.indices)))
    q = example1.reordered(rev)
    assert np.array_equal(q.targets, example1.targets[::-1])
    assert q.basis.permutation == (2, 1, 0)
    assert np.allclose(eval_residuals(q, [0.3, 0.2, 0.1]).residuals,
                       eval_residuals(example1, [0.1, 0.2, 0.3]).residuals[::-1])
