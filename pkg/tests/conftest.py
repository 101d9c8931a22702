import numpy as np
import pytest

from ebemaxent.basis import BasisSet, enumerate_multi_indices, eval_basis_matrix
from ebemaxent.core import MomentProblem
from ebemaxent.quadrature import smolyak_sparse_grid


def density_moments(basis: BasisSet, rule, lam) -> np.ndarray:
    """Normalized moments of exp(sum lam_j c_j) computed directly on ``rule`` (test oracle)."""
    B = eval_basis_matrix(basis, rule.nodes)
    s = B @ np.asarray(lam, dtype=float)
    q = rule.weights * np.exp(s - s.max())
    return B.T @ q / q.sum()


def problem_from_lambda(basis, rule, lam, target_rule=None) -> MomentProblem:
    f = density_moments(basis, target_rule or rule, lam)
    return MomentProblem(basis, f, rule)


@pytest.fixture(scope="session")
def example1():
    b = enumerate_multi_indices(1, 3)
    rule = smolyak_sparse_grid(1, 7)
    return problem_from_lambda(b, rule, np.ones(3))


@pytest.fixture(scope="session")
def example2_lambda():
    return np.array([2.0, 16.0, 24.0, 96.0, -256.0, -1024.0])


# d=3, p=4 multipliers on a 31^3 uniform grid: STRESS is sharply peaked (full Newton
# from zero overflows), GENTLE is a case both solvers handle.
STRESS_LAMBDA = {(2, 0, 0): -100, (0, 2, 0): -100, (0, 0, 2): -100,
                 (1, 0, 0): 40, (0, 1, 0): -30, (0, 0, 1): 20, (1, 1, 0): 50}
GENTLE_LAMBDA = {(4, 0, 0): -100, (0, 4, 0): -100, (0, 0, 4): -100, (2, 2, 0): -100,
                 (1, 0, 0): 5, (2, 0, 0): 10, (0, 2, 0): 10, (0, 0, 2): 10}


def lambda_from_map(basis, entries) -> np.ndarray:
    lam = np.zeros(len(basis))
    for k, idx in enumerate(basis.indices):
        lam[k] = entries.get(idx.exponents, 0.0)
    return lam


def d3_case(entries):
    from ebemaxent.quadrature import uniform_grid

    b = enumerate_multi_indices(3, 4)
    lam = lambda_from_map(b, entries)
    return problem_from_lambda(b, uniform_grid(3, 31), lam), lam


@pytest.fixture(scope="session")
def stress_case():
    return d3_case(STRESS_LAMBDA)


@pytest.fixture(scope="session")
def gentle_case():
    return d3_case(GENTLE_LAMBDA)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
