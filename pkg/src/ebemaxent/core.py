"""Moment problem definition and quadrature evaluation of the residual system.

For Lagrange multipliers ``lam`` the residuals are

    F_j(lam) = sum_i (c_j(x_i) - f_j) exp(sum_k lam_k c_k(x_i)) w_i

i.e. the unnormalized form; ``F = 0`` is equivalent to the normalized
density reproducing every target moment.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg

from . import _kernels
from .basis import BasisSet, eval_basis_matrix
from .exceptions import ExponentOverflow, SingularMatrix
from .quadrature import QuadratureRule
from .rescale import AffineRescale

EXPONENT_LIMIT = 700.0
SINGULAR_PIVOT_RATIO = 1e-12


@dataclass(frozen=True, eq=False)
class MomentProblem:
    basis: BasisSet
    targets: np.ndarray
    rule: QuadratureRule
    rescale: AffineRescale | None = None

    def __post_init__(self):
        f = np.array(self.targets, dtype=float).reshape(-1)
        if f.size != len(self.basis):
            raise ValueError(f"{f.size} targets for {len(self.basis)} constraints")
        if not np.all(np.isfinite(f)):
            raise ValueError("targets must be finite")
        if self.rule.dimension != self.basis.dimension:
            raise ValueError("quadrature and basis dimensions differ")
        if self.rescale is not None and self.rescale.dimension != self.basis.dimension:
            raise ValueError("rescale and basis dimensions differ")
        for k, idx in enumerate(self.basis.indices):
            if idx.is_pure_power() and idx.total_order % 2 == 0 and f[k] <= 0:
                raise ValueError(f"even-power moment {idx} must be positive, got {f[k]}")
        f.setflags(write=False)
        object.__setattr__(self, "targets", f)

    @property
    def n(self) -> int:
        return len(self.basis)

    @property
    def dimension(self) -> int:
        return self.basis.dimension

    @cached_property
    def basis_matrix_t(self) -> np.ndarray:
        """Transposed basis matrix ``(n, N)``, built once per problem."""
        bt = np.ascontiguousarray(eval_basis_matrix(self.basis, self.rule.nodes).T)
        bt.setflags(write=False)
        return bt

    @cached_property
    def _exp_cache(self) -> dict:
        return {}

    def exp_weights(self, lam: np.ndarray) -> np.ndarray:
        """``exp(sum_k lam_k c_k(x_i))`` at every node (memoized on the last ``lam``)."""
        lam = np.ascontiguousarray(lam, dtype=float)
        key = lam.tobytes()
        cache = self._exp_cache
        if cache.get("key") == key:
            return cache["value"]
        nz = np.flatnonzero(lam).astype(np.intp)
        e, imax, smax = _kernels.exp_weights(self.basis_matrix_t, lam, nz, EXPONENT_LIMIT)
        if e is None:
            raise ExponentOverflow(imax, self.rule.nodes[imax], smax, EXPONENT_LIMIT)
        e.setflags(write=False)
        cache["key"], cache["value"] = key, e
        return e

    def reordered(self, basis: BasisSet) -> "MomentProblem":
        """Same problem with constraints listed in the order of ``basis``."""
        position = {idx: k for k, idx in enumerate(self.basis.indices)}
        try:
            order = [position[idx] for idx in basis.indices]
        except KeyError as exc:
            raise ValueError(f"multi-index {exc.args[0]} not in problem basis") from None
        if len(order) != self.n:
            raise ValueError("reordered basis must contain every constraint exactly once")
        perm = tuple(self.basis.permutation[k] for k in order)
        b = BasisSet(basis.dimension, basis.max_order, basis.indices, perm)
        return MomentProblem(b, self.targets[order], self.rule, self.rescale)

    def to_dict(self) -> dict:
        out = {
            "basis": self.basis.to_dict(),
            "targets": [float(v) for v in self.targets],
            "quad": self.rule.to_dict(),
        }
        if self.rescale is not None:
            out["rescale"] = self.rescale.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "MomentProblem":
        basis = BasisSet.from_dict(data["basis"])
        rule = QuadratureRule.from_dict(data["quad"], dimension=basis.dimension)
        rescale = AffineRescale.from_dict(data["rescale"]) if data.get("rescale") else None
        return cls(basis, np.array(data["targets"], dtype=float), rule, rescale)


@dataclass(frozen=True)
class ResidualEvaluation:
    residuals: np.ndarray
    exp_weights: np.ndarray


def _as_lambda(p: MomentProblem, lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if lam.size != p.n:
        raise ValueError(f"lambda has {lam.size} entries, problem has {p.n}")
    if not np.all(np.isfinite(lam)):
        raise ValueError("lambda must be finite")
    return lam


def _as_index(p: MomentProblem, active) -> np.ndarray:
    if active is None:
        return np.arange(p.n, dtype=np.intp)
    idx = np.asarray(active, dtype=np.intp).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= p.n):
        raise IndexError(f"active index out of range for n={p.n}")
    return idx


def _weighted(p: MomentProblem, lam) -> tuple[np.ndarray, np.ndarray]:
    e = p.exp_weights(lam)
    return e, e * p.rule.weights


def eval_residuals(p: MomentProblem, lam, active: Sequence[int] | None = None) -> ResidualEvaluation:
    """Residuals ``F_j`` for ``j`` in ``active``; inactive entries of ``lam`` still enter the exponent."""
    lam = _as_lambda(p, lam)
    idx = _as_index(p, active)
    e, q = _weighted(p, lam)
    m = _kernels.moments(p.basis_matrix_t, q, idx)
    F = m - p.targets[idx] * q.sum()
    return ResidualEvaluation(F, e)


def eval_jacobian(p: MomentProblem, lam, active: Sequence[int] | None = None, cols: Sequence[int] | None = None) -> np.ndarray:
    """``dF_j/dlam_k`` for rows ``active`` and columns ``cols`` (default: same as rows)."""
    lam = _as_lambda(p, lam)
    rows = _as_index(p, active)
    cols = rows if cols is None else _as_index(p, cols)
    _, q = _weighted(p, lam)
    Bt = p.basis_matrix_t
    G = _kernels.gram(Bt, q, rows, cols)
    m = _kernels.moments(Bt, q, cols)
    return G - np.outer(p.targets[rows], m)


def jv_derivative(p: MomentProblem, lam, rows, cols, v, wrt) -> np.ndarray:
    """Derivative of ``J[rows, cols] @ v`` with respect to ``lam[wrt]``.

    Uses ``d J_jk / d lam_l = sum_i (c_j - f_j) c_k c_l q_i``, so the product
    with ``v`` is a Jacobian-shaped reduction with node weights ``q * (B v)``.
    """
    lam = _as_lambda(p, lam)
    rows, cols, wrt = _as_index(p, rows), _as_index(p, cols), _as_index(p, wrt)
    _, q = _weighted(p, lam)
    Bt = p.basis_matrix_t
    qv = q * (np.asarray(v, dtype=float) @ Bt[cols])
    G = _kernels.gram(Bt, qv, rows, wrt)
    m = _kernels.moments(Bt, qv, wrt)
    return G - np.outer(p.targets[rows], m)


class Density:
    """Normalized density ``exp(sum lam_k c_k(x)) / Z`` on the hypercube."""

    def __init__(self, basis: BasisSet, lam, Z: float, rescale: AffineRescale | None = None):
        self.basis = basis
        self.lam = np.asarray(lam, dtype=float)
        self.Z = float(Z)
        self.rescale = rescale

    def log_unnormalized(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return eval_basis_matrix(self.basis, x) @ self.lam

    def __call__(self, x) -> np.ndarray:
        return np.exp(self.log_unnormalized(x)) / self.Z

    def original(self, y) -> np.ndarray:
        """Density in the data's original coordinates (includes the affine Jacobian)."""
        if self.rescale is None:
            return self(y)
        x = self.rescale.to_unit(np.atleast_2d(y))
        return self(x) * self.rescale.jacobian()


def normalize(p: MomentProblem, lam) -> tuple[float, Density]:
    lam = _as_lambda(p, lam)
    _, q = _weighted(p, lam)
    Z = float(q.sum())
    return Z, Density(p.basis, lam.copy(), Z, p.rescale)


def moment_error(p: MomentProblem, lam, active: Sequence[int] | None = None) -> float:
    """l2 norm of ``E_rho[c_j] - f_j`` over ``active`` for the normalized density."""
    lam = _as_lambda(p, lam)
    idx = _as_index(p, active)
    _, q = _weighted(p, lam)
    Z = q.sum()
    m = _kernels.moments(p.basis_matrix_t, q, idx) / Z
    return float(np.linalg.norm(m - p.targets[idx]))


def pivot_ratio(lu: np.ndarray) -> float:
    d = np.abs(np.diag(lu))
    top = d.max() if d.size else 0.0
    return float(d.min() / top) if top > 0 else 0.0


def solve_linear(A, b, threshold: float = SINGULAR_PIVOT_RATIO) -> np.ndarray:
    """Solve ``A x = b`` by partially pivoted LU.

    Raises :class:`SingularMatrix` when ``min|U_kk| / max|U_kk|`` is below
    ``threshold``; the ratio is available as ``exc.indicator``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got shape {A.shape}")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise ValueError("A and b must be finite")
    if A.shape[0] == 0:
        return np.zeros_like(b)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    ratio = pivot_ratio(lu)
    if not ratio >= threshold:
        raise SingularMatrix(ratio, threshold)
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)
