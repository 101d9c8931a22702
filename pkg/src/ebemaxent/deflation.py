"""Locating and stepping over singular points of a parameter-tracking path.

The tracked system is ``F(h, t) = 0`` with unknowns ``h`` (k values) and the
scalar parameter ``t``. Callables follow one convention throughout:

* ``residual(h, t) -> F`` with shape ``(k,)``
* ``jacobian(h, t) -> (J_h, J_t)`` with shapes ``(k, k)`` and ``(k,)``
* ``jv_jacobian(h, t, v) -> (d(J_h v)/dh, d(J_h v)/dt)``, optional
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import solve_linear
from .exceptions import EbeError, NoConvergence


@dataclass(frozen=True)
class FoldPoint:
    head: np.ndarray
    param: float
    null_vector: np.ndarray
    residual_norm: float
    iterations: int


def unit_random_vector(rng: np.random.Generator, k: int) -> np.ndarray:
    xi = rng.standard_normal(k)
    return xi / np.linalg.norm(xi)


def _fd_jv_jacobian(jacobian, h, t, v, step=1e-6):
    k = h.size
    dh = np.empty((k, k))
    for col in range(k):
        e = np.zeros(k)
        s = step * max(1.0, abs(h[col]))
        e[col] = s
        dh[:, col] = (jacobian(h + e, t)[0] @ v - jacobian(h - e, t)[0] @ v) / (2 * s)
    s = step * max(1.0, abs(t))
    dt = (jacobian(h, t + s)[0] @ v - jacobian(h, t - s)[0] @ v) / (2 * s)
    return dh, dt


def deflated_residual(residual, jacobian, h, t, v, xi) -> np.ndarray:
    """``G = [F; J_h v; xi.v - 1]``."""
    Jh, _ = jacobian(h, t)
    return np.concatenate([residual(h, t), Jh @ v, [xi @ v - 1.0]])


def deflate_bifurcation(
    residual: Callable,
    jacobian: Callable,
    head,
    param: float,
    xi,
    jv_jacobian: Callable | None = None,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> FoldPoint:
    """Solve the augmented system ``G(h, t, v) = 0`` for a singular point of ``J_h``.

    Starts from ``(head, param)`` with ``v`` the right singular vector of the
    smallest singular value, scaled so that ``xi . v = 1``.
    """
    h = np.array(head, dtype=float).reshape(-1)
    t = float(param)
    xi = np.asarray(xi, dtype=float).reshape(-1)
    k = h.size
    if xi.size != k:
        raise ValueError("xi must have one entry per head unknown")
    if jv_jacobian is None:
        jv_jacobian = lambda hh, tt, vv: _fd_jv_jacobian(jacobian, hh, tt, vv)  # noqa: E731

    Jh, _ = jacobian(h, t)
    v = np.linalg.svd(Jh)[2][-1]
    scale = xi @ v
    if abs(scale) < 1e-12:
        raise NoConvergence("random vector is orthogonal to the null-vector estimate")
    v = v / scale

    norm = np.inf
    for it in range(1, max_iter + 1):
        G = deflated_residual(residual, jacobian, h, t, v, xi)
        norm = float(np.linalg.norm(G))
        if not np.isfinite(norm):
            raise NoConvergence("deflated residual is not finite")
        if norm <= tol:
            return FoldPoint(h, t, v, norm, it - 1)
        Jh, Jt = jacobian(h, t)
        dJv_h, dJv_t = jv_jacobian(h, t, v)
        D = np.zeros((2 * k + 1, 2 * k + 1))
        D[:k, :k] = Jh
        D[:k, k] = Jt
        D[k : 2 * k, :k] = dJv_h
        D[k : 2 * k, k] = dJv_t
        D[k : 2 * k, k + 1 :] = Jh
        D[2 * k, k + 1 :] = xi
        try:
            step = solve_linear(D, -G)
        except EbeError as exc:
            raise NoConvergence(f"deflated Newton step failed: {exc}") from exc
        h = h + step[:k]
        t = t + step[k]
        v = v + step[k + 1 :]
    G = deflated_residual(residual, jacobian, h, t, v, xi)
    norm = float(np.linalg.norm(G))
    if norm <= tol:
        return FoldPoint(h, t, v, norm, max_iter)
    raise NoConvergence(f"deflated Newton did not reach {tol:g} in {max_iter} iterations (|G|={norm:.3e})")


def richardson_jump(star_head, star_param, last_head, last_param):
    """Reflect the last iterate through the singular point: ``2 x* - x_last``."""
    h = 2.0 * np.asarray(star_head, dtype=float) - np.asarray(last_head, dtype=float)
    return h, 2.0 * float(star_param) - float(last_param)


def correct_onto_path(residual, jacobian, head, param, tol: float = 1e-10, max_iter: int = 50):
    """Minimum-norm Newton on ``F(h, t) = 0`` in the joint ``(h, t)`` space.

    Past a fold the parameter value alone may admit no solution, so the
    correction is allowed to move ``t`` as well.
    """
    h = np.array(head, dtype=float).reshape(-1)
    t = float(param)
    k = h.size
    for _ in range(max_iter):
        F = residual(h, t)
        if not np.all(np.isfinite(F)):
            raise NoConvergence("residual is not finite")
        if np.linalg.norm(F) <= tol:
            return h, t
        Jh, Jt = jacobian(h, t)
        A = np.column_stack([Jh, Jt])
        try:
            y = solve_linear(A @ A.T, F)
        except EbeError as exc:
            raise NoConvergence(f"path correction failed: {exc}") from exc
        dz = -A.T @ y
        h = h + dz[:k]
        t = t + dz[k]
    if np.linalg.norm(residual(h, t)) <= tol:
        return h, t
    raise NoConvergence(f"path correction did not converge in {max_iter} iterations")
