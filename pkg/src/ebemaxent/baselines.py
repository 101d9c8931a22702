"""Full-system Newton on ``F(lam) = 0`` as a reference solver."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .core import MomentProblem, eval_jacobian, eval_residuals, moment_error, normalize, solve_linear
from .ebe import SolveReport
from .exceptions import Diverged, ExponentOverflow, SingularMatrix


@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-10
    max_iters: int = 200
    damping: float = 0.5
    max_halvings: int = 30

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 < self.damping < 1:
            raise ValueError("damping factor must lie in (0, 1)")


def newton_full_solve(p: MomentProblem, cfg: NewtonConfig | None = None, start=None, damped: bool = True) -> SolveReport:
    """Newton on all constraints at once.

    With ``damped=True`` a step is accepted only once backtracking has found
    a point where ``||F||`` decreased. The undamped variant takes every full
    step as is. Raises :class:`Diverged` on failure.
    """
    cfg = cfg or NewtonConfig()
    t0 = time.perf_counter()
    lam = np.zeros(p.n) if start is None else np.array(start, dtype=float).reshape(-1)
    if lam.size != p.n or not np.all(np.isfinite(lam)):
        raise ValueError("start must be a finite vector with one entry per constraint")

    def residual_norm(x):
        F = eval_residuals(p, x).residuals
        return F, float(np.max(np.abs(F)))

    try:
        F, norm = residual_norm(lam)
    except ExponentOverflow as exc:
        raise Diverged(f"start point overflows: {exc}", 0, lam, float("inf")) from exc
    halvings_total = 0
    it = 0
    while norm >= cfg.tol:
        if it >= cfg.max_iters:
            raise Diverged(f"no convergence in {cfg.max_iters} iterations", it, lam, norm)
        it += 1
        try:
            step = solve_linear(eval_jacobian(p, lam), F)
        except SingularMatrix as exc:
            raise Diverged(f"singular Jacobian (pivot ratio {exc.indicator:.2e})", it, lam, norm) from exc
        if not damped:
            try:
                lam = lam - step
                F, norm = residual_norm(lam)
            except (ExponentOverflow, ValueError) as exc:
                raise Diverged(f"iterate left the representable range: {exc}", it, lam, float("inf")) from exc
            continue
        t = 1.0
        for _ in range(cfg.max_halvings + 1):
            trial = lam - t * step
            try:
                F_t, n_t = residual_norm(trial)
            except (ExponentOverflow, ValueError):
                n_t = float("inf")
            if n_t < norm:
                lam, F, norm = trial, F_t, n_t
                break
            t *= cfg.damping
            halvings_total += 1
        else:
            raise Diverged("residual did not decrease across the damping ladder", it, lam, norm)

    Z, _ = normalize(p, lam)
    return SolveReport(
        method="newton-damped" if damped else "newton",
        lam=lam,
        Z=Z,
        retained=list(range(p.n)),
        discarded=[],
        final_moment_error=moment_error(p, lam),
        residuals=F,
        iterations={"newton": it, "halvings": halvings_total},
        wall_time=time.perf_counter() - t0,
        basis=p.basis,
    )
