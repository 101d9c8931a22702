"""Equation-by-equation (EBE) solver.

Constraints are activated one at a time. At outer step ``i`` the multiplier
of the new constraint is driven by scalar Newton on its own residual while
the previously solved multipliers (the *head*) are carried along the curve
on which their residuals stay zero, by predictor-corrector continuation in
the new multiplier. Multipliers of constraints not yet reached keep their
initial values.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .basis import BasisSet, reorder_for_convexity
from .core import (
    MomentProblem,
    eval_jacobian,
    eval_residuals,
    jv_derivative,
    moment_error,
    normalize,
    solve_linear,
)
from .deflation import correct_onto_path, deflate_bifurcation, richardson_jump, unit_random_vector
from .exceptions import EbeError, ExponentOverflow, NoConvergence, SingularMatrix, ZeroDerivative

log = logging.getLogger(__name__)

PENDING, SOLVED, DISCARDED = "pending", "solved", "discarded"

_ROUNDING_FACTOR = 100.0
_TRACKING_FAILURES = (NoConvergence, SingularMatrix, ExponentOverflow, ZeroDerivative)


@dataclass(frozen=True)
class EbeConfig:
    tol_newton: float = 1e-1
    tol_predictor: float = 1e-10
    lambda_min: float = 1e-8
    max_inner_iters: int = 200
    max_newton_iters: int = 50
    deflation_enabled: bool = True
    initial_alpha: tuple[float, ...] | None = None
    order_mode: str = "convexity"
    seed: int = 0
    tol_floor: float = 1e-15
    max_deflation_attempts: int = 3

    def __post_init__(self):
        if not (self.tol_newton > self.tol_predictor > 0):
            raise ValueError("need tol_newton > tol_predictor > 0")
        if not self.lambda_min > 0:
            raise ValueError("lambda_min must be positive")
        if self.order_mode not in ("canonical", "convexity", "user"):
            raise ValueError(f"unknown order mode {self.order_mode!r}")
        if self.max_inner_iters < 1 or self.max_newton_iters < 1:
            raise ValueError("iteration caps must be positive")
        if self.initial_alpha is not None:
            object.__setattr__(self, "initial_alpha", tuple(float(a) for a in self.initial_alpha))


@dataclass(frozen=True)
class TraceRecord:
    step: int  # outer index i, 1-based
    m: int  # inner iteration
    constraint: int  # position in the caller's ordering
    lam: tuple[float, ...]  # snapshot in the caller's ordering
    residual: float  # |F_i|
    tolerance: float
    event: str = "newton"


@dataclass
class SolverState:
    lam: np.ndarray
    status: list[str]
    outer_index: int = 0
    trace: list[TraceRecord] = field(default_factory=list)
    reasons: dict[int, str] = field(default_factory=dict)
    solved_residual: dict[int, float] = field(default_factory=dict)
    counters: dict[str, int] = field(
        default_factory=lambda: {
            "scalar_newton": 0,
            "inner": 0,
            "predictor": 0,
            "corrector": 0,
            "halvings": 0,
            "deflations": 0,
            "jumps": 0,
            "tolerance_reductions": 0,
            "enlarged_newton": 0,
        }
    )

    @property
    def solved(self) -> list[int]:
        return [k for k, s in enumerate(self.status) if s == SOLVED]


@dataclass
class SolveReport:
    """Result of a solve, with everything indexed in the caller's constraint order."""

    method: str
    lam: np.ndarray
    Z: float
    retained: list[int]
    discarded: list[dict]
    final_moment_error: float
    residuals: np.ndarray
    iterations: dict
    wall_time: float
    basis: BasisSet
    trace: list[TraceRecord] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def all_retained(self) -> bool:
        return not self.discarded

    def to_dict(self, include_timing: bool = False, include_trace: bool = False) -> dict:
        out = {
            "method": self.method,
            "lambda": [float(v) for v in self.lam],
            "Z": float(self.Z),
            "retained": list(self.retained),
            "discarded": list(self.discarded),
            "final_moment_error": float(self.final_moment_error),
            "residuals": [float(v) for v in self.residuals],
            "iterations": dict(self.iterations),
            "basis": self.basis.to_dict(),
            "diagnostics": self.diagnostics,
        }
        if include_timing:
            out["wall_time"] = self.wall_time
        if include_trace:
            out["trace"] = [asdict(r) for r in self.trace]
        return out


def write_trace_jsonl(trace: Sequence[TraceRecord], path) -> None:
    with open(path, "w") as fh:
        for rec in trace:
            fh.write(json.dumps(asdict(rec)) + "\n")


# --- building blocks -------------------------------------------------------


def _head_residual(p, lam, head):
    return eval_residuals(p, lam, head).residuals


def scalar_newton_step(p: MomentProblem, lam, i: int, tol: float, max_iters: int = 50) -> tuple[float, int]:
    """Newton on ``F_i`` in ``lam[i]`` alone, every other multiplier fixed.

    Iterates until ``|F_i| < tol`` and returns ``(lam_i, iterations)``.
    ``F_i`` has the sign of ``E[c_i] - f_i``, which increases with
    ``lam[i]``, so every evaluation narrows a bracket around the root. A
    Newton step that leaves the bracket or overflows the exponent is
    replaced by bisection, or by step doubling while one side is open.
    Far out in an exponential tail Newton on ``F_i`` creeps in unit steps;
    when a step fails to cut ``|F_i|`` tenfold the next one is taken on the
    normalized residual ``F_i / Z`` instead, which has the same root.
    """
    lam = np.array(lam, dtype=float)
    ev = eval_residuals(p, lam, [i])
    Fi = ev.residuals[0]
    lo, hi = -math.inf, math.inf
    reach = 1.0
    prev_F = None
    for it in range(max_iters):
        if abs(Fi) < tol:
            return float(lam[i]), it
        x = lam[i]
        if Fi < 0:
            lo = x
        else:
            hi = x
        d = eval_jacobian(p, lam, [i])[0, 0]
        if abs(d) < 1e-14:
            raise ZeroDerivative(f"diagonal derivative {d:.3e} at lam_i = {x:.6g}")
        if prev_F is not None and (Fi > 0) == (prev_F > 0) and abs(Fi) > 0.1 * abs(prev_F):
            Z = float(ev.exp_weights @ p.rule.weights)
            d = d - Fi * (Fi / Z + p.targets[i])
        target = x - Fi / d
        if not lo < target < hi:
            if math.isfinite(lo) and math.isfinite(hi):
                target = 0.5 * (lo + hi)
            else:
                reach = max(2.0 * reach, abs(target - x)) if d > 0 else 2.0 * reach
                target = x + (reach if Fi < 0 else -reach)
        Fi_old = Fi
        for _ in range(60):
            trial = lam.copy()
            trial[i] = target
            try:
                ev = eval_residuals(p, trial, [i])
                Fi = ev.residuals[0]
                break
            except ExponentOverflow:
                # treat the overflowing side as beyond the root
                if target > x:
                    hi = min(hi, target)
                else:
                    lo = max(lo, target)
                target = 0.5 * (x + target)
                reach = abs(target - x)
        else:
            raise NoConvergence("every step length overflows the exponent")
        prev_F = Fi_old
        lam = trial
        if hi - lo < 4 * np.finfo(float).eps * max(1.0, abs(lam[i])):
            break
    if abs(Fi) < tol:
        return float(lam[i]), max_iters
    raise NoConvergence(f"stalled at |F_i|={abs(Fi):.3e} > {tol:g}")


def predictor_step(p: MomentProblem, lam, head: Sequence[int], i: int, new_lam_i: float) -> np.ndarray:
    """Tangent prediction of the head after moving ``lam[i]`` to ``new_lam_i``.

    Returns the full multiplier vector with the predicted head and the new
    ``lam[i]``.
    """
    lam = np.array(lam, dtype=float)
    head = list(head)
    dt = float(new_lam_i) - lam[i]
    out = lam.copy()
    out[i] = new_lam_i
    if not head or dt == 0.0:
        return out
    J = eval_jacobian(p, lam, head, head + [i])
    out[head] = lam[head] - solve_linear(J[:, :-1], J[:, -1] * dt)
    return out


def corrector_step(p: MomentProblem, lam, head: Sequence[int], tol: float, max_iters: int = 50) -> tuple[np.ndarray, int]:
    """Newton on the head residuals with the new multiplier held fixed.

    A prediction already within ``tol`` is returned unchanged.
    """
    lam = np.array(lam, dtype=float)
    head = list(head)
    if not head:
        return lam, 0
    for it in range(max_iters + 1):
        ev = eval_residuals(p, lam, head)
        F = ev.residuals
        # residuals carry the scale of Z, so rounding caps the reachable accuracy
        floor = _ROUNDING_FACTOR * np.finfo(float).eps * float(ev.exp_weights @ np.abs(p.rule.weights))
        if np.linalg.norm(F) < max(tol, floor):
            return lam, it
        if it == max_iters:
            break
        J = eval_jacobian(p, lam, head)
        lam[head] = lam[head] - solve_linear(J, F)
    raise NoConvergence(f"corrector did not reach {tol:g} in {max_iters} iterations (|F|={np.linalg.norm(F):.3e})")


def enlarged_newton(p: MomentProblem, lam, active: Sequence[int], tol: float, max_iters: int = 50):
    """Plain Newton on the active residuals from the homotopy iterate.

    Returns ``(lam, max|F|, iterations)``; on any breakdown the input point
    comes back with an infinite residual so the caller keeps refining.
    """
    lam0 = np.array(lam, dtype=float)
    x = lam0.copy()
    active = list(active)
    for it in range(max_iters + 1):
        try:
            F = eval_residuals(p, x, active).residuals
            worst = float(np.max(np.abs(F)))
            if worst < tol:
                return x, worst, it
            if it == max_iters:
                break
            x[active] = x[active] - solve_linear(eval_jacobian(p, x, active), F)
        except (SingularMatrix, ExponentOverflow, ValueError):
            break
    return lam0, float("inf"), it


@dataclass
class TrackOutcome:
    lam: np.ndarray
    discarded: bool = False
    reason: str = ""
    substeps: int = 0
    halvings: int = 0
    jumped: bool = False


def _path_callables(p, lam, head, i):
    base = np.array(lam, dtype=float)
    head = list(head)

    def full(h, t):
        x = base.copy()
        x[head] = h
        x[i] = t
        return x

    def residual(h, t):
        return _head_residual(p, full(h, t), head)

    def jacobian(h, t):
        J = eval_jacobian(p, full(h, t), head, head + [i])
        return J[:, :-1], J[:, -1]

    def jv_jacobian(h, t, v):
        D = jv_derivative(p, full(h, t), head, head, v, head + [i])
        return D[:, :-1], D[:, -1]

    return full, residual, jacobian, jv_jacobian


def _try_deflation(p, cur, attempted_lam_i, head, i, cfg, rng, state):
    """Locate a singular point between ``cur`` and the failed target and jump over it."""
    full, residual, jacobian, jv_jacobian = _path_callables(p, cur, head, i)
    h0, t0 = cur[head], float(cur[i])
    lo, hi = sorted((t0, float(attempted_lam_i)))
    reach = max(hi - lo, cfg.lambda_min)
    for _ in range(cfg.max_deflation_attempts):
        state.counters["deflations"] += 1
        xi = unit_random_vector(rng, len(head))
        try:
            fold = deflate_bifurcation(residual, jacobian, h0, t0, xi, jv_jacobian, tol=cfg.tol_predictor,
                                       max_iter=cfg.max_newton_iters)
        except (NoConvergence, ExponentOverflow):
            continue
        # only a singular point on the stretch being tracked is meaningful
        if not (lo - reach <= fold.param <= hi + reach):
            return None
        h1, t1 = richardson_jump(fold.head, fold.param, h0, t0)
        try:
            h2, t2 = correct_onto_path(residual, jacobian, h1, t1, tol=cfg.tol_predictor,
                                       max_iter=cfg.max_newton_iters)
        except (NoConvergence, ExponentOverflow):
            return None
        state.counters["jumps"] += 1
        log.debug("constraint %d: jumped over singular point at lam_i=%.6g", i, fold.param)
        return full(h2, t2)
    return None


def adaptive_track(p: MomentProblem, lam, head: Sequence[int], i: int, delta: float, cfg: EbeConfig,
                   rng: np.random.Generator | None = None, state: SolverState | None = None) -> TrackOutcome:
    """Carry the head along ``lam[i] -> lam[i] + delta`` with step halving.

    Each sub-step is a predictor followed (when needed) by a corrector. A
    failed sub-step is halved; once the sub-step drops below
    ``cfg.lambda_min`` the constraint is reported as discarded.
    """
    head = list(head)
    cur = np.array(lam, dtype=float)
    if state is None:
        state = SolverState(cur.copy(), [PENDING] * cur.size)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    out = TrackOutcome(cur)
    if not math.isfinite(delta):
        raise ValueError("tracking step must be finite")
    if not head:
        cur = cur.copy()
        cur[i] += delta
        out.lam, out.substeps = cur, 1
        return out

    remaining = float(delta)
    step = remaining
    failures = 0
    deflated = False
    while remaining != 0.0:
        if abs(step) >= abs(remaining):
            step = remaining
        target = cur[i] + step
        singular = False
        try:
            state.counters["predictor"] += 1
            pred = predictor_step(p, cur, head, i, target)
            new, its = corrector_step(p, pred, head, cfg.tol_predictor, cfg.max_newton_iters)
            state.counters["corrector"] += its
        except _TRACKING_FAILURES as exc:
            singular = isinstance(exc, SingularMatrix)
            failures += 1
            if cfg.deflation_enabled and not deflated and (singular or failures >= 2):
                deflated = True
                jumped = _try_deflation(p, cur, target, head, i, cfg, rng, state)
                if jumped is not None:
                    out.lam, out.jumped = jumped, True
                    return out
            step *= 0.5
            out.halvings += 1
            state.counters["halvings"] += 1
            if abs(step) < cfg.lambda_min:
                out.lam = cur
                out.discarded = True
                out.reason = f"tracking step fell below lambda_min ({type(exc).__name__}: {exc})"
                return out
            continue
        cur = new
        out.substeps += 1
        failures = 0
        remaining = remaining - step
    out.lam = cur
    return out


# --- outer loop --------------------------------------------------------------


def _record(state, p, step, m, i, lam, residual, tol, event="newton"):
    snapshot = tuple(float(v) for v in p.basis.to_user_order(lam))
    state.trace.append(TraceRecord(step, m, int(p.basis.permutation[i]), snapshot, float(residual), float(tol), event))


def adaptive_tolerance_loop(p: MomentProblem, state: SolverState, i: int, cfg: EbeConfig,
                            rng: np.random.Generator) -> SolverState:
    """Solve the system enlarged by constraint ``i`` and update ``state`` in place.

    The working tolerance of the scalar Newton starts at ``cfg.tol_newton``
    and is divided by ten whenever the enlarged system misses
    ``cfg.tol_predictor``. The constraint is discarded when tracking gives
    up, when the iteration cap is hit, or when the tolerance drops below
    ``cfg.tol_floor``.
    """
    state.outer_index += 1
    step = state.outer_index
    head = state.solved
    lam = state.lam.copy()
    tol = cfg.tol_newton
    m = 0
    last_start, worst = None, float("inf")

    def discard(reason):
        state.status[i] = DISCARDED
        state.reasons[i] = reason
        _record(state, p, step, m, i, state.lam, float("nan"), tol, "discarded")
        log.info("step %d: discarded constraint %s (%s)", step, p.basis.indices[i], reason)
        return state

    try:
        Fi = eval_residuals(p, lam, [i]).residuals[0]
    except ExponentOverflow as exc:
        return discard(f"initial evaluation overflowed: {exc}")
    _record(state, p, step, m, i, lam, abs(Fi), tol, "start")

    while True:
        while not abs(Fi) < tol:
            if m >= cfg.max_inner_iters:
                return discard(f"no convergence within {cfg.max_inner_iters} inner iterations")
            try:
                new_li, its = scalar_newton_step(p, lam, i, tol, cfg.max_newton_iters)
            except (ZeroDerivative, NoConvergence) as exc:
                return discard(f"scalar Newton failed: {exc}")
            state.counters["scalar_newton"] += its
            outcome = adaptive_track(p, lam, head, i, new_li - lam[i], cfg, rng, state)
            if outcome.discarded:
                return discard(outcome.reason)
            lam = outcome.lam
            m += 1
            state.counters["inner"] += 1
            Fi = eval_residuals(p, lam, [i]).residuals[0]
            _record(state, p, step, m, i, lam, abs(Fi), tol, "jump" if outcome.jumped else "newton")
        if last_start is None or not np.array_equal(lam, last_start):
            polished, worst, its = enlarged_newton(p, lam, head + [i], cfg.tol_predictor, cfg.max_newton_iters)
            state.counters["enlarged_newton"] += its
            last_start = lam.copy()
        if worst < cfg.tol_predictor:
            state.lam = polished
            state.status[i] = SOLVED
            state.solved_residual[i] = worst
            Fi = eval_residuals(p, polished, [i]).residuals[0]
            _record(state, p, step, m + 1, i, polished, abs(Fi), tol, "solved")
            return state
        # the homotopy iterate was not a good enough start; refine it further
        tol /= 10.0
        state.counters["tolerance_reductions"] += 1
        if tol < cfg.tol_floor:
            return discard(f"tolerance ladder exhausted (max |F| = {worst:.3e})")


def convergence_diagnostics(p: MomentProblem, lam, solved: Sequence[int]) -> dict:
    """Local-attraction quantities at the last solved constraint.

    ``contraction_bound`` is ``|(dF_i/dlam_i)^-1 sum_j dF_j/dlam_i dF_i/dlam_j|``
    over the other solved constraints ``j``; local attraction is guaranteed
    when it is below the smallest eigenvalue magnitude of the head Jacobian.
    Singular values stand in for eigenvalue magnitudes here.
    """
    solved = list(solved)
    if len(solved) < 2:
        return {}
    i, head = solved[-1], solved[:-1]
    try:
        J = eval_jacobian(p, lam, solved)
    except EbeError:
        return {}
    dii = J[-1, -1]
    bound = abs(float(J[:-1, -1] @ J[-1, :-1]) / dii) if dii != 0 else float("inf")
    sv = np.linalg.svd(J[:-1, :-1], compute_uv=False)
    return {
        "contraction_bound": bound,
        "head_min_singular_value": float(sv[-1]),
        "proxy": "singular values used in place of eigenvalue magnitudes",
        "condition_holds": bool(bound < sv[-1]),
        "last_constraint": int(p.basis.permutation[i]),
    }


def _ordered_problem(p: MomentProblem, mode: str) -> MomentProblem:
    if mode == "user":
        return p
    if mode == "canonical":
        key = lambda idx: (idx.total_order, tuple(-e for e in idx.exponents))  # noqa: E731
        canon = BasisSet(p.basis.dimension, p.basis.max_order, tuple(sorted(p.basis.indices, key=key)))
        return p.reordered(canon)
    canon = _ordered_problem(p, "canonical")
    return canon.reordered(reorder_for_convexity(canon.basis))


def ebe_solve(p: MomentProblem, cfg: EbeConfig | None = None) -> SolveReport:
    """Run the EBE outer loop over every constraint of ``p``.

    The report lists multipliers, residuals and constraint indices in the
    order of ``p.basis``, whatever internal order was used.
    """
    cfg = cfg or EbeConfig()
    t0 = time.perf_counter()
    user_basis = p.basis
    q = _ordered_problem(p, cfg.order_mode)
    # permutation relative to the caller's problem
    to_user = [p.basis.permutation.index(k) for k in q.basis.permutation]
    q = MomentProblem(
        BasisSet(q.basis.dimension, q.basis.max_order, q.basis.indices, tuple(to_user)),
        q.targets, q.rule, q.rescale,
    )

    if cfg.initial_alpha is not None and len(cfg.initial_alpha) != q.n:
        raise ValueError("initial_alpha must have one entry per constraint")
    alpha = np.zeros(q.n) if cfg.initial_alpha is None else q.basis.from_user_order(cfg.initial_alpha)
    state = SolverState(alpha.copy(), [PENDING] * q.n)
    rng = np.random.default_rng(cfg.seed)

    for i in range(q.n):
        adaptive_tolerance_loop(q, state, i, cfg, rng)

    lam = state.lam
    solved = state.solved
    Z, _ = normalize(q, lam)
    residuals = eval_residuals(q, lam).residuals
    err = moment_error(q, lam, solved) if solved else 0.0
    perm = q.basis.permutation
    discarded = [
        {"index": int(perm[k]), "multi_index": list(q.basis.indices[k].exponents), "reason": state.reasons[k]}
        for k, s in enumerate(state.status) if s == DISCARDED
    ]
    discarded.sort(key=lambda d: d["index"])
    diagnostics = convergence_diagnostics(q, lam, solved)
    diagnostics["solved_residuals"] = {str(int(perm[k])): v for k, v in sorted(state.solved_residual.items())}
    return SolveReport(
        method="ebe",
        lam=q.basis.to_user_order(lam),
        Z=Z,
        retained=sorted(int(perm[k]) for k in solved),
        discarded=discarded,
        final_moment_error=err,
        residuals=q.basis.to_user_order(residuals),
        iterations=dict(state.counters, outer=state.outer_index),
        wall_time=time.perf_counter() - t0,
        basis=user_basis,
        trace=state.trace,
        diagnostics=diagnostics,
    )
