"""From raw samples to a moment problem on the unit hypercube."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .basis import BasisSet, eval_basis_matrix
from .core import MomentProblem
from .exceptions import DegenerateAxis, DomainError
from .quadrature import QuadratureRule
from .rescale import AffineRescale

__all__ = [
    "AffineRescale",
    "SampleSet",
    "build_problem",
    "empirical_moments",
    "fit_rescale",
    "load_samples_csv",
    "rejection_sample",
]


@dataclass(frozen=True, eq=False)
class SampleSet:
    points: np.ndarray  # (count, d), original units

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise ValueError("samples must form a 2-D array (count, dimension)")
        if pts.shape[0] < 2:
            raise ValueError(f"need at least 2 samples, got {pts.shape[0]}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("samples contain non-finite values")
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]


def fit_rescale(s: SampleSet) -> AffineRescale:
    lo = s.points.min(axis=0)
    hi = s.points.max(axis=0)
    flat = np.flatnonzero(lo >= hi)
    if flat.size:
        raise DegenerateAxis(f"axis {int(flat[0])} is constant ({lo[flat[0]]!r})")
    return AffineRescale(lo, hi)


def empirical_moments(s: SampleSet, r: AffineRescale, b: BasisSet) -> np.ndarray:
    """Sample means of every basis monomial after mapping into the hypercube."""
    if s.dimension != b.dimension or r.dimension != b.dimension:
        raise ValueError("samples, rescale and basis must share a dimension")
    x = r.to_unit(s.points)
    try:
        return eval_basis_matrix(b, x).mean(axis=0)
    except DomainError as exc:
        raise DomainError(f"rescaled samples leave the hypercube: {exc}") from exc


def build_problem(s: SampleSet, b: BasisSet, rule: QuadratureRule, r: AffineRescale | None = None) -> MomentProblem:
    r = r or fit_rescale(s)
    return MomentProblem(b, empirical_moments(s, r, b), rule, r)


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_samples_csv(path, dimension: int | None = None) -> SampleSet:
    """One sample per row; a first row with any non-numeric field is a header."""
    rows = []
    width = None
    with open(Path(path), newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            fields = [f.strip() for f in row]
            if not fields or all(f == "" for f in fields):
                continue
            if not rows and width is None and not all(_is_number(f) for f in fields):
                width = len(fields)
                continue
            try:
                values = [float(f) for f in fields]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric field in {row!r}") from None
            if width is None:
                width = len(values)
            if len(values) != width:
                raise ValueError(f"{path}:{lineno}: expected {width} columns, found {len(values)}")
            if not all(np.isfinite(values)):
                raise ValueError(f"{path}:{lineno}: non-finite value")
            rows.append(values)
    if not rows:
        raise ValueError(f"{path}: no samples")
    pts = np.array(rows)
    if dimension is not None and pts.shape[1] != dimension:
        raise ValueError(f"{path}: expected {dimension} columns, found {pts.shape[1]}")
    return SampleSet(pts)


def rejection_sample(log_density: Callable[[np.ndarray], np.ndarray], d: int, count: int,
                     rng: np.random.Generator, log_bound: float | None = None, batch: int = 65536) -> np.ndarray:
    """Draw ``count`` points on ``[-1, 1]^d`` from an unnormalized log-density.

    Proposals are uniform; ``log_bound`` must dominate ``log_density`` on the
    cube and is estimated from a dense random probe when omitted.
    """
    if log_bound is None:
        probe = rng.uniform(-1.0, 1.0, size=(200_000, d))
        log_bound = float(np.max(log_density(probe))) + 0.5
    out = []
    have = 0
    while have < count:
        x = rng.uniform(-1.0, 1.0, size=(batch, d))
        keep = np.log(rng.uniform(size=batch)) < log_density(x) - log_bound
        out.append(x[keep])
        have += int(keep.sum())
    return np.concatenate(out)[:count]
