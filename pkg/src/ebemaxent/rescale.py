from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class AffineRescale:
    """Per-axis affine map sending ``[lo_k, hi_k]`` onto ``[-1, 1]``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float)).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lo and hi must be 1-D arrays of equal length")
        if not np.all(np.isfinite(lo) & np.isfinite(hi)) or np.any(lo >= hi):
            raise ValueError(f"need finite lo < hi on every axis, got lo={lo}, hi={hi}")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dimension(self) -> int:
        return self.lo.size

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def half_width(self) -> np.ndarray:
        return 0.5 * (self.hi - self.lo)

    def to_unit(self, y) -> np.ndarray:
        """Original coordinates -> hypercube coordinates."""
        x = (np.asarray(y, dtype=float) - self.center) / self.half_width
        # endpoints must land on +-1 exactly despite rounding
        x = np.where(np.asarray(y) == self.lo, -1.0, x)
        return np.where(np.asarray(y) == self.hi, 1.0, x)

    def from_unit(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) * self.half_width + self.center

    def jacobian(self) -> float:
        """``|dx/dy|`` of the map to the hypercube; multiplies densities."""
        return float(np.prod(1.0 / self.half_width))

    def to_dict(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "AffineRescale":
        return cls(np.array(data["lo"], dtype=float), np.array(data["hi"], dtype=float))
