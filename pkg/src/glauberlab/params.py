"""Model parameters shared by the structural and dynamical checks.

All logarithms with subscript d mean log base d; plain log means the
natural logarithm.  The partition radius, SAW windows and ball-growth
thresholds are all derived from (d, delta, n) through the helpers here
so that every module agrees on rounding conventions:

* partition / ball radius      r <= delta*log_d(n)   -> floor
* shortest constrained path    ell >= delta*log_d(n) -> ceil, at least 1
* ball-size thresholds         n**(delta/10), n**(delta/20) -> ceil
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .errors import InvalidInputError


@dataclass(frozen=True)
class ModelParams:
    """Parameters of one verification run.

    d      -- mean-degree parameter of the graph ensemble (d > 1).
    beta   -- inverse temperature; tanh(beta) = 1/d at criticality.
    delta  -- radius exponent for the vertex partition (default 1/10).
    C      -- ball-growth cutoff defining the partition.
    Cp     -- per-length SAW growth constant (S_v(ell) <= Cp * d**ell).
    Cpp    -- weighted SAW sum constant (sum <= Cpp * log n).
    K      -- walk-length multiplier for the long-walk checks; K > 3.
    """

    d: float
    beta: float
    delta: float = 0.1
    C: float = 8.0
    Cp: float = 8.0
    Cpp: float = 8.0
    K: float = 4.0

    def __post_init__(self):
        if not self.d > 1.0:
            raise InvalidInputError(f"d must exceed 1, got {self.d}")
        if self.beta < 0.0:
            raise InvalidInputError(f"beta must be nonnegative, got {self.beta}")
        if not 0.0 < self.delta <= 1.0:
            raise InvalidInputError(f"delta must lie in (0, 1], got {self.delta}")
        if not self.K > 3.0:
            raise InvalidInputError(f"K must exceed 3, got {self.K}")

    @classmethod
    def critical(cls, d: float, **kwargs) -> "ModelParams":
        """Parameters at the critical temperature: d * tanh(beta) = 1."""
        if not d > 1.0:
            raise InvalidInputError(f"d must exceed 1, got {d}")
        return cls(d=d, beta=math.atanh(1.0 / d), **kwargs)

    @property
    def theta(self) -> float:
        """tanh(beta); equals 1/d at criticality."""
        return math.tanh(self.beta)

    def with_constants(self, C=None, Cp=None, Cpp=None) -> "ModelParams":
        updates = {}
        if C is not None:
            updates["C"] = C
        if Cp is not None:
            updates["Cp"] = Cp
        if Cpp is not None:
            updates["Cpp"] = Cpp
        return replace(self, **updates)

    # -- derived scales -------------------------------------------------

    def log_d(self, n: int) -> float:
        return math.log(n) / math.log(self.d)

    def partition_radius(self, n: int) -> int:
        """Largest ball radius entering the growth statistic: floor(delta*log_d n)."""
        return max(0, math.floor(self.delta * self.log_d(n)))

    def window_length(self, n: int) -> int:
        """Shortest path length subject to the density constraint: ceil(delta*log_d n), >= 1."""
        return max(1, math.ceil(self.delta * self.log_d(n)))

    def long_walk_length(self, n: int) -> int:
        """Length of the rank-one regime walks: ceil(K*log_d n)."""
        return max(1, math.ceil(self.K * self.log_d(n)))

    def ball_threshold(self, n: int) -> int:
        """Discovery threshold for the primary critical radius: ceil(n**(delta/10))."""
        return math.ceil(n ** (self.delta / 10.0))

    def ball_threshold_small(self, n: int) -> int:
        """Threshold for the secondary critical radius: ceil(n**(delta/20))."""
        return math.ceil(n ** (self.delta / 20.0))

    def saw_length_cap(self, n: int) -> int:
        """Exact-SAW-counting depth cap: min(window + 10, 24)."""
        return min(self.window_length(n) + 10, 24)


def critical_beta(d: float) -> float:
    """Inverse temperature solving d * tanh(beta) = 1."""
    if not d > 1.0:
        raise InvalidInputError(f"d must exceed 1, got {d}")
    return math.atanh(1.0 / d)
