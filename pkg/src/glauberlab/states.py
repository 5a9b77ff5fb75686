"""Helpers for probability measures on {-1,+1}^k.

Configurations are encoded as integers 0..2^k-1; bit i carries the spin
of site i with bit set <=> spin +1.  The site <-> bit assignment is
always recorded next to the arrays that use it (see GibbsTable.sites).
"""
from __future__ import annotations

import numpy as np

__all__ = ["spin_column", "spins_matrix", "compress_bits", "tv_distance"]


def spin_column(configs: np.ndarray, bit: int) -> np.ndarray:
    """Spin (+-1 as float) of `bit` across an array of encoded configs."""
    return 2.0 * ((configs >> bit) & 1) - 1.0


def spins_matrix(k: int, dtype=np.float64) -> np.ndarray:
    """(2^k, k) matrix of spins; row c is the spin vector of config c."""
    c = np.arange(1 << k, dtype=np.int64)
    return (2.0 * ((c[:, None] >> np.arange(k)[None, :]) & 1) - 1.0).astype(dtype)


def compress_bits(configs: np.ndarray, bits: list[int]) -> np.ndarray:
    """Re-encode configs keeping only `bits`, in the given order."""
    out = np.zeros_like(configs)
    for new, old in enumerate(bits):
        out |= ((configs >> old) & 1) << new
    return out


def tv_distance(p, q) -> float:
    """Total variation distance between two finite distributions."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("distributions must have equal support size")
    return 0.5 * float(np.abs(p - q).sum())
