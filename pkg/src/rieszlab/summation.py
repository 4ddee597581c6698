"""Compensated accumulation helpers for slowly convergent lattice sums.

The periodized potential is a sum of ~1e5..1e6 shell terms whose magnitudes
decay like a power law; plain left-to-right float64 accumulation loses
digits long before the truncation error is reached. Everything here keeps
the accumulated rounding error at the few-ulp level.
"""
from __future__ import annotations

import math

import numpy as np

__all__ = ["NeumaierAccumulator", "fsum_pairs", "chunk_ranges"]


class NeumaierAccumulator:
    """Running compensated sum, vectorized over a fixed-shape array.

    Implements the Neumaier variant of Kahan summation: each `add` folds a
    new array of partial sums into (total, compensation). Works elementwise,
    so one accumulator serves a whole grid of evaluation points.
    """

    def __init__(self, shape):
        self.total = np.zeros(shape)
        self.comp = np.zeros(shape)

    def add(self, values: np.ndarray) -> None:
        t = self.total + values
        # branchless Neumaier update: compensate with the smaller summand
        big = np.abs(self.total) >= np.abs(values)
        self.comp += np.where(big, (self.total - t) + values, (values - t) + self.total)
        self.total = t

    def value(self) -> np.ndarray:
        return self.total + self.comp


def fsum_pairs(values) -> float:
    """Exact (correctly rounded) sum of a small 1-d collection."""
    return math.fsum(values)


def chunk_ranges(start: int, stop: int, max_chunk: int):
    """Yield (lo, hi) covering [start, stop) in chunks of at most max_chunk."""
    lo = start
    while lo < stop:
        hi = min(lo + max_chunk, stop)
        yield lo, hi
        lo = hi
