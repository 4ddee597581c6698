"""Monte Carlo error statistics: batch means and autocorrelation time."""
from __future__ import annotations

import numpy as np

__all__ = ["batch_means_stderr", "integrated_autocorr_time"]


def batch_means_stderr(trace, n_batches: int = 20) -> float:
    """Standard error of the mean by batch means (>= 20 batches).

    Correlated-sample safe: the batch length absorbs the autocorrelation as
    long as batches are much longer than the mixing time.
    """
    x = np.asarray(trace, dtype=float).ravel()
    if n_batches < 20:
        raise ValueError("batch means requires at least 20 batches")
    if len(x) < n_batches:
        raise ValueError(f"trace too short for {n_batches} batches")
    usable = (len(x) // n_batches) * n_batches
    batches = x[:usable].reshape(n_batches, -1).mean(axis=1)
    return float(np.std(batches, ddof=1) / np.sqrt(n_batches))


def integrated_autocorr_time(trace) -> float:
    """IAT of a scalar chain: 1 + 2 sum rho_k, truncated by the
    initial-positive-sequence rule on pair sums (Geyer).

    Autocovariances come from one FFT pass. Returns at least 1.0.
    """
    x = np.asarray(trace, dtype=float).ravel()
    m = len(x)
    if m < 4:
        return 1.0
    x = x - x.mean()
    size = 1 << (2 * m - 1).bit_length()
    f = np.fft.rfft(x, n=size)
    acov = np.fft.irfft(f * np.conjugate(f), n=size)[:m].real
    if acov[0] <= 0:
        return 1.0
    rho = acov / acov[0]
    # pair sums rho_{2k+1} + rho_{2k+2}; stop at the first nonpositive one
    tau = 1.0
    k = 1
    while k + 1 < m:
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
        k += 2
    return float(max(tau, 1.0))
