"""Chain diagnostics: effective sample size and split-chain R-hat."""

from __future__ import annotations

import warnings

import numpy as np

from .errors import DimensionError


def _autocorrelation(x: np.ndarray) -> np.ndarray:
    """Autocorrelation at all lags via FFT, normalized so lag 0 is 1."""
    n = x.shape[0]
    x = x - x.mean()
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conjugate(f), nfft)[:n].real / n
    if acov[0] <= 0:
        return np.zeros(n)
    return acov / acov[0]


def effective_sample_size(draws) -> float:
    """Autocorrelation-adjusted count of independent-equivalent draws.

    Uses the initial-positive-sequence estimator: the integrated
    autocorrelation time sums lag pairs (rho_2m + rho_2m+1) while they stay
    positive. The result is clipped to (0, len(draws)]. A constant chain is
    reported as full length with a warning, since autocorrelation is
    undefined there.
    """
    x = np.asarray(draws, dtype=float).ravel()
    n = x.shape[0]
    if n < 10:
        raise DimensionError(f"need at least 10 draws for ESS, got {n}")
    if np.ptp(x) == 0.0:
        warnings.warn("constant chain: ESS reported as chain length", RuntimeWarning)
        return float(n)
    rho = _autocorrelation(x)
    # sum lag pairs (rho_2m + rho_2m+1) while positive; tau = 2 * sum - 1
    tau = -1.0
    m = 0
    while 2 * m + 1 < n:
        pair = rho[2 * m] + rho[2 * m + 1]
        if pair <= 0.0:
            break
        tau += 2.0 * pair
        m += 1
    if tau <= 0.0:
        return float(n)
    return float(min(n / tau, n))


def split_rhat(chains) -> float:
    """Split-chain potential scale reduction factor.

    ``chains`` is (n_chains, n_draws); each chain is split in half, and the
    classic between/within variance ratio is computed over the halves.
    Values near 1 indicate the chains agree.
    """
    c = np.asarray(chains, dtype=float)
    if c.ndim != 2:
        raise DimensionError(f"chains must be 2-d (n_chains, n_draws), got {c.shape}")
    n_draws = c.shape[1]
    if n_draws < 4:
        raise DimensionError(f"need at least 4 draws per chain, got {n_draws}")
    half = n_draws // 2
    halves = np.vstack([c[:, :half], c[:, half : 2 * half]])
    m, n = halves.shape
    within = halves.var(axis=1, ddof=1).mean()
    between = n * halves.mean(axis=1).var(ddof=1)
    if within == 0.0:
        return 1.0 if between == 0.0 else np.inf
    var_plus = (n - 1) / n * within + between / n
    return float(np.sqrt(var_plus / within))


def mcse_mean(draws) -> float:
    """Monte Carlo standard error of the posterior mean: sd / sqrt(ESS)."""
    x = np.asarray(draws, dtype=float).ravel()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        ess = effective_sample_size(x)
    return float(x.std(ddof=1) / np.sqrt(ess))
