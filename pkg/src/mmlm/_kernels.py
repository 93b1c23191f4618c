"""Compiled inner loop for the single-site cluster-effect sweep.

The sweep is sequential by construction (clusters sharing units interact
through the residual), so it lives in a numba kernel. ``rng.normal()`` in
compiled code consumes the same underlying bitstream as the pure-Python
Generator, which keeps chains bit-reproducible across both paths.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def u_sweep(resid, u, indptr, unit_idx, w, sumw2, sigma2_u, sigma2_e, rng):
    """One ascending-index pass of single-site updates for one classification.

    ``resid`` is the full residual y - X beta - all random-effect
    contributions; it is updated in place as each cluster effect moves.
    Cluster j's conditional precision is 1/sigma2_u + sum_i w_ji^2/sigma2_e.
    """
    for j in range(u.shape[0]):
        d = 1.0 / sigma2_u + sumw2[j] / sigma2_e
        s = sumw2[j] * u[j]
        for k in range(indptr[j], indptr[j + 1]):
            s += w[k] * resid[unit_idx[k]]
        # same operation order as full_conditional_u so both paths agree bitwise
        mean = s / (sigma2_e * d)
        var = 1.0 / d
        new = mean + rng.normal() * np.sqrt(var)
        diff = new - u[j]
        for k in range(indptr[j], indptr[j + 1]):
            resid[unit_idx[k]] -= w[k] * diff
        u[j] = new
