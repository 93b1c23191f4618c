"""Independent reference implementations used to check the package.

Everything here is deliberately written from first principles (dense joint
Gaussians, grid quadrature, Gauss-Hermite integration, textbook closed
forms, index-based two-level samplers) and shares no code with the package
paths it validates.
"""

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import logsumexp


# ---------------------------------------------------------------------------
# dense joint Gaussian over (beta, u)
# ---------------------------------------------------------------------------

def joint_gaussian_posterior(X, W_list, y, sigma2_u, sigma2_e):
    """Posterior mean and covariance of (beta, u_1, ..., u_C) given the
    variances, with a flat prior on beta: a single dense Gaussian."""
    M = np.column_stack([X] + [np.asarray(W.todense()) for W in W_list])
    p = X.shape[1]
    prior_prec = [np.zeros(p)]
    for W, s2 in zip(W_list, sigma2_u):
        prior_prec.append(np.full(W.shape[1], 1.0 / s2))
    P0 = np.diag(np.concatenate(prior_prec))
    Q = M.T @ M / sigma2_e + P0
    cov = np.linalg.inv(Q)
    mean = cov @ (M.T @ y / sigma2_e)
    return mean, cov


def gaussian_conditional(mean, cov, free, given, values):
    """Conditional of the ``free`` block given the ``given`` block."""
    free = np.asarray(free)
    given = np.asarray(given)
    c_ff = cov[np.ix_(free, free)]
    c_fg = cov[np.ix_(free, given)]
    c_gg = cov[np.ix_(given, given)]
    solve = np.linalg.solve(c_gg, (np.asarray(values) - mean[given]))
    cond_mean = mean[free] + c_fg @ solve
    cond_cov = c_ff - c_fg @ np.linalg.solve(c_gg, c_fg.T)
    return cond_mean, cond_cov


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def grid_moments(grid, log_density):
    """Normalized mean and variance of a density known on a uniform grid."""
    w = np.exp(log_density - log_density.max())
    w /= w.sum()
    mean = float(w @ grid)
    var = float(w @ (grid - mean) ** 2)
    return mean, var


def conditional_u_by_quadrature(y, fitted_others, w_j, sigma2_u, sigma2_e,
                                n_points=2001, half_width_sd=6.0):
    """Mean/variance of one cluster effect by grid quadrature.

    ``fitted_others`` is x'beta plus every other random-effect contribution,
    so y - fitted_others - w_j * u is the residual as a function of u.
    """
    sd = np.sqrt(sigma2_u)
    grid = np.linspace(-half_width_sd * sd, half_width_sd * sd, n_points)
    resid = y[:, None] - fitted_others[:, None] - w_j[:, None] * grid[None, :]
    loglik = -0.5 * np.sum(resid**2, axis=0) / sigma2_e
    logprior = -0.5 * grid**2 / sigma2_u
    return grid_moments(grid, loglik + logprior)


def variance_posterior_mean_by_quadrature(a, b, sq_sum, count, n_points=200001):
    """Posterior mean of a variance by quadrature: inverse-gamma(a, b) prior
    times the Gaussian likelihood of ``count`` centered values whose squares
    sum to ``sq_sum``. Integrates on a log-variance grid so the heavy right
    tail is captured."""
    shape = a + count / 2.0
    rate = b + sq_sum / 2.0
    center = np.log(rate / shape)
    t = np.linspace(center - 25.0, center + 25.0, n_points)
    # log density of sigma^2 = exp(t) including the Jacobian exp(t)
    logp = (-(a + count / 2.0)) * t - rate * np.exp(-t)
    w = np.exp(logp - logp.max())
    return float((w @ np.exp(t)) / w.sum())


def marginal_loglik_by_hermite(X, W, y, beta, sigma2_u, sigma2_e, n_nodes=80):
    """Marginal log density of y with the (two) cluster effects integrated
    out by tensor-product Gauss-Hermite quadrature."""
    W = np.asarray(W.todense()) if hasattr(W, "todense") else np.asarray(W)
    n, J = W.shape
    assert J == 2, "oracle covers the two-cluster case"
    nodes, weights = hermegauss(n_nodes)
    log_w = np.log(weights) - 0.5 * np.log(2.0 * np.pi)
    sd = np.sqrt(sigma2_u)
    r0 = y - X @ beta
    terms = np.empty((n_nodes, n_nodes))
    for i, u1 in enumerate(nodes):
        for k, u2 in enumerate(nodes):
            resid = r0 - W @ np.array([sd * u1, sd * u2])
            loglik = (
                -0.5 * n * np.log(2.0 * np.pi * sigma2_e)
                - 0.5 * float(resid @ resid) / sigma2_e
            )
            terms[i, k] = log_w[i] + log_w[k] + loglik
    return float(logsumexp(terms))


# ---------------------------------------------------------------------------
# two-level (single membership) references
# ---------------------------------------------------------------------------

def two_level_predictor(X, beta, groups, u):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        out[i] = float(X[i] @ beta) + u[groups[i]]
    return out


def two_level_marginal_loglik(y, X, beta, groups, J, sigma2_u, sigma2_e):
    """Exact marginal log likelihood of a two-level random-intercept model,
    accumulated group by group with the rank-one closed form."""
    r = y - X @ beta
    total = 0.0
    for j in range(J):
        rj = r[groups == j]
        k = rj.shape[0]
        if k == 0:
            continue
        denom = sigma2_e + k * sigma2_u
        logdet = (k - 1) * np.log(sigma2_e) + np.log(denom)
        quad = (float(rj @ rj) - sigma2_u * float(rj.sum()) ** 2 / denom) / sigma2_e
        total += -0.5 * (k * np.log(2.0 * np.pi) + logdet + quad)
    return total


def two_level_u_conditional(y, X, beta, groups, j, sigma2_u, sigma2_e):
    """Textbook conditional for a two-level random intercept."""
    idx = np.where(groups == j)[0]
    k = idx.shape[0]
    d = 1.0 / sigma2_u + k / sigma2_e
    mean = float((y[idx] - X[idx] @ beta).sum()) / sigma2_e / d
    return mean, 1.0 / d


def two_level_gibbs(y, X, groups, J, burn_in=500, iterations=2000,
                    a=0.001, b=0.001, seed=0):
    """Standard two-level random-intercept Gibbs sampler, index-based."""
    rng = np.random.default_rng(seed)
    n, p = X.shape
    members = [np.where(groups == j)[0] for j in range(J)]
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    u = np.zeros(J)
    s2u = s2e = float(np.var(y - X @ beta)) / 2.0 + 1e-8
    xtx = X.T @ X
    out = {"beta": [], "sigma2_u": [], "sigma2_e": []}
    for it in range(burn_in + iterations):
        r = y - u[groups]
        mean = np.linalg.solve(xtx, X.T @ r)
        cov = s2e * np.linalg.inv(xtx)
        beta = rng.multivariate_normal(mean, cov)
        fitted = X @ beta
        for j in range(J):
            idx = members[j]
            d = 1.0 / s2u + idx.shape[0] / s2e
            m = float((y[idx] - fitted[idx]).sum()) / s2e / d
            u[j] = m + rng.normal() / np.sqrt(d)
        s2u = 1.0 / rng.gamma(a + J / 2.0, 1.0 / (b + float(u @ u) / 2.0))
        resid = y - fitted - u[groups]
        s2e = 1.0 / rng.gamma(a + n / 2.0, 1.0 / (b + float(resid @ resid) / 2.0))
        if it >= burn_in:
            out["beta"].append(beta.copy())
            out["sigma2_u"].append(s2u)
            out["sigma2_e"].append(s2e)
    return {k: np.array(v) for k, v in out.items()}


def oneway_balanced_ml(y, J, k):
    """Closed-form ML estimates for a balanced one-way random-effects layout.

    y is ordered group-major with k observations per each of J groups.
    Returns (mu, sigma2_u, sigma2_e); assumes an interior maximum.
    """
    y = np.asarray(y, dtype=float).reshape(J, k)
    group_means = y.mean(axis=1)
    grand = y.mean()
    sse = float(((y - group_means[:, None]) ** 2).sum())
    ssa = k * float(((group_means - grand) ** 2).sum())
    sigma2_e = sse / (J * (k - 1))
    t_hat = ssa / J
    sigma2_u = (t_hat - sigma2_e) / k
    return float(grand), float(sigma2_u), float(sigma2_e)


# ---------------------------------------------------------------------------
# misc
# ---------------------------------------------------------------------------

def ar1_series(rng, rho, n):
    """Stationary AR(1) with unit marginal variance."""
    x = np.empty(n)
    x[0] = rng.normal()
    innovation_sd = np.sqrt(1.0 - rho**2)
    for t in range(1, n):
        x[t] = rho * x[t - 1] + innovation_sd * rng.normal()
    return x
