"""Exact marginal likelihood and small-scale maximum likelihood fitting.

Integrating the cluster effects out of the membership model leaves

    y ~ N(X beta,  V),   V = sum_c sigma_c^2 W_c W_c' + sigma_e^2 I,

whose dense Cholesky factorization is tractable for the small instances
this module is meant for: an oracle for the sampler and a frequentist
fitter. The ML fit maximizes the profile likelihood over log-variances
(an unconstrained parameterization), with beta profiled out by generalized
least squares at every step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize

from .core import Dataset, ModelSpec
from .errors import (
    ConvergenceError,
    DimensionError,
    ModelError,
    NotPositiveDefiniteError,
    SingularDesignError,
)

MAX_DENSE_UNITS = 10000
LOG_VARIANCE_BOUND = 33.0      # optimizer box in log-variance coordinates
BOUNDARY_LOG_VARIANCE = -30.0  # below this a variance is reported as at the zero boundary
GRADIENT_TOL = 1e-5
MAX_OUTER_ITER = 500


class MarginalModel:
    """Dense-factorization view of one model: X, y, and the per-
    classification weight matrices.

    ``variances`` arguments throughout are ordered like the model's
    classifications, with the residual variance last.
    """

    def __init__(self, spec: ModelSpec, data: Dataset):
        spec.check_against(data)
        if data.n_units > MAX_DENSE_UNITS:
            raise ModelError(
                f"{data.n_units} units exceeds the dense-factorization guard "
                f"({MAX_DENSE_UNITS}); use the Gibbs engine"
            )
        self.spec = spec
        self.n = data.n_units
        self.X = spec.design_matrix(data)
        self.y = data.column(spec.response).astype(float)
        self.p = self.X.shape[1]
        self.W = [d.matrix() for d in spec.memberships]
        self.scale_names = [f"sigma2_u_{n}" for n in spec.classification_names] + ["sigma2_e"]
        if np.linalg.matrix_rank(self.X) < self.p:
            raise SingularDesignError("fixed-effects design matrix is rank deficient")

    @property
    def n_scales(self) -> int:
        return len(self.W) + 1

    def covariance(self, variances) -> np.ndarray:
        v = self._check_variances(variances)
        V = v[-1] * np.eye(self.n)
        for s2, Wc in zip(v[:-1], self.W):
            V += s2 * (Wc @ Wc.T).toarray()
        return V

    def _check_variances(self, variances) -> np.ndarray:
        v = np.asarray(variances, dtype=float)
        if v.shape != (self.n_scales,):
            raise DimensionError(
                f"expected {self.n_scales} variances "
                f"({', '.join(self.scale_names)}), got shape {v.shape}"
            )
        if np.any(v <= 0) or not np.all(np.isfinite(v)):
            raise ModelError("variances must be strictly positive and finite")
        return v

    def _check_beta(self, beta) -> np.ndarray:
        b = np.asarray(beta, dtype=float)
        if b.shape != (self.p,):
            raise DimensionError(f"beta has shape {b.shape}, expected ({self.p},)")
        return b

    def _factor(self, variances):
        V = self.covariance(variances)
        try:
            return sla.cholesky(V, lower=True)
        except sla.LinAlgError:
            raise NotPositiveDefiniteError(
                "marginal covariance factorization failed; check variances and "
                "for duplicated units"
            ) from None


def log_likelihood(m: MarginalModel, beta, variances) -> float:
    """Marginal Gaussian log density of y at (beta, variances)."""
    b = m._check_beta(beta)
    L = m._factor(variances)
    r = m.y - m.X @ b
    z = sla.solve_triangular(L, r, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return float(-0.5 * (m.n * np.log(2.0 * np.pi) + logdet + z @ z))


def log_likelihood_gradient(m: MarginalModel, beta, variances):
    """Analytic gradient: (d/d beta, d/d log variances).

    The beta block is exactly X' V^-1 (y - X beta); each log-variance
    component is sigma_k^2 * -(tr(V^-1 G_k) - r'V^-1 G_k V^-1 r)/2 with
    G_k the corresponding term of V.
    """
    b = m._check_beta(beta)
    v = m._check_variances(variances)
    L = m._factor(v)
    r = m.y - m.X @ b
    a = sla.cho_solve((L, True), r)
    grad_beta = m.X.T @ a

    grad_logvar = np.empty(m.n_scales)
    for c, Wc in enumerate(m.W):
        Wd = Wc.toarray()
        S = sla.cho_solve((L, True), Wd)
        trace = float(np.sum(Wd * S))
        quad = float(np.sum((Wc.T @ a) ** 2))
        grad_logvar[c] = v[c] * (-0.5) * (trace - quad)
    Linv = sla.solve_triangular(L, np.eye(m.n), lower=True)
    trace_e = float(np.sum(Linv**2))
    grad_logvar[-1] = v[-1] * (-0.5) * (trace_e - float(a @ a))
    return grad_beta, grad_logvar


def gls_beta(m: MarginalModel, variances) -> np.ndarray:
    """Generalized least squares coefficients at the given variances."""
    L = m._factor(variances)
    Vinv_X = sla.cho_solve((L, True), m.X)
    A = m.X.T @ Vinv_X
    try:
        return sla.solve(A, Vinv_X.T @ m.y, assume_a="pos")
    except sla.LinAlgError:
        raise SingularDesignError("GLS normal equations are singular") from None


@dataclass(frozen=True)
class MLFit:
    beta: np.ndarray
    variances: np.ndarray      # classifications in order, residual last
    loglik: float
    converged: bool
    n_iter: int
    boundary: tuple            # scale names driven to the zero boundary
    scale_names: tuple

    @property
    def sigma2_e(self) -> float:
        return float(self.variances[-1])

    def variance_dict(self) -> dict:
        return {name: float(v) for name, v in zip(self.scale_names, self.variances)}


def fit_ml(m: MarginalModel, initial_variances=None) -> MLFit:
    """Maximize the profile log-likelihood over log-variances.

    beta is profiled out by GLS inside the objective, so the gradient of
    the profile equals the partial derivative at the GLS solution.
    Convergence requires the projected gradient below 1e-5 within 500
    iterations; log-variances below -30 are reported as boundary scales.
    """
    if m.n <= m.p:
        raise ModelError(f"need n > p for ML ({m.n} units, {m.p} fixed effects)")
    if initial_variances is not None:
        theta0 = np.log(m._check_variances(initial_variances))
    else:
        beta0, *_ = np.linalg.lstsq(m.X, m.y, rcond=None)
        r0 = m.y - m.X @ beta0
        s2 = max(float(r0 @ r0) / max(m.n - m.p, 1), 1e-10)
        theta0 = np.full(m.n_scales, np.log(s2 / m.n_scales))
    trace = []

    def objective(theta):
        v = np.exp(theta)
        try:
            beta = gls_beta(m, v)
            value = log_likelihood(m, beta, v)
            _, grad = log_likelihood_gradient(m, beta, v)
        except NotPositiveDefiniteError:
            # unreachable for sane data; keep the search alive if it happens
            return 1e30, np.zeros_like(theta)
        trace.append(float(value))
        return -value, -grad

    bounds = [(-LOG_VARIANCE_BOUND, LOG_VARIANCE_BOUND)] * m.n_scales
    res = minimize(
        objective,
        theta0,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": MAX_OUTER_ITER, "ftol": 1e-12, "gtol": GRADIENT_TOL},
    )

    theta = res.x.copy()
    # gradients in log coordinates vanish with the variance itself, so a
    # descent toward zero stalls at a tiny interior value; a scale whose
    # removal costs less than the convergence tolerance is indistinguishable
    # from zero and is snapped to the boundary
    for k in range(m.n_scales):
        if theta[k] < -20.0:
            trial = theta.copy()
            trial[k] = -LOG_VARIANCE_BOUND
            if objective(trial)[0] <= objective(theta)[0] + 1e-8:
                theta = trial
    boundary = tuple(
        name for name, t in zip(m.scale_names, theta) if t < BOUNDARY_LOG_VARIANCE
    )
    proj = res.jac.copy()
    at_lo = theta <= -LOG_VARIANCE_BOUND + 1e-8
    at_hi = theta >= LOG_VARIANCE_BOUND - 1e-8
    proj[at_lo & (proj > 0)] = 0.0
    proj[at_hi & (proj < 0)] = 0.0
    converged = bool(np.max(np.abs(proj)) < GRADIENT_TOL) or bool(boundary)
    if not converged:
        raise ConvergenceError(
            f"ML fit did not converge in {res.nit} iterations "
            f"(projected gradient {np.max(np.abs(proj)):.3g}); "
            f"last log-likelihood values: {[f'{t:.6f}' for t in trace[-5:]]}"
        )

    variances = np.exp(theta)
    beta = gls_beta(m, variances)
    return MLFit(
        beta=beta,
        variances=variances,
        loglik=log_likelihood(m, beta, variances),
        converged=converged,
        n_iter=int(res.nit),
        boundary=boundary,
        scale_names=tuple(m.scale_names),
    )


def gradient_check(m: MarginalModel, beta, variances, step: float = 1e-5) -> float:
    """Max relative deviation between the analytic log-variance gradient and
    central finite differences of the log-likelihood."""
    b = m._check_beta(beta)
    v = m._check_variances(variances)
    theta = np.log(v)
    _, analytic = log_likelihood_gradient(m, b, v)
    fd = np.empty_like(analytic)
    for k in range(theta.shape[0]):
        hi, lo = theta.copy(), theta.copy()
        hi[k] += step
        lo[k] -= step
        fd[k] = (log_likelihood(m, b, np.exp(hi)) - log_likelihood(m, b, np.exp(lo))) / (
            2.0 * step
        )
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-10)
    return float(np.max(np.abs(analytic - fd) / denom))
