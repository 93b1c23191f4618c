"""Gibbs sampler for Gaussian multiple membership models.

Conjugate single-site sampler with a fixed sweep order: beta, then each
classification's cluster effects in ascending index, then the variances.
Priors are flat on beta and inverse-gamma(a, b) on every variance
(a = b = 0.001 by default). Full conditionals:

    beta  | rest ~ N((X'X)^-1 X'r,  sigma_e^2 (X'X)^-1),   r = y - sum_c W_c u_c
    u_j   | rest ~ N(m_j / d_j, 1 / d_j),
                   d_j = 1/sigma_c^2 + sum_i w_ji^2 / sigma_e^2,
                   m_j = (1/sigma_e^2) sum_i w_ji (y_i - x_i'beta - other effects)
    sigma_c^2 | u ~ InvGamma(a + J_c/2, b + sum_j u_j^2 / 2)
    sigma_e^2 | . ~ InvGamma(a + n/2,   b + sum_i e_i^2 / 2)

Chains use independent seed-derived RNG streams; within a chain, sweeps are
strictly sequential and deterministic given (seed, chain index).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import _kernels
from .core import Dataset, ModelSpec
from .diagnostics import effective_sample_size, split_rhat
from .errors import DivergenceError, ModelError, SingularDesignError

VARIANCE_FLOOR = 1e-12   # initialization floor only; draws are positive by construction


@dataclass(frozen=True)
class PriorConfig:
    """Inverse-gamma(shape a, rate b) on every variance; beta is flat."""

    a: float = 0.001
    b: float = 0.001

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ModelError("inverse-gamma prior needs a > 0 and b > 0")


@dataclass(frozen=True)
class ChainConfig:
    burn_in: int = 500
    iterations: int = 5000
    thin: int = 1
    n_chains: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.burn_in < 0 or self.iterations < 1 or self.thin < 1 or self.n_chains < 1:
            raise ModelError("chain configuration values out of range")
        if self.seed < 0:
            raise ModelError("seed must be a non-negative integer")

    @property
    def n_kept(self) -> int:
        return self.iterations // self.thin


class GibbsModel:
    """Preprocessed arrays for one model: fixed design, response, and
    per-classification cluster->units structures."""

    def __init__(self, spec: ModelSpec, data: Dataset):
        spec.check_against(data)
        self.spec = spec
        self.n = data.n_units
        self.X = spec.design_matrix(data)
        self.y = data.column(spec.response).astype(float)
        self.p = self.X.shape[1]
        if self.n < self.p:
            raise SingularDesignError(f"{self.n} units cannot identify {self.p} fixed effects")
        xtx = self.X.T @ self.X
        try:
            # lower Cholesky of X'X; failure means rank deficiency
            self.xtx_chol = sla.cholesky(xtx, lower=True)
        except sla.LinAlgError:
            raise SingularDesignError("fixed-effects design matrix is rank deficient") from None

        # cluster-major (CSC) view of each weight matrix for the u sweep
        self.indptr, self.unit_idx, self.w, self.sumw2 = [], [], [], []
        self.unit_sumw2 = []
        self.W = []
        for design in spec.memberships:
            Wc = design.matrix()
            self.W.append(Wc)
            csc = Wc.tocsc()
            self.indptr.append(csc.indptr.astype(np.int64))
            self.unit_idx.append(csc.indices.astype(np.int64))
            self.w.append(csc.data.astype(float))
            self.sumw2.append(np.asarray((csc.multiply(csc)).sum(axis=0)).ravel())
            self.unit_sumw2.append(design.row_sum_weight_squares())

    @property
    def n_classifications(self) -> int:
        return len(self.W)

    def cluster_counts(self) -> list:
        return [d.n_clusters for d in self.spec.memberships]

    def random_effect_offset(self, u) -> np.ndarray:
        offset = np.zeros(self.n)
        for Wc, uc in zip(self.W, u):
            offset += Wc @ uc
        return offset


@dataclass
class GibbsState:
    """Mutable sampler state; ``resid`` is y - X beta - all cluster effects."""

    beta: np.ndarray
    u: list
    sigma2_u: np.ndarray
    sigma2_e: float
    resid: np.ndarray


def initial_state(model: GibbsModel) -> GibbsState:
    """Ordinary least squares for beta, zero cluster effects, and half the
    OLS residual variance split equally among the variance scales."""
    beta, *_ = np.linalg.lstsq(model.X, model.y, rcond=None)
    resid = model.y - model.X @ beta
    dof = max(model.n - model.p, 1)
    s2 = float(resid @ resid) / dof
    n_scales = model.n_classifications + 1
    init = max(0.5 * s2 / n_scales, VARIANCE_FLOOR)
    return GibbsState(
        beta=beta,
        u=[np.zeros(j) for j in model.cluster_counts()],
        sigma2_u=np.full(model.n_classifications, init),
        sigma2_e=init,
        resid=resid,
    )


def full_conditional_beta(model: GibbsModel, state: GibbsState) -> tuple[np.ndarray, np.ndarray]:
    """Mean (X'X)^-1 X'r and covariance sigma_e^2 (X'X)^-1 of beta given the
    cluster effects, where r removes every random-effect contribution."""
    r = state.resid + model.X @ state.beta
    mean = sla.cho_solve((model.xtx_chol, True), model.X.T @ r)
    xtx_inv = sla.cho_solve((model.xtx_chol, True), np.eye(model.p))
    return mean, state.sigma2_e * xtx_inv


def full_conditional_u(model: GibbsModel, state: GibbsState, c: int, j: int) -> tuple[float, float]:
    """Normal mean/variance for cluster j of classification c given the rest.

    A cluster with no memberships falls back to its prior N(0, sigma_c^2).
    """
    lo, hi = model.indptr[c][j], model.indptr[c][j + 1]
    sumw2 = model.sumw2[c][j]
    d = 1.0 / state.sigma2_u[c] + sumw2 / state.sigma2_e
    # r^(-j) adds cluster j's own contribution back into the residual;
    # accumulation order matches the compiled sweep so both paths agree bitwise
    s = sumw2 * state.u[c][j]
    for k in range(lo, hi):
        s += model.w[c][k] * state.resid[model.unit_idx[c][k]]
    return s / (state.sigma2_e * d), 1.0 / d


def full_conditional_variances(model: GibbsModel, state: GibbsState, priors: PriorConfig) -> list:
    """Per-scale inverse-gamma (shape, rate): one pair per classification in
    order, then the residual variance."""
    out = []
    for uc in state.u:
        out.append((priors.a + uc.shape[0] / 2.0, priors.b + float(uc @ uc) / 2.0))
    out.append((priors.a + model.n / 2.0, priors.b + float(state.resid @ state.resid) / 2.0))
    return out


def _draw_inverse_gamma(rng, shape, rate) -> float:
    g = rng.gamma(shape, 1.0 / rate)
    if g <= 0.0 or not np.isfinite(g):
        return np.inf
    return 1.0 / g


def _check_finite(state: GibbsState, iteration: int) -> None:
    if not (
        np.isfinite(state.sigma2_e)
        and np.all(np.isfinite(state.sigma2_u))
        and np.all(np.isfinite(state.beta))
        and np.all(np.isfinite(state.resid))
    ):
        raise DivergenceError(iteration)


def _sweep(model: GibbsModel, state: GibbsState, priors: PriorConfig, rng) -> None:
    """One full scan: beta, cluster effects per classification, variances."""
    mean, _ = full_conditional_beta(model, state)
    z = rng.standard_normal(model.p)
    beta_new = mean + np.sqrt(state.sigma2_e) * sla.solve_triangular(
        model.xtx_chol, z, trans="T", lower=True
    )
    state.resid -= model.X @ (beta_new - state.beta)
    state.beta = beta_new

    for c in range(model.n_classifications):
        _kernels.u_sweep(
            state.resid,
            state.u[c],
            model.indptr[c],
            model.unit_idx[c],
            model.w[c],
            model.sumw2[c],
            state.sigma2_u[c],
            state.sigma2_e,
            rng,
        )

    params = full_conditional_variances(model, state, priors)
    for c in range(model.n_classifications):
        state.sigma2_u[c] = _draw_inverse_gamma(rng, *params[c])
    state.sigma2_e = _draw_inverse_gamma(rng, *params[-1])


@dataclass(frozen=True)
class ParameterSummary:
    name: str
    mean: float
    sd: float
    q2_5: float
    median: float
    q97_5: float
    ess: float
    rhat: float   # NaN when only one chain


@dataclass
class FitResult:
    """Posterior draws, summaries, diagnostics, and variance partitions."""

    param_names: list
    draws: dict                 # name -> (n_chains, n_kept)
    summaries: list             # ParameterSummary, params then vpc rows
    weighted_vpc: dict          # classification -> per-unit weighted VPC, averaged
    chain_config: ChainConfig
    prior_config: PriorConfig
    classification_names: tuple
    warnings: list = field(default_factory=list)

    def summary(self, name: str) -> ParameterSummary:
        for s in self.summaries:
            if s.name == name:
                return s
        raise KeyError(name)

    @property
    def n_chains(self) -> int:
        return self.chain_config.n_chains

    def interval(self, name: str) -> tuple[float, float]:
        s = self.summary(name)
        return s.q2_5, s.q97_5

    def stored_iterations(self) -> np.ndarray:
        cfg = self.chain_config
        return cfg.burn_in + cfg.thin * np.arange(1, cfg.n_kept + 1)


def variance_partition(sigma2_u, sigma2_e):
    """Share of total variance attributed to each classification."""
    s2u = np.asarray(sigma2_u, dtype=float)
    total = s2u.sum(axis=0) + sigma2_e
    return s2u / total


def weighted_variance_partition(unit_sumw2, sigma2_u, sigma2_e) -> np.ndarray:
    """Per-unit variance shares that account for weight shrinkage.

    With weights w_ji, classification c contributes sigma_c^2 sum_j w_ji^2
    to unit i's marginal variance, so equal weights 1/m shrink the
    contribution to sigma_c^2/m. Returns an (n_classifications, n_units)
    array of shares.
    """
    s2u = np.asarray(sigma2_u, dtype=float)
    contrib = np.vstack([s2 * sw2 for s2, sw2 in zip(s2u, unit_sumw2)])
    return contrib / (contrib.sum(axis=0) + sigma2_e)


def _summarize(name, chains, total_kept) -> ParameterSummary:
    pooled = chains.ravel()
    q = np.quantile(pooled, [0.025, 0.5, 0.975])
    if chains.shape[1] >= 10:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            ess = float(sum(effective_sample_size(chain) for chain in chains))
        ess = min(ess, float(total_kept))
    else:
        ess = float("nan")
    rhat = split_rhat(chains) if (chains.shape[0] >= 2 and chains.shape[1] >= 4) else float("nan")
    return ParameterSummary(
        name=name,
        mean=float(pooled.mean()),
        sd=float(pooled.std(ddof=1)) if pooled.size > 1 else 0.0,
        q2_5=float(q[0]),
        median=float(q[1]),
        q97_5=float(q[2]),
        ess=ess,
        rhat=float(rhat),
    )


def parameter_names(spec: ModelSpec) -> list:
    names = ["beta0"] + [f"beta_{c}" for c in spec.fixed_covariates]
    names += [f"sigma2_u_{name}" for name in spec.classification_names]
    names.append("sigma2_e")
    return names


def run_gibbs(
    spec: ModelSpec,
    data: Dataset,
    priors: PriorConfig | None = None,
    chain: ChainConfig | None = None,
    store_u: bool = False,
) -> FitResult:
    """Fit the model by Gibbs sampling.

    Runs ``chain.n_chains`` chains from the same OLS-based start with
    independent RNG streams derived from (seed, chain index); stores
    post-burn-in draws every ``thin`` sweeps. Cluster-effect draws are kept
    only when ``store_u`` is set, since J can be large.
    """
    priors = priors or PriorConfig()
    chain = chain or ChainConfig()
    model = GibbsModel(spec, data)

    n_kept = chain.n_kept
    if n_kept < 1:
        raise ModelError("thin exceeds iterations: nothing would be stored")
    C = model.n_classifications
    names = parameter_names(spec)
    u_names = []
    if store_u:
        for design in spec.memberships:
            u_names += [f"u_{design.name}[{label}]" for label in design.classification.cluster_labels]

    beta_draws = np.empty((chain.n_chains, n_kept, model.p))
    s2u_draws = np.empty((chain.n_chains, n_kept, C))
    s2e_draws = np.empty((chain.n_chains, n_kept))
    u_draws = (
        [np.empty((chain.n_chains, n_kept, j)) for j in model.cluster_counts()]
        if store_u
        else None
    )

    for k in range(chain.n_chains):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=chain.seed, spawn_key=(k,)))
        state = initial_state(model)
        kept = 0
        for it in range(chain.burn_in + chain.iterations):
            _sweep(model, state, priors, rng)
            _check_finite(state, it)
            if it >= chain.burn_in and (it - chain.burn_in + 1) % chain.thin == 0:
                beta_draws[k, kept] = state.beta
                s2u_draws[k, kept] = state.sigma2_u
                s2e_draws[k, kept] = state.sigma2_e
                if store_u:
                    for c in range(C):
                        u_draws[c][k, kept] = state.u[c]
                kept += 1

    draws = {}
    for i, name in enumerate(["beta0"] + [f"beta_{c}" for c in spec.fixed_covariates]):
        draws[name] = beta_draws[:, :, i]
    for c, cname in enumerate(spec.classification_names):
        draws[f"sigma2_u_{cname}"] = s2u_draws[:, :, c]
    draws["sigma2_e"] = s2e_draws
    if store_u:
        pos = 0
        for c in range(C):
            for j in range(model.cluster_counts()[c]):
                draws[u_names[pos]] = u_draws[c][:, :, j]
                pos += 1

    total_kept = chain.n_chains * n_kept
    summaries = [_summarize(name, draws[name], total_kept) for name in names + u_names]

    vpc = variance_partition(
        np.stack([s2u_draws[:, :, c].ravel() for c in range(C)]), s2e_draws.ravel()
    )
    for c, cname in enumerate(spec.classification_names):
        summaries.append(
            _summarize(f"vpc_{cname}", vpc[c].reshape(chain.n_chains, n_kept), total_kept)
        )

    post_s2u = np.array([s2u_draws[:, :, c].mean() for c in range(C)])
    post_s2e = float(s2e_draws.mean())
    wvpc = weighted_variance_partition(model.unit_sumw2, post_s2u, post_s2e)
    weighted_vpc = {
        cname: float(wvpc[c].mean()) for c, cname in enumerate(spec.classification_names)
    }

    notes = []
    for name in names:
        chains = draws[name]
        if chains.shape[1] >= 2 and np.ptp(chains) == 0.0:
            notes.append(f"parameter {name} produced a constant chain")

    return FitResult(
        param_names=names + u_names,
        draws=draws,
        summaries=summaries,
        weighted_vpc=weighted_vpc,
        chain_config=chain,
        prior_config=priors,
        classification_names=spec.classification_names,
        warnings=notes,
    )
