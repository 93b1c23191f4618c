"""Synthetic data generation for recovery and misspecification experiments.

Generates membership structures (random clusters per unit, equal or random
proportion weights) and Gaussian responses

    y_i = x_i' beta + sum_c sum_j w_{j,i} u_j + e_i,
    u_j ~ N(0, sigma_u^2),  e_i ~ N(0, sigma_e^2)

with every draw keyed to the config seed, so identical configs give
bit-identical output. Cluster effects are drawn for all clusters, including
any a design never references.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Classification, Dataset, MembershipDesign, ModelSpec, Parameters, linear_predictor
from .errors import InfeasibleCardinalityError, ModelError

SCHEMES = ("equal", "random")


@dataclass(frozen=True)
class ClassificationConfig:
    """Simulation settings for one random classification.

    ``cardinality`` is a fixed membership count m, or an inclusive (lo, hi)
    range sampled uniformly per unit. ``scheme`` is "equal" (weights 1/m) or
    "random" (normalized uniform scores, a flat Dirichlet).
    """

    name: str
    n_clusters: int
    cardinality: object = 1
    scheme: str = "equal"
    sigma2_u: float = 1.0

    def __post_init__(self):
        if self.n_clusters < 1:
            raise ModelError(f"{self.name!r}: n_clusters must be >= 1")
        lo, hi = self.cardinality_range()
        if not (1 <= lo <= hi):
            raise ModelError(f"{self.name!r}: bad cardinality {self.cardinality!r}")
        if hi > self.n_clusters:
            raise InfeasibleCardinalityError(
                f"{self.name!r}: up to {hi} memberships requested from "
                f"{self.n_clusters} clusters"
            )
        if self.scheme not in SCHEMES:
            raise ModelError(f"{self.name!r}: scheme must be one of {SCHEMES}")
        if self.sigma2_u < 0:
            raise ModelError(f"{self.name!r}: sigma2_u must be >= 0")

    def cardinality_range(self) -> tuple:
        if isinstance(self.cardinality, (int, np.integer)):
            return int(self.cardinality), int(self.cardinality)
        lo, hi = self.cardinality
        return int(lo), int(hi)

    def labels(self) -> tuple:
        width = len(str(self.n_clusters))
        return tuple(f"{self.name}{j + 1:0{width}d}" for j in range(self.n_clusters))


@dataclass(frozen=True)
class SimConfig:
    """Complete generative description of one synthetic dataset.

    ``beta`` is the true fixed-effects vector, intercept first; one standard
    normal covariate is drawn per remaining entry. Variances may be zero
    here (useful boundary cases) even though fitted variances never are.
    """

    n_units: int
    classifications: tuple
    beta: tuple = (0.0,)
    sigma2_e: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "classifications", tuple(self.classifications))
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if self.n_units < 1:
            raise ModelError("n_units must be >= 1")
        if len(self.classifications) < 1:
            raise ModelError("at least one classification is required")
        names = [c.name for c in self.classifications]
        if len(set(names)) != len(names):
            raise ModelError(f"classification names must be unique, got {names}")
        if self.sigma2_e < 0:
            raise ModelError("sigma2_e must be >= 0")
        if len(self.beta) < 1:
            raise ModelError("beta needs at least the intercept")

    @property
    def covariate_names(self) -> tuple:
        k = len(self.beta) - 1
        if k == 0:
            return ()
        if k == 1:
            return ("x",)
        return tuple(f"x{i + 1}" for i in range(k))

    def unit_ids(self) -> tuple:
        width = len(str(self.n_units))
        return tuple(f"u{i + 1:0{width}d}" for i in range(self.n_units))


@dataclass(frozen=True)
class SimResult:
    dataset: Dataset
    spec: ModelSpec
    params: Parameters   # the realized truth, cluster effects included


def _design_rng(cfg: SimConfig, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(0, index)))


def _response_rng(cfg: SimConfig) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(1,)))


def simulate_design(cfg: SimConfig, index: int = 0) -> MembershipDesign:
    """Draw the membership design for classification ``index``.

    Each unit gets m distinct clusters sampled uniformly without
    replacement, weighted per the classification's scheme.
    """
    ccfg = cfg.classifications[index]
    rng = _design_rng(cfg, index)
    lo, hi = ccfg.cardinality_range()
    classification = Classification(ccfg.name, ccfg.labels())
    rows = []
    for _ in range(cfg.n_units):
        m = int(rng.integers(lo, hi + 1)) if hi > lo else lo
        clusters = np.sort(rng.choice(ccfg.n_clusters, size=m, replace=False))
        if ccfg.scheme == "equal":
            w = np.full(m, 1.0 / m)
        else:
            scores = 1.0 - rng.random(m)   # in (0, 1], so no zero weights
            w = scores / scores.sum()
        rows.append(list(zip(clusters.tolist(), w.tolist())))
    return MembershipDesign(classification, rows)


def simulate_designs(cfg: SimConfig) -> tuple:
    return tuple(simulate_design(cfg, i) for i in range(len(cfg.classifications)))


def simulate_response(cfg: SimConfig, designs) -> tuple[Dataset, Parameters]:
    """Draw cluster effects, covariates, and residuals; return the dataset
    together with the realized true parameters for oracle checks."""
    designs = tuple(designs)
    if len(designs) != len(cfg.classifications):
        raise ModelError(
            f"{len(designs)} designs for {len(cfg.classifications)} classifications"
        )
    rng = _response_rng(cfg)
    u = tuple(
        rng.normal(0.0, np.sqrt(ccfg.sigma2_u), size=ccfg.n_clusters)
        for ccfg in cfg.classifications
    )
    columns = {}
    for name in cfg.covariate_names:
        columns[name] = rng.normal(size=cfg.n_units)
    e = rng.normal(0.0, np.sqrt(cfg.sigma2_e), size=cfg.n_units)

    params = Parameters(
        beta=np.array(cfg.beta),
        sigma2_e=cfg.sigma2_e,
        sigma2_u=np.array([c.sigma2_u for c in cfg.classifications]),
        u=u,
    )
    columns["y"] = np.zeros(cfg.n_units)   # placeholder until eta is known
    data = Dataset(unit_ids=cfg.unit_ids(), columns=columns)
    spec = ModelSpec(response="y", fixed_covariates=cfg.covariate_names, memberships=designs)
    eta = linear_predictor(spec, data, params)
    columns["y"] = eta + e
    return Dataset(unit_ids=cfg.unit_ids(), columns=columns), params


def model_spec(cfg: SimConfig, designs) -> ModelSpec:
    return ModelSpec(response="y", fixed_covariates=cfg.covariate_names, memberships=tuple(designs))


def simulate(cfg: SimConfig) -> SimResult:
    """Designs plus response in one call."""
    designs = simulate_designs(cfg)
    dataset, params = simulate_response(cfg, designs)
    return SimResult(dataset=dataset, spec=model_spec(cfg, designs), params=params)
