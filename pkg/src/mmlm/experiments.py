"""Replicated simulation experiments.

Three harnesses built on the simulator and the Gibbs fitter:

  * parameter recovery: coverage of 95% credible intervals at known truth;
  * ignoring-membership bias: correct fit vs a fit on the design collapsed
    to each unit's highest-weight cluster, tracking the between-cluster
    variance estimates;
  * weight-scheme sensitivity: as-given vs equal weights when the data were
    generated under unequal (proportional) weights.

Replicates are independent: replicate r derives its simulation and fit
seeds from (master seed, r), so results do not depend on worker scheduling.
Rows for failed replicates record the error instead of aborting the run.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .core import ModelSpec, collapse_to_single_membership
from .errors import MmlmError
from .gibbs import ChainConfig, run_gibbs
from .simulate import SimConfig, model_spec, simulate
from .weights import reweight_scheme


def replicate_seeds(master_seed: int, replicate: int) -> tuple[int, int]:
    """Deterministic (simulation seed, fit seed) pair for one replicate."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(replicate,))
    sim_seed, fit_seed = ss.generate_state(2, dtype=np.uint64)
    return int(sim_seed), int(fit_seed)


def _run_replicates(worker, tasks, workers):
    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1 or len(tasks) <= 1:
        return [worker(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, tasks, chunksize=1))


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


# ---------------------------------------------------------------------------
# parameter recovery
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RecoveryRow:
    replicate: int
    seed: int
    status: str                  # "ok" or an error message
    estimates: dict              # name -> posterior mean
    intervals: dict              # name -> (2.5%, 97.5%)
    covered: dict                # name -> bool


@dataclass(frozen=True)
class RecoveryReport:
    rows: tuple
    truth: dict
    coverage: dict               # name -> fraction of ok replicates covering truth
    n_ok: int

    def write_csv(self, path) -> None:
        names = list(self.truth)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            header = ["replicate", "seed", "status"]
            for name in names:
                header += [f"{name}_mean", f"{name}_lo", f"{name}_hi", f"{name}_covered"]
            writer.writerow(header)
            for row in self.rows:
                out = [row.replicate, row.seed, row.status]
                for name in names:
                    if row.status == "ok":
                        lo, hi = row.intervals[name]
                        out += [_fmt(row.estimates[name]), _fmt(lo), _fmt(hi),
                                int(row.covered[name])]
                    else:
                        out += ["", "", "", ""]
                writer.writerow(out)
            footer = ["coverage", "", f"ok={self.n_ok}/{len(self.rows)}"]
            for name in names:
                footer += ["", "", "", _fmt(self.coverage[name])]
            writer.writerow(footer)


def true_parameter_values(cfg: SimConfig) -> dict:
    truth = {"beta0": cfg.beta[0]}
    for name, b in zip(cfg.covariate_names, cfg.beta[1:]):
        truth[f"beta_{name}"] = b
    for c in cfg.classifications:
        truth[f"sigma2_u_{c.name}"] = c.sigma2_u
    truth["sigma2_e"] = cfg.sigma2_e
    return truth


def _recovery_replicate(task) -> RecoveryRow:
    cfg, chain, rep = task
    sim_seed, fit_seed = replicate_seeds(cfg.seed, rep)
    truth = true_parameter_values(cfg)
    try:
        sim = simulate(replace(cfg, seed=sim_seed))
        fit = run_gibbs(sim.spec, sim.dataset, chain=replace(chain, seed=fit_seed))
    except (MmlmError, np.linalg.LinAlgError) as exc:
        return RecoveryRow(rep, sim_seed, f"error: {exc}", {}, {}, {})
    estimates, intervals, covered = {}, {}, {}
    for name, value in truth.items():
        s = fit.summary(name)
        estimates[name] = s.mean
        intervals[name] = (s.q2_5, s.q97_5)
        covered[name] = bool(s.q2_5 <= value <= s.q97_5)
    return RecoveryRow(rep, sim_seed, "ok", estimates, intervals, covered)


def parameter_recovery(cfg: SimConfig, chain: ChainConfig, replicates: int,
                       workers=None) -> RecoveryReport:
    """Coverage of 95% credible intervals over seeded replicates."""
    tasks = [(cfg, chain, r) for r in range(replicates)]
    rows = tuple(_run_replicates(_recovery_replicate, tasks, workers))
    truth = true_parameter_values(cfg)
    ok = [row for row in rows if row.status == "ok"]
    coverage = {
        name: (sum(row.covered[name] for row in ok) / len(ok)) if ok else math.nan
        for name in truth
    }
    return RecoveryReport(rows=rows, truth=truth, coverage=coverage, n_ok=len(ok))


# ---------------------------------------------------------------------------
# ignoring-membership bias
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BiasRow:
    replicate: int
    seed: int
    status: str
    sigma2_u_correct: dict       # classification -> posterior mean
    sigma2_u_collapsed: dict
    sigma2_e_correct: float
    sigma2_e_collapsed: float


@dataclass(frozen=True)
class BiasReport:
    rows: tuple
    classification_names: tuple
    mean_correct: dict
    mean_collapsed: dict
    fraction_collapsed_below: dict
    n_ok: int

    def write_csv(self, path) -> None:
        names = self.classification_names
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            header = ["replicate", "seed", "status"]
            for name in names:
                header += [
                    f"sigma2_u_{name}_correct",
                    f"sigma2_u_{name}_collapsed",
                    f"{name}_collapsed_lt_correct",
                ]
            header += ["sigma2_e_correct", "sigma2_e_collapsed"]
            writer.writerow(header)
            for row in self.rows:
                out = [row.replicate, row.seed, row.status]
                for name in names:
                    if row.status == "ok":
                        a = row.sigma2_u_correct[name]
                        b = row.sigma2_u_collapsed[name]
                        out += [_fmt(a), _fmt(b), int(b < a)]
                    else:
                        out += ["", "", ""]
                out += [_fmt(row.sigma2_e_correct), _fmt(row.sigma2_e_collapsed)]
                writer.writerow(out)
            footer = ["mean", "", f"ok={self.n_ok}/{len(self.rows)}"]
            for name in names:
                footer += [
                    _fmt(self.mean_correct[name]),
                    _fmt(self.mean_collapsed[name]),
                    _fmt(self.fraction_collapsed_below[name]),
                ]
            ok = [r for r in self.rows if r.status == "ok"]
            footer += [
                _fmt(float(np.mean([r.sigma2_e_correct for r in ok])) if ok else None),
                _fmt(float(np.mean([r.sigma2_e_collapsed for r in ok])) if ok else None),
            ]
            writer.writerow(footer)


def _bias_replicate(task) -> BiasRow:
    cfg, chain, rep = task
    sim_seed, fit_seed = replicate_seeds(cfg.seed, rep)
    names = tuple(c.name for c in cfg.classifications)
    try:
        sim = simulate(replace(cfg, seed=sim_seed))
        fit_cfg = replace(chain, seed=fit_seed)
        correct = run_gibbs(sim.spec, sim.dataset, chain=fit_cfg)
        collapsed_spec = ModelSpec(
            response=sim.spec.response,
            fixed_covariates=sim.spec.fixed_covariates,
            memberships=tuple(collapse_to_single_membership(d) for d in sim.spec.memberships),
        )
        collapsed = run_gibbs(collapsed_spec, sim.dataset, chain=fit_cfg)
    except (MmlmError, np.linalg.LinAlgError) as exc:
        return BiasRow(rep, sim_seed, f"error: {exc}", {}, {}, math.nan, math.nan)
    return BiasRow(
        replicate=rep,
        seed=sim_seed,
        status="ok",
        sigma2_u_correct={n: correct.summary(f"sigma2_u_{n}").mean for n in names},
        sigma2_u_collapsed={n: collapsed.summary(f"sigma2_u_{n}").mean for n in names},
        sigma2_e_correct=correct.summary("sigma2_e").mean,
        sigma2_e_collapsed=collapsed.summary("sigma2_e").mean,
    )


def bias_experiment(cfg: SimConfig, chain: ChainConfig, replicates: int,
                    workers=None) -> BiasReport:
    """Fit each simulated dataset twice: with the true membership design and
    with every design collapsed to single membership."""
    tasks = [(cfg, chain, r) for r in range(replicates)]
    rows = tuple(_run_replicates(_bias_replicate, tasks, workers))
    names = tuple(c.name for c in cfg.classifications)
    ok = [r for r in rows if r.status == "ok"]
    mean_correct, mean_collapsed, frac_below = {}, {}, {}
    for name in names:
        if ok:
            a = np.array([r.sigma2_u_correct[name] for r in ok])
            b = np.array([r.sigma2_u_collapsed[name] for r in ok])
            mean_correct[name] = float(a.mean())
            mean_collapsed[name] = float(b.mean())
            frac_below[name] = float(np.mean(b < a))
        else:
            mean_correct[name] = mean_collapsed[name] = frac_below[name] = math.nan
    return BiasReport(
        rows=rows,
        classification_names=names,
        mean_correct=mean_correct,
        mean_collapsed=mean_collapsed,
        fraction_collapsed_below=frac_below,
        n_ok=len(ok),
    )


# ---------------------------------------------------------------------------
# weight-scheme sensitivity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SensitivityRow:
    replicate: int
    seed: int
    status: str
    sigma2_u_as_given: dict
    sigma2_u_equal: dict


@dataclass(frozen=True)
class SensitivityReport:
    rows: tuple
    classification_names: tuple
    truth: dict
    mean_abs_error_as_given: dict
    mean_abs_error_equal: dict
    n_ok: int

    def write_csv(self, path) -> None:
        names = self.classification_names
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            header = ["replicate", "seed", "status"]
            for name in names:
                header += [f"sigma2_u_{name}_as_given", f"sigma2_u_{name}_equal"]
            writer.writerow(header)
            for row in self.rows:
                out = [row.replicate, row.seed, row.status]
                for name in names:
                    if row.status == "ok":
                        out += [_fmt(row.sigma2_u_as_given[name]), _fmt(row.sigma2_u_equal[name])]
                    else:
                        out += ["", ""]
                writer.writerow(out)
            footer = ["mean_abs_error", "", f"ok={self.n_ok}/{len(self.rows)}"]
            for name in names:
                footer += [
                    _fmt(self.mean_abs_error_as_given[name]),
                    _fmt(self.mean_abs_error_equal[name]),
                ]
            writer.writerow(footer)


def _sensitivity_replicate(task) -> SensitivityRow:
    cfg, chain, rep = task
    sim_seed, fit_seed = replicate_seeds(cfg.seed, rep)
    names = tuple(c.name for c in cfg.classifications)
    try:
        sim = simulate(replace(cfg, seed=sim_seed))
        fit_cfg = replace(chain, seed=fit_seed)
        as_given = run_gibbs(sim.spec, sim.dataset, chain=fit_cfg)
        equal_spec = ModelSpec(
            response=sim.spec.response,
            fixed_covariates=sim.spec.fixed_covariates,
            memberships=tuple(reweight_scheme(d, "equal") for d in sim.spec.memberships),
        )
        equal = run_gibbs(equal_spec, sim.dataset, chain=fit_cfg)
    except (MmlmError, np.linalg.LinAlgError) as exc:
        return SensitivityRow(rep, sim_seed, f"error: {exc}", {}, {})
    return SensitivityRow(
        replicate=rep,
        seed=sim_seed,
        status="ok",
        sigma2_u_as_given={n: as_given.summary(f"sigma2_u_{n}").mean for n in names},
        sigma2_u_equal={n: equal.summary(f"sigma2_u_{n}").mean for n in names},
    )


def sensitivity_experiment(cfg: SimConfig, chain: ChainConfig, replicates: int,
                           workers=None) -> SensitivityReport:
    """Compare between-cluster variance recovery under the generating
    weights vs an equal-weights refit of the same data."""
    tasks = [(cfg, chain, r) for r in range(replicates)]
    rows = tuple(_run_replicates(_sensitivity_replicate, tasks, workers))
    names = tuple(c.name for c in cfg.classifications)
    truth = {c.name: c.sigma2_u for c in cfg.classifications}
    ok = [r for r in rows if r.status == "ok"]
    err_given, err_equal = {}, {}
    for name in names:
        if ok:
            err_given[name] = float(
                np.mean([abs(r.sigma2_u_as_given[name] - truth[name]) for r in ok])
            )
            err_equal[name] = float(
                np.mean([abs(r.sigma2_u_equal[name] - truth[name]) for r in ok])
            )
        else:
            err_given[name] = err_equal[name] = math.nan
    return SensitivityReport(
        rows=rows,
        classification_names=names,
        truth=truth,
        mean_abs_error_as_given=err_given,
        mean_abs_error_equal=err_equal,
        n_ok=len(ok),
    )
