"""Command-line surface.

Commands: validate, fit, simulate, bias-experiment, sensitivity. All
outputs are CSV/JSON files in --out; stdout carries progress lines unless
--quiet is given; diagnostics go to stderr. Exit codes: 0 success, 2 bad
data or usage, 3 inconsistent model, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import io
from .core import Dataset, ModelSpec, validate_design
from .errors import IngestError, MmlmError
from .exact import MarginalModel, fit_ml
from .experiments import bias_experiment, sensitivity_experiment
from .gibbs import (
    ChainConfig,
    PriorConfig,
    run_gibbs,
    variance_partition,
    weighted_variance_partition,
)
from .simulate import ClassificationConfig, SimConfig, simulate
from .weights import reweight_scheme


def _add_data_options(p):
    p.add_argument("--data", required=True, help="unit table CSV (unit_id + numeric columns)")
    p.add_argument(
        "--memberships",
        action="append",
        required=True,
        metavar="FILE",
        help="membership CSV (unit_id,classification,cluster_id,weight); repeat once per classification",
    )
    p.add_argument(
        "--normalize",
        action="store_true",
        help="rescale per-unit weights to sum to 1 (accepts raw exposure counts)",
    )


def _add_model_options(p):
    p.add_argument("--response", required=True, help="response column name")
    p.add_argument(
        "--covariates",
        default="",
        help="comma-separated fixed covariate columns (intercept is implicit)",
    )


def _add_chain_options(p, burnin=500, iters=5000, chains=2):
    p.add_argument("--burnin", type=int, default=burnin)
    p.add_argument("--iters", type=int, default=iters)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--chains", type=int, default=chains)
    p.add_argument("--prior-a", type=float, default=0.001, help="inverse-gamma shape")
    p.add_argument("--prior-b", type=float, default=0.001, help="inverse-gamma rate")


def _add_sim_options(p):
    p.add_argument("--n-units", type=int, required=True)
    p.add_argument(
        "--classification",
        action="append",
        required=True,
        metavar="NAME,J,M[,SCHEME]",
        help="e.g. teacher,100,1-3,equal  (M is a fixed count or lo-hi range; "
        "scheme equal or random)",
    )
    p.add_argument("--beta", default="0.0", help="comma-separated true coefficients, intercept first")
    p.add_argument("--sigma2-u", default="", help="comma-separated true variances, one per classification (default 1)")
    p.add_argument("--sigma2-e", type=float, default=1.0)


def _parse_floats(text):
    return tuple(float(t) for t in text.split(",") if t.strip() != "")


def _parse_classification(token, sigma2_u):
    parts = token.split(",")
    if len(parts) not in (3, 4):
        raise IngestError(f"--classification expects NAME,J,M[,SCHEME], got {token!r}")
    name, j_text, m_text = parts[:3]
    scheme = parts[3] if len(parts) == 4 else "equal"
    if scheme == "random-proportions":
        scheme = "random"
    if "-" in m_text:
        lo, hi = m_text.split("-", 1)
        cardinality = (int(lo), int(hi))
    else:
        cardinality = int(m_text)
    return ClassificationConfig(
        name=name,
        n_clusters=int(j_text),
        cardinality=cardinality,
        scheme=scheme,
        sigma2_u=sigma2_u,
    )


def _sim_config(args) -> SimConfig:
    tokens = args.classification
    s2u = _parse_floats(args.sigma2_u) if args.sigma2_u else (1.0,) * len(tokens)
    if len(s2u) != len(tokens):
        raise IngestError(
            f"--sigma2-u lists {len(s2u)} values for {len(tokens)} classifications"
        )
    return SimConfig(
        n_units=args.n_units,
        classifications=tuple(
            _parse_classification(tok, s2) for tok, s2 in zip(tokens, s2u)
        ),
        beta=_parse_floats(args.beta),
        sigma2_e=args.sigma2_e,
        seed=args.seed,
    )


def _chain_config(args) -> ChainConfig:
    return ChainConfig(
        burn_in=args.burnin,
        iterations=args.iters,
        thin=args.thin,
        n_chains=args.chains,
        seed=args.seed,
    )


def _model_spec(args, data: Dataset, designs) -> ModelSpec:
    covariates = tuple(c for c in args.covariates.split(",") if c.strip() != "")
    return ModelSpec(response=args.response, fixed_covariates=covariates, memberships=tuple(designs))


def _say(args, message) -> None:
    if not args.quiet:
        print(message)


def _prepare(args):
    """Ingest, apply complete-case filtering, and build the model spec."""
    data, designs = io.ingest(args.data, args.memberships, normalize=args.normalize)
    covariates = [c for c in args.covariates.split(",") if c.strip() != ""]
    data, designs, dropped = io.complete_cases(data, designs, [args.response, *covariates])
    if dropped:
        print(f"warning: dropped {dropped} rows with missing model values", file=sys.stderr)
    spec = _model_spec(args, data, designs)
    return data, spec


def _report_header(spec: ModelSpec, lines) -> None:
    lines.append("multiple membership model")
    lines.append(f"  response: {spec.response}")
    fixed = ", ".join(("intercept", *spec.fixed_covariates))
    lines.append(f"  fixed effects: {fixed}")
    for d in spec.memberships:
        lines.append(f"  classification {d.name}: {d.n_clusters} clusters, {d.n_units} units")


def _write_gibbs_outputs(args, spec, fit, outdir):
    io.write_summary_csv(os.path.join(outdir, "summary.csv"), fit)
    io.write_summary_jsonl(os.path.join(outdir, "summary.jsonl"), fit)
    io.write_draws_csv(os.path.join(outdir, "draws.csv"), fit)
    lines = []
    _report_header(spec, lines)
    cfg = fit.chain_config
    lines.append(
        f"  engine: gibbs ({cfg.n_chains} chains x {cfg.iterations} iterations, "
        f"burn-in {cfg.burn_in}, thin {cfg.thin}, seed {cfg.seed})"
    )
    lines.append("")
    lines.append(f"{'parameter':<28}{'mean':>12}{'sd':>12}{'2.5%':>12}{'median':>12}{'97.5%':>12}{'ess':>10}{'rhat':>8}")
    for s in fit.summaries:
        rhat = "" if math.isnan(s.rhat) else f"{s.rhat:.3f}"
        ess = "" if math.isnan(s.ess) else f"{s.ess:.0f}"
        lines.append(
            f"{s.name:<28}{s.mean:>12.5g}{s.sd:>12.5g}{s.q2_5:>12.5g}"
            f"{s.median:>12.5g}{s.q97_5:>12.5g}{ess:>10}{rhat:>8}"
        )
    lines.append("")
    lines.append("variance partition (posterior mean share of total variance)")
    for name in fit.classification_names:
        s = fit.summary(f"vpc_{name}")
        lines.append(
            f"  {name}: {s.mean:.4f} conventional, "
            f"{fit.weighted_vpc[name]:.4f} per-unit weighted average"
        )
    if fit.warnings:
        lines.append("")
        for w in fit.warnings:
            lines.append(f"warning: {w}")
    with open(os.path.join(outdir, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_exact_outputs(args, spec, data, ml, outdir):
    s2u = ml.variances[:-1]
    vpc = variance_partition(s2u, ml.sigma2_e)
    unit_sumw2 = [d.row_sum_weight_squares() for d in spec.memberships]
    wvpc = weighted_variance_partition(unit_sumw2, s2u, ml.sigma2_e)
    names = spec.classification_names
    extra = {
        "vpc": {name: float(vpc[c]) for c, name in enumerate(names)},
        "weighted_vpc": {name: float(wvpc[c].mean()) for c, name in enumerate(names)},
    }
    io.write_estimates_json(os.path.join(outdir, "estimates.json"), ml, extra)
    beta_names = ["beta0"] + [f"beta_{c}" for c in spec.fixed_covariates]
    with open(os.path.join(outdir, "summary.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write("parameter,estimate\n")
        for name, b in zip(beta_names, ml.beta):
            fh.write(f"{name},{b!r}\n")
        for name, v in ml.variance_dict().items():
            fh.write(f"{name},{v!r}\n")
    lines = []
    _report_header(spec, lines)
    lines.append(f"  engine: exact maximum likelihood ({ml.n_iter} iterations)")
    lines.append("")
    for name, b in zip(beta_names, ml.beta):
        lines.append(f"  {name:<24}{b:>14.6g}")
    for name, v in ml.variance_dict().items():
        lines.append(f"  {name:<24}{v:>14.6g}")
    lines.append(f"  log-likelihood: {ml.loglik:.6f}")
    if ml.boundary:
        lines.append(f"  variance at zero boundary: {', '.join(ml.boundary)}")
    lines.append("")
    lines.append("variance partition at the ML estimates")
    for c, name in enumerate(names):
        lines.append(
            f"  {name}: {vpc[c]:.4f} conventional, "
            f"{float(wvpc[c].mean()):.4f} per-unit weighted average"
        )
    with open(os.path.join(outdir, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_validate(args) -> int:
    data = io.read_dataset(args.data)
    _say(args, f"dataset: {data.n_units} units, {len(data.columns)} columns")
    total = 0
    for path in args.memberships:
        design, extra = io.read_membership_raw(path, data.unit_ids)
        violations = validate_design(design, data.n_units)
        problems = extra + [
            f"unit {data.unit_ids[v.unit] if 0 <= v.unit < data.n_units else v.unit}: "
            f"{v.kind} ({v.detail})"
            for v in violations
        ]
        if problems:
            total += len(problems)
            print(f"{path}: {len(problems)} violation(s)", file=sys.stderr)
            for p in problems:
                print(f"  {p}", file=sys.stderr)
        else:
            _say(args, f"{path}: pass ({design.name}, {design.n_clusters} clusters)")
    if total:
        print(f"validation failed with {total} violation(s)", file=sys.stderr)
        return 2
    _say(args, "all membership designs pass")
    return 0


def cmd_fit(args) -> int:
    data, spec = _prepare(args)
    outdir = args.out
    os.makedirs(outdir, exist_ok=True)
    if args.engine == "gibbs":
        fit = run_gibbs(
            spec,
            data,
            priors=PriorConfig(a=args.prior_a, b=args.prior_b),
            chain=_chain_config(args),
            store_u=args.store_u,
        )
        _write_gibbs_outputs(args, spec, fit, outdir)
        _say(args, f"wrote {outdir}/summary.csv, draws.csv, report.txt")
    else:
        ml = fit_ml(MarginalModel(spec, data))
        _write_exact_outputs(args, spec, data, ml, outdir)
        _say(args, f"wrote {outdir}/estimates.json, summary.csv, report.txt")
    return 0


def cmd_simulate(args) -> int:
    cfg = _sim_config(args)
    sim = simulate(cfg)
    outdir = args.out
    os.makedirs(outdir, exist_ok=True)
    io.write_dataset(os.path.join(outdir, "data.csv"), sim.dataset)
    for design in sim.spec.memberships:
        io.write_membership(
            os.path.join(outdir, f"memberships_{design.name}.csv"), sim.dataset, design
        )
    truth = {
        "n_units": cfg.n_units,
        "seed": cfg.seed,
        "beta": list(cfg.beta),
        "sigma2_e": cfg.sigma2_e,
        "sigma2_u": {c.name: c.sigma2_u for c in cfg.classifications},
        "u": {
            d.name: [float(v) for v in u]
            for d, u in zip(sim.spec.memberships, sim.params.u)
        },
    }
    with open(os.path.join(outdir, "truth.json"), "w", encoding="utf-8") as fh:
        json.dump(truth, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _say(args, f"wrote {outdir}/data.csv, memberships_*.csv, truth.json")
    return 0


def cmd_bias_experiment(args) -> int:
    cfg = _sim_config(args)
    chain = _chain_config(args)
    report = bias_experiment(cfg, chain, args.replicates, workers=args.workers)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "bias.csv")
    report.write_csv(path)
    for name in report.classification_names:
        _say(
            args,
            f"{name}: mean sigma2_u correct {report.mean_correct[name]:.4f}, "
            f"collapsed {report.mean_collapsed[name]:.4f}, "
            f"collapsed below correct in {report.fraction_collapsed_below[name]:.0%} "
            f"of {report.n_ok} replicates",
        )
    _say(args, f"wrote {path}")
    return 0


def cmd_sensitivity(args) -> int:
    data, spec = _prepare(args)
    os.makedirs(args.out, exist_ok=True)
    chain = _chain_config(args)
    schemes = [("as-given", spec)]
    equal_spec = ModelSpec(
        response=spec.response,
        fixed_covariates=spec.fixed_covariates,
        memberships=tuple(reweight_scheme(d, "equal") for d in spec.memberships),
    )
    schemes.append(("equal", equal_spec))
    path = os.path.join(args.out, "sensitivity.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("scheme," + ",".join(io.SUMMARY_FIELDS) + "\n")
        for scheme_name, scheme_spec in schemes:
            fit = run_gibbs(scheme_spec, data, chain=chain)
            for s in fit.summaries:
                rec = io._summary_record(s)
                values = [
                    "" if isinstance(v, float) and math.isnan(v) else repr(v)
                    for v in (rec[f] for f in io.SUMMARY_FIELDS[1:])
                ]
                fh.write(",".join([scheme_name, s.name, *values]) + "\n")
            _say(args, f"fitted scheme {scheme_name}")
    _say(args, f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmlm",
        description="Fit and study Gaussian multiple membership multilevel models.",
    )
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check membership files against a dataset")
    _add_data_options(p)
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser("fit", help="fit a model and write summaries")
    _add_data_options(p)
    _add_model_options(p)
    p.add_argument("--engine", choices=("gibbs", "exact"), default="gibbs")
    _add_chain_options(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--store-u", action="store_true", help="store cluster-effect draws")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    _add_sim_options(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser(
        "bias-experiment",
        help="replicate the cost of collapsing memberships to a single cluster",
    )
    _add_sim_options(p)
    _add_chain_options(p, burnin=300, iters=1000, chains=1)
    p.add_argument("--seed", type=int, default=0, help="master seed for replicate streams")
    p.add_argument("--replicates", type=int, required=True)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_bias_experiment)

    p = sub.add_parser("sensitivity", help="fit the model under as-given and equal weights")
    _add_data_options(p)
    _add_model_options(p)
    _add_chain_options(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_sensitivity)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except MmlmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except np.linalg.LinAlgError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
