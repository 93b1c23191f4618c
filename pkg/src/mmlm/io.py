"""CSV ingestion and output writers.

Data files are comma-separated UTF-8 with a header row and '.' decimals:

  * unit table: a ``unit_id`` column plus one numeric column per variable;
    empty cells and NA/NaN are treated as missing.
  * membership table (long format): ``unit_id,classification,cluster_id,weight``
    with one row per unit-cluster pair; each file carries exactly one
    classification.

Floats are written with shortest round-trip formatting, so simulate ->
write -> ingest reproduces datasets and designs bit for bit.
"""

from __future__ import annotations

import csv
import json
import math

import numpy as np

from .core import (
    RENORMALIZE_TOL,
    Classification,
    Dataset,
    MembershipDesign,
    normalize_weights,
)
from .errors import IngestError, InvalidWeightsError
from .gibbs import FitResult

MISSING_TOKENS = {"", "na", "nan"}
MEMBERSHIP_HEADER = ["unit_id", "classification", "cluster_id", "weight"]


def _parse_float(text, path, line, column):
    if text.strip().lower() in MISSING_TOKENS:
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise IngestError(
            f"column {column!r}: cannot parse {text!r} as a number", path, line
        ) from None


def read_dataset(path) -> Dataset:
    """Load a unit table; missing cells become NaN (checked at fit time)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError("empty file", path) from None
        if "unit_id" not in header:
            raise IngestError(f"missing required column 'unit_id' (found {header})", path, 1)
        if len(set(header)) != len(header):
            raise IngestError(f"duplicate column names in header {header}", path, 1)
        id_pos = header.index("unit_id")
        value_cols = [(i, name) for i, name in enumerate(header) if i != id_pos]
        unit_ids = []
        values = {name: [] for _, name in value_cols}
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise IngestError(f"expected {len(header)} fields, found {len(row)}", path, line)
            unit_ids.append(row[id_pos])
            for i, name in value_cols:
                values[name].append(_parse_float(row[i], path, line, name))
    if not unit_ids:
        raise IngestError("no data rows", path)
    if len(set(unit_ids)) != len(unit_ids):
        raise IngestError("duplicate unit_id values", path)
    return Dataset(unit_ids=tuple(unit_ids), columns={k: np.array(v) for k, v in values.items()})


def read_membership(path, unit_ids, normalize: bool = False) -> MembershipDesign:
    """Load one long-format membership file for the given unit order.

    With ``normalize`` set, per-unit weights are rescaled to sum to 1
    (accepting e.g. raw lesson counts); otherwise row sums must already be
    within tolerance of 1. Cluster labels take their order of first
    appearance in the file.
    """
    unit_pos = {uid: i for i, uid in enumerate(unit_ids)}
    class_name = None
    labels: list = []
    label_pos: dict = {}
    entries: list = [[] for _ in unit_ids]   # per unit: (cluster_pos, weight)
    first_line: dict = {}

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError("empty file", path) from None
        if header != MEMBERSHIP_HEADER:
            raise IngestError(
                f"expected header {','.join(MEMBERSHIP_HEADER)}, found {','.join(header)}",
                path,
                1,
            )
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != 4:
                raise IngestError(f"expected 4 fields, found {len(row)}", path, line)
            uid, cname, cluster, wtext = row
            if class_name is None:
                class_name = cname
            elif cname != class_name:
                raise IngestError(
                    f"file mixes classifications {class_name!r} and {cname!r}; "
                    "use one file per classification",
                    path,
                    line,
                )
            if uid not in unit_pos:
                raise IngestError(f"unknown unit_id {uid!r}", path, line)
            w = _parse_float(wtext, path, line, "weight")
            if math.isnan(w):
                raise IngestError("missing weight", path, line)
            if cluster not in label_pos:
                label_pos[cluster] = len(labels)
                labels.append(cluster)
            i = unit_pos[uid]
            entries[i].append((label_pos[cluster], w))
            first_line.setdefault(uid, line)

    if class_name is None:
        raise IngestError("no membership rows", path)
    missing = [uid for uid, ent in zip(unit_ids, entries) if not ent]
    if missing:
        shown = ", ".join(repr(u) for u in missing[:5])
        more = f" (+{len(missing) - 5} more)" if len(missing) > 5 else ""
        raise IngestError(
            f"classification {class_name!r} has no memberships for units {shown}{more}", path
        )

    classification = Classification(class_name, tuple(labels))
    rows = []
    for uid, ent in zip(unit_ids, entries):
        if normalize:
            try:
                w = normalize_weights([v for _, v in ent])
            except InvalidWeightsError as exc:
                raise IngestError(f"unit {uid!r}: {exc}", path, first_line.get(uid)) from None
            rows.append(list(zip((j for j, _ in ent), w)))
        else:
            total = sum(v for _, v in ent)
            if abs(total - 1.0) > RENORMALIZE_TOL:
                raise IngestError(
                    f"unit {uid!r}: weights sum to {total:.10g}; pass --normalize to "
                    "rescale raw weights",
                    path,
                    first_line.get(uid),
                )
            rows.append(ent)
    try:
        return MembershipDesign(classification, rows)
    except (InvalidWeightsError, ValueError) as exc:
        raise IngestError(str(exc), path) from None


def read_membership_raw(path, unit_ids):
    """Load a membership file without weight validation, for the validate
    command: returns an unchecked design plus file-level problem strings
    (unknown units, unparseable weights) that are not design violations."""
    unit_pos = {uid: i for i, uid in enumerate(unit_ids)}
    class_name = None
    labels: list = []
    label_pos: dict = {}
    entries: list = [[] for _ in unit_ids]
    problems: list = []

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError("empty file", path) from None
        if header != MEMBERSHIP_HEADER:
            raise IngestError(
                f"expected header {','.join(MEMBERSHIP_HEADER)}, found {','.join(header)}",
                path,
                1,
            )
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != 4:
                problems.append(f"line {line}: expected 4 fields, found {len(row)}")
                continue
            uid, cname, cluster, wtext = row
            if class_name is None:
                class_name = cname
            elif cname != class_name:
                raise IngestError(
                    f"file mixes classifications {class_name!r} and {cname!r}; "
                    "use one file per classification",
                    path,
                    line,
                )
            if uid not in unit_pos:
                problems.append(f"line {line}: unknown unit_id {uid!r}")
                continue
            try:
                w = float(wtext)
            except ValueError:
                problems.append(f"line {line}: cannot parse weight {wtext!r}")
                continue
            if cluster not in label_pos:
                label_pos[cluster] = len(labels)
                labels.append(cluster)
            entries[unit_pos[uid]].append((label_pos[cluster], w))

    if class_name is None:
        raise IngestError("no membership rows", path)
    classification = Classification(class_name, tuple(labels))
    return MembershipDesign.unchecked(classification, entries), problems


def ingest(data_path, membership_paths, normalize: bool = False):
    """Load a dataset and one design per membership file (in flag order)."""
    data = read_dataset(data_path)
    designs = [read_membership(p, data.unit_ids, normalize=normalize) for p in membership_paths]
    seen = set()
    for d in designs:
        if d.name in seen:
            raise IngestError(f"classification {d.name!r} appears in more than one file")
        seen.add(d.name)
    return data, designs


def complete_cases(data: Dataset, designs, columns):
    """Drop units with missing values in the listed columns.

    Returns (dataset, designs, n_dropped); the transparent complete-case
    default for fitting.
    """
    mask = np.ones(data.n_units, dtype=bool)
    for name in columns:
        mask &= np.isfinite(data.column(name))
    n_dropped = int((~mask).sum())
    if n_dropped == 0:
        return data, list(designs), 0
    if not mask.any():
        raise IngestError("all rows have missing values in the model columns")
    return data.subset(mask), [d.subset(mask) for d in designs], n_dropped


# ---------------------------------------------------------------------------
# writers
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    """Shortest round-trip representation of a float."""
    return repr(float(x))


def write_dataset(path, data: Dataset) -> None:
    names = list(data.columns)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["unit_id", *names])
        for i, uid in enumerate(data.unit_ids):
            writer.writerow([uid, *(_fmt(data.columns[c][i]) for c in names)])


def write_membership(path, data: Dataset, design: MembershipDesign) -> None:
    labels = design.classification.cluster_labels
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MEMBERSHIP_HEADER)
        for uid, row in zip(data.unit_ids, design.rows):
            for j, w in row:
                writer.writerow([uid, design.name, labels[j], _fmt(w)])


def write_draws_csv(path, fit: FitResult) -> None:
    """One row per stored sweep: chain and iteration index, then parameters."""
    iterations = fit.stored_iterations()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["chain", "iteration", *fit.param_names])
        for k in range(fit.n_chains):
            for s, it in enumerate(iterations):
                writer.writerow(
                    [k, int(it), *(_fmt(fit.draws[name][k, s]) for name in fit.param_names)]
                )


SUMMARY_FIELDS = ["parameter", "mean", "sd", "q2.5", "median", "q97.5", "ess", "rhat"]


def _summary_record(s) -> dict:
    return {
        "parameter": s.name,
        "mean": s.mean,
        "sd": s.sd,
        "q2.5": s.q2_5,
        "median": s.median,
        "q97.5": s.q97_5,
        "ess": s.ess,
        "rhat": s.rhat,
    }


def write_summary_csv(path, fit: FitResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_FIELDS)
        for s in fit.summaries:
            rec = _summary_record(s)
            writer.writerow(
                [rec["parameter"]]
                + ["" if isinstance(v, float) and math.isnan(v) else _fmt(v)
                   for v in (rec[f] for f in SUMMARY_FIELDS[1:])]
            )


def write_summary_jsonl(path, fit: FitResult) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in fit.summaries:
            rec = _summary_record(s)
            rec = {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in rec.items()}
            fh.write(json.dumps(rec) + "\n")


def write_estimates_json(path, ml, extra=None) -> None:
    payload = {
        "engine": "exact",
        "beta": [float(b) for b in ml.beta],
        "variances": ml.variance_dict(),
        "loglik": float(ml.loglik),
        "converged": bool(ml.converged),
        "n_iter": int(ml.n_iter),
        "boundary": list(ml.boundary),
    }
    if extra:
        payload.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
