"""Domain types and structural operations for multiple membership models.

The response model is

    y_i = x_i' beta + sum_c sum_{j in c(i)} w_{j,i} u_j + e_i

where each classification c contributes a weighted sum of cluster effects:
unit i belongs to one or more clusters of c with non-negative weights that
sum to one. A pure hierarchy is the degenerate case of one membership per
unit with weight 1.

All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from .errors import DimensionError, InvalidWeightsError, ModelError

ROW_SUM_TOL = 1e-8        # tolerance for "weights sum to 1" after construction
RENORMALIZE_TOL = 1e-6    # rows whose sum is within this of 1 are renormalized


def normalize_weights(raw) -> np.ndarray:
    """Scale non-negative raw weights so they sum to 1.

    Raises InvalidWeightsError for empty, negative, or all-zero input.
    """
    w = np.asarray(raw, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise InvalidWeightsError("weights must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(w)):
        raise InvalidWeightsError("weights must be finite")
    if np.any(w < 0):
        raise InvalidWeightsError("weights must be non-negative")
    total = w.sum()
    if total <= 0:
        raise InvalidWeightsError("weights must not all be zero")
    return w / total


@dataclass(frozen=True)
class Dataset:
    """Column-oriented table of unit-level values.

    unit_ids are opaque identifiers, one per unit; columns map a name to a
    float vector of length n_units.
    """

    unit_ids: tuple
    columns: dict

    def __post_init__(self):
        ids = tuple(str(i) for i in self.unit_ids)
        object.__setattr__(self, "unit_ids", ids)
        if len(set(ids)) != len(ids):
            raise ModelError("unit_ids must be unique")
        cols = {}
        for name, values in self.columns.items():
            v = np.asarray(values, dtype=float)
            if v.ndim != 1 or v.shape[0] != len(ids):
                raise DimensionError(
                    f"column {name!r} has length {v.shape[0] if v.ndim == 1 else v.shape}, "
                    f"expected {len(ids)}"
                )
            v.flags.writeable = False
            cols[name] = v
        object.__setattr__(self, "columns", cols)

    @property
    def n_units(self) -> int:
        return len(self.unit_ids)

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise ModelError(f"dataset has no column {name!r}")
        return self.columns[name]

    def require_finite(self, names) -> None:
        """Check that every listed column is free of NaN/inf (fit-time guard)."""
        for name in names:
            if not np.all(np.isfinite(self.column(name))):
                raise ModelError(f"column {name!r} contains non-finite values")

    def subset(self, keep: np.ndarray) -> "Dataset":
        """New dataset restricted to the units where ``keep`` is True."""
        keep = np.asarray(keep, dtype=bool)
        ids = tuple(uid for uid, k in zip(self.unit_ids, keep) if k)
        cols = {name: v[keep] for name, v in self.columns.items()}
        return Dataset(unit_ids=ids, columns=cols)


@dataclass(frozen=True)
class Classification:
    """A named set of clusters (teachers, neighbourhoods, ...)."""

    name: str
    cluster_labels: tuple

    def __post_init__(self):
        labels = tuple(str(c) for c in self.cluster_labels)
        object.__setattr__(self, "cluster_labels", labels)
        if len(labels) < 1:
            raise ModelError(f"classification {self.name!r} needs at least one cluster")
        if len(set(labels)) != len(labels):
            raise ModelError(f"classification {self.name!r} has duplicate cluster labels")

    @property
    def n_clusters(self) -> int:
        return len(self.cluster_labels)

    def index_of(self, label: str) -> int:
        try:
            return self.cluster_labels.index(str(label))
        except ValueError:
            raise ModelError(
                f"classification {self.name!r} has no cluster {label!r}"
            ) from None


@dataclass(frozen=True)
class Violation:
    """One structural defect found in a membership design."""

    unit: int
    kind: str       # "row-sum" | "duplicate-cluster" | "out-of-range" | "empty-row" | "bad-weight"
    detail: str

    def __str__(self):
        return f"unit {self.unit}: {self.kind} ({self.detail})"


def _check_rows(rows, n_clusters):
    """Yield Violations for raw membership rows; empty result means valid."""
    for i, row in enumerate(rows):
        if len(row) == 0:
            yield Violation(i, "empty-row", "no membership entries")
            continue
        idx = [j for j, _ in row]
        wts = np.array([w for _, w in row], dtype=float)
        if any((not isinstance(j, (int, np.integer))) or j < 0 or j >= n_clusters for j in idx):
            yield Violation(i, "out-of-range", f"cluster indices {idx} not in [0, {n_clusters})")
            continue
        if len(set(idx)) != len(idx):
            yield Violation(i, "duplicate-cluster", f"cluster indices {sorted(idx)}")
            continue
        if not np.all(np.isfinite(wts)) or np.any(wts < 0):
            yield Violation(i, "bad-weight", f"weights {wts.tolist()}")
            continue
        total = wts.sum()
        if abs(total - 1.0) > ROW_SUM_TOL:
            yield Violation(i, "row-sum", f"weights sum to {total:.10g}")


class MembershipDesign:
    """Sparse per-unit membership rows for one classification.

    Each row is a tuple of (cluster_index, weight) pairs with positive
    weights summing to 1. Rows are canonicalized at construction: zero-weight
    entries dropped, entries sorted by cluster index, and rows renormalized
    when their sum is within RENORMALIZE_TOL of 1 (rejected beyond that).
    """

    __slots__ = ("classification", "rows", "_checked", "_matrix")

    def __init__(self, classification: Classification, rows):
        canonical = []
        for i, row in enumerate(rows):
            entries = [(int(j), float(w)) for j, w in row]
            if any(w < 0 or not np.isfinite(w) for _, w in entries):
                raise InvalidWeightsError(f"unit {i}: weights must be finite and non-negative")
            entries = [(j, w) for j, w in entries if w > 0.0]
            if not entries:
                raise InvalidWeightsError(f"unit {i}: no positive membership weights")
            entries.sort(key=lambda e: e[0])
            idx = [j for j, _ in entries]
            if any(j < 0 or j >= classification.n_clusters for j in idx):
                raise ModelError(
                    f"unit {i}: cluster index out of range for {classification.name!r}"
                )
            if len(set(idx)) != len(idx):
                raise ModelError(f"unit {i}: duplicate cluster index in membership row")
            total = sum(w for _, w in entries)
            if abs(total - 1.0) > RENORMALIZE_TOL:
                raise InvalidWeightsError(
                    f"unit {i}: weights sum to {total:.10g}, outside renormalization "
                    f"tolerance {RENORMALIZE_TOL:g} of 1"
                )
            canonical.append(tuple((j, w / total) for j, w in entries))
        self.classification = classification
        self.rows = tuple(canonical)
        self._checked = True
        self._matrix = None

    @classmethod
    def unchecked(cls, classification: Classification, rows) -> "MembershipDesign":
        """Bypass validation; for building designs that will be inspected
        with validate_design (e.g. raw file contents)."""
        obj = object.__new__(cls)
        obj.classification = classification
        obj.rows = tuple(tuple((int(j), float(w)) for j, w in row) for row in rows)
        obj._checked = False
        obj._matrix = None
        return obj

    @property
    def n_units(self) -> int:
        return len(self.rows)

    @property
    def name(self) -> str:
        return self.classification.name

    @property
    def n_clusters(self) -> int:
        return self.classification.n_clusters

    def matrix(self) -> sps.csr_matrix:
        """Weight matrix W (n_units x n_clusters) in sparse CSR form.

        Built once and memoized; the design is immutable so sharing the
        cached instance is safe (treat it as read-only).
        """
        if self._matrix is None:
            data, indices, indptr = [], [], [0]
            for row in self.rows:
                for j, w in row:
                    indices.append(j)
                    data.append(w)
                indptr.append(len(indices))
            self._matrix = sps.csr_matrix(
                (
                    np.array(data),
                    np.array(indices, dtype=np.int64),
                    np.array(indptr, dtype=np.int64),
                ),
                shape=(self.n_units, self.n_clusters),
            )
        return self._matrix

    def row_sum_weight_squares(self) -> np.ndarray:
        """Per-unit sum of squared weights (the shrinkage factor on sigma_u^2)."""
        return np.array([sum(w * w for _, w in row) for row in self.rows])

    def subset(self, keep) -> "MembershipDesign":
        keep = np.asarray(keep, dtype=bool)
        rows = [row for row, k in zip(self.rows, keep) if k]
        return MembershipDesign(self.classification, rows)

    def __eq__(self, other):
        return (
            isinstance(other, MembershipDesign)
            and self.classification == other.classification
            and self.rows == other.rows
        )

    def __repr__(self):
        return (
            f"MembershipDesign({self.classification.name!r}, n_units={self.n_units}, "
            f"n_clusters={self.n_clusters})"
        )


def validate_design(design: MembershipDesign, n_units: int) -> list[Violation]:
    """Report structural violations of a membership design.

    Returns an empty list when the design is valid for a dataset of
    ``n_units`` units. Violations are data, not exceptions.
    """
    violations = list(_check_rows(design.rows, design.classification.n_clusters))
    if design.n_units != n_units:
        violations.append(
            Violation(-1, "row-count", f"{design.n_units} rows for {n_units} units")
        )
    return violations


def weighted_cluster_covariate(design: MembershipDesign, cluster_values) -> np.ndarray:
    """Per-unit weighted average of a cluster-level value.

    This is how higher-level covariates enter the model: each unit receives
    the weighted mean of the value over the clusters it belongs to.
    """
    v = np.asarray(cluster_values, dtype=float)
    if v.shape != (design.n_clusters,):
        raise DimensionError(
            f"cluster_values has shape {v.shape}, expected ({design.n_clusters},)"
        )
    return design.matrix() @ v


def collapse_to_single_membership(design: MembershipDesign) -> MembershipDesign:
    """Assign each unit only its highest-weight cluster, with weight 1.

    Ties break to the lowest cluster index, so the operation is
    deterministic. This is the misspecification studied in the bias
    experiments; it is idempotent.
    """
    rows = []
    for row in design.rows:
        # rows are sorted by cluster index, so the first maximum is the lowest index
        best = max(row, key=lambda e: e[1])
        rows.append(((best[0], 1.0),))
    return MembershipDesign(design.classification, rows)


@dataclass(frozen=True)
class ModelSpec:
    """Response, fixed covariates, and the ordered random classifications.

    An intercept is always included and always first in beta.
    """

    response: str
    fixed_covariates: tuple
    memberships: tuple   # ordered MembershipDesigns, one per random classification

    def __post_init__(self):
        object.__setattr__(self, "fixed_covariates", tuple(self.fixed_covariates))
        object.__setattr__(self, "memberships", tuple(self.memberships))
        if len(self.memberships) < 1:
            raise ModelError("a model needs at least one random classification")
        names = [d.classification.name for d in self.memberships]
        if len(set(names)) != len(names):
            raise ModelError(f"classification names must be unique, got {names}")
        if len(set(self.fixed_covariates)) != len(self.fixed_covariates):
            raise ModelError("fixed covariate names must be unique")

    @property
    def n_classifications(self) -> int:
        return len(self.memberships)

    @property
    def classification_names(self) -> tuple:
        return tuple(d.classification.name for d in self.memberships)

    @property
    def n_fixed(self) -> int:
        return 1 + len(self.fixed_covariates)

    def design_matrix(self, data: Dataset) -> np.ndarray:
        """Fixed-effects matrix X: intercept column then covariates in order."""
        cols = [np.ones(data.n_units)]
        cols += [data.column(name) for name in self.fixed_covariates]
        return np.column_stack(cols)

    def check_against(self, data: Dataset) -> None:
        """Fit-time validation against a dataset: columns exist, are finite,
        and every design has one row per unit."""
        data.require_finite([self.response, *self.fixed_covariates])
        for design in self.memberships:
            if design.n_units != data.n_units:
                raise DimensionError(
                    f"design {design.name!r} has {design.n_units} rows "
                    f"for {data.n_units} units"
                )


@dataclass(frozen=True)
class Parameters:
    """Model parameters: beta (intercept first), variances, cluster effects.

    Orders follow the ModelSpec they accompany: sigma2_u and u are indexed
    by classification position.
    """

    beta: np.ndarray
    sigma2_e: float
    sigma2_u: np.ndarray
    u: tuple = field(default=())

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        s2u = np.asarray(self.sigma2_u, dtype=float)
        u = tuple(np.asarray(v, dtype=float) for v in self.u)
        for arr in (beta, s2u, *u):
            arr.flags.writeable = False
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "sigma2_u", s2u)
        object.__setattr__(self, "u", u)
        if self.sigma2_e < 0 or np.any(s2u < 0):
            raise ModelError("variances must be non-negative")

    def check_against(self, spec: ModelSpec) -> None:
        if self.beta.shape != (spec.n_fixed,):
            raise DimensionError(
                f"beta has shape {self.beta.shape}, expected ({spec.n_fixed},)"
            )
        if self.sigma2_u.shape != (spec.n_classifications,):
            raise DimensionError(
                f"sigma2_u has shape {self.sigma2_u.shape}, "
                f"expected ({spec.n_classifications},)"
            )
        if len(self.u) != spec.n_classifications:
            raise DimensionError(
                f"{len(self.u)} cluster-effect vectors for "
                f"{spec.n_classifications} classifications"
            )
        for design, uc in zip(spec.memberships, self.u):
            if uc.shape != (design.n_clusters,):
                raise DimensionError(
                    f"u for {design.name!r} has shape {uc.shape}, "
                    f"expected ({design.n_clusters},)"
                )

    def require_positive_variances(self) -> None:
        """Fitted parameters must have strictly positive variances."""
        if self.sigma2_e <= 0 or np.any(self.sigma2_u <= 0):
            raise ModelError("fitted variances must be strictly positive")


def linear_predictor(spec: ModelSpec, data: Dataset, params: Parameters) -> np.ndarray:
    """Unit-level mean x_i'beta + sum of weighted cluster effects (no residual)."""
    params.check_against(spec)
    X = spec.design_matrix(data)
    eta = X @ params.beta
    for design, uc in zip(spec.memberships, params.u):
        if design.n_units != data.n_units:
            raise DimensionError(
                f"design {design.name!r} has {design.n_units} rows for {data.n_units} units"
            )
        eta = eta + design.matrix() @ uc
    return eta
