"""Constructors that turn raw domain quantities into membership designs.

Three sources of multiple membership weights:

  * exposure shares (e.g. lessons taught by each teacher),
  * adjacency magnitudes (shared border length or neighbour population),
  * attendance probabilities derived from distances when the true cluster
    identifier is unobserved.

Every constructor emits a design whose rows are normalized to sum to 1.
All functions are pure and safe for concurrent use.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import Classification, MembershipDesign, normalize_weights
from .errors import (
    DataError,
    InvalidDistanceError,
    InvalidWeightsError,
    IsolatedAreaError,
    ModelError,
)


@dataclass(frozen=True)
class AdjacencyList:
    """Undirected area adjacency with positive edge magnitudes.

    An edge (a, b, magnitude) says areas a and b border each other;
    magnitude is the shared border length or the neighbour population.
    """

    areas: Classification
    edges: tuple

    def __post_init__(self):
        seen = set()
        canon = []
        for a, b, mag in self.edges:
            a, b = str(a), str(b)
            self.areas.index_of(a)
            self.areas.index_of(b)
            if a == b:
                raise DataError(f"self-edge on area {a!r}")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise DataError(f"duplicate edge between {key[0]!r} and {key[1]!r}")
            seen.add(key)
            mag = float(mag)
            if not mag > 0:
                raise DataError(f"edge ({a!r}, {b!r}) has non-positive magnitude {mag}")
            canon.append((a, b, mag))
        object.__setattr__(self, "edges", tuple(canon))

    def neighbours(self, area: str) -> list:
        """(neighbour_label, magnitude) pairs for one area, in label-sorted order."""
        area = str(area)
        self.areas.index_of(area)
        out = []
        for a, b, mag in self.edges:
            if a == area:
                out.append((b, mag))
            elif b == area:
                out.append((a, mag))
        out.sort(key=lambda e: self.areas.index_of(e[0]))
        return out


def _as_pairs(entry):
    if isinstance(entry, dict):
        return list(entry.items())
    return list(entry)


def weights_from_exposure(classification: Classification, exposures, unit_ids=None) -> MembershipDesign:
    """Rows proportional to per-unit exposure (e.g. lesson counts).

    ``exposures`` is a per-unit sequence of (cluster_label, amount) pairs or
    a dict; amounts are normalized within each unit, so any positive
    rescaling of a unit's exposures leaves its weights unchanged.
    """
    rows = []
    for i, entry in enumerate(exposures):
        pairs = _as_pairs(entry)
        name = unit_ids[i] if unit_ids is not None else i
        if not pairs:
            raise InvalidWeightsError(f"unit {name}: no exposure entries")
        idx = [classification.index_of(label) for label, _ in pairs]
        try:
            w = normalize_weights([amount for _, amount in pairs])
        except InvalidWeightsError as exc:
            raise InvalidWeightsError(f"unit {name}: {exc}") from None
        rows.append(list(zip(idx, w)))
    return MembershipDesign(classification, rows)


def weights_from_adjacency(adj: AdjacencyList, residence) -> MembershipDesign:
    """Rows spanning the neighbours of each unit's residence area.

    Weights are proportional to the edge magnitude (border length or
    population) and normalized. The residence area itself is excluded: its
    own effect belongs to a separate single-membership classification, so
    the two classifications are cross-classified.
    """
    rows = []
    for i, area in enumerate(residence):
        nbrs = adj.neighbours(area)
        if not nbrs:
            raise IsolatedAreaError(
                f"area {str(area)!r} (residence of unit {i}) has no neighbours"
            )
        idx = [adj.areas.index_of(label) for label, _ in nbrs]
        w = normalize_weights([mag for _, mag in nbrs])
        rows.append(list(zip(idx, w)))
    return MembershipDesign(adj.areas, rows)


def weights_from_probabilities(classification: Classification, candidates, decay="inverse") -> MembershipDesign:
    """Attendance-probability rows from candidate distances.

    For units whose true cluster is unobserved, each candidate cluster gets
    a score of distance**-1 (``decay="inverse"``) or distance**-2
    (``decay="inverse-square"``); normalized scores enter the design as
    weights. A single candidate degenerates to weight 1.
    """
    if decay == "inverse":
        power = -1.0
    elif decay == "inverse-square":
        power = -2.0
    else:
        raise ModelError(f"decay must be 'inverse' or 'inverse-square', got {decay!r}")
    rows = []
    for i, entry in enumerate(candidates):
        pairs = _as_pairs(entry)
        if not pairs:
            raise InvalidDistanceError(f"unit {i}: no candidate clusters")
        idx = [classification.index_of(label) for label, _ in pairs]
        dist = [float(d) for _, d in pairs]
        if any(d <= 0 for d in dist):
            raise InvalidDistanceError(f"unit {i}: distances must be positive, got {dist}")
        w = normalize_weights([d**power for d in dist])
        rows.append(list(zip(idx, w)))
    return MembershipDesign(classification, rows)


def reweight_scheme(design: MembershipDesign, scheme="keep") -> MembershipDesign:
    """Replace a design's weights for sensitivity analysis.

    ``equal`` gives each of a unit's m clusters weight 1/m; ``keep`` returns
    the design unchanged.
    """
    if scheme == "keep":
        return design
    if scheme != "equal":
        raise ModelError(f"scheme must be 'equal' or 'keep', got {scheme!r}")
    rows = []
    for row in design.rows:
        m = len(row)
        rows.append([(j, 1.0 / m) for j, _ in row])
    return MembershipDesign(design.classification, rows)
