"""Shared helpers for assembling small test models from plain arrays."""

import numpy as np

from mmlm import Classification, Dataset, MembershipDesign, ModelSpec


def build_model(y, covariates=None, designs_rows=None, J=None, names=None):
    """Assemble (spec, data); one design per rows list in ``designs_rows``."""
    n = len(y)
    columns = {"y": np.asarray(y, dtype=float)}
    fixed = ()
    if covariates:
        fixed = tuple(covariates)
        for name, values in covariates.items():
            columns[name] = np.asarray(values, dtype=float)
    data = Dataset(unit_ids=tuple(f"s{i}" for i in range(n)), columns=columns)
    designs = []
    names = names or [f"c{k}" for k in range(len(designs_rows))]
    for rows, j, name in zip(designs_rows, J, names):
        cl = Classification(name, tuple(f"{name}_{i}" for i in range(j)))
        designs.append(MembershipDesign(cl, rows))
    spec = ModelSpec(response="y", fixed_covariates=fixed, memberships=tuple(designs))
    return spec, data


def random_rows(rng, n, J, max_m=3):
    rows = []
    for _ in range(n):
        m = int(rng.integers(1, min(max_m, J) + 1))
        idx = rng.choice(J, size=m, replace=False)
        w = rng.uniform(0.2, 1.0, size=m)
        w = w / w.sum()
        rows.append(list(zip(idx.tolist(), w.tolist())))
    return rows
