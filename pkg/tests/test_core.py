import numpy as np
import pytest

from mmlm import (
    Classification,
    Dataset,
    DimensionError,
    InvalidWeightsError,
    MembershipDesign,
    ModelError,
    ModelSpec,
    Parameters,
    collapse_to_single_membership,
    linear_predictor,
    normalize_weights,
    validate_design,
    weighted_cluster_covariate,
)

from oracles import two_level_predictor


def make_classification(n=3, name="teacher"):
    return Classification(name, tuple(f"{name}{j}" for j in range(n)))


# ---------------------------------------------------------------------------
# normalize_weights
# ---------------------------------------------------------------------------

def test_normalize_lesson_counts():
    # two lessons with one teacher, three with another
    np.testing.assert_allclose(normalize_weights([2, 3]), [0.4, 0.6], rtol=0, atol=0)


def test_normalize_single_and_symmetric():
    np.testing.assert_array_equal(normalize_weights([5]), [1.0])
    np.testing.assert_array_equal(normalize_weights([1, 1, 1, 1]), [0.25] * 4)


def test_normalize_keeps_zero_entries_zero():
    out = normalize_weights([0.0, 2.0, 0.0, 2.0])
    np.testing.assert_array_equal(out, [0.0, 0.5, 0.0, 0.5])


@pytest.mark.parametrize("bad", [[], [0.0, 0.0], [-1.0, 2.0], [np.nan, 1.0]])
def test_normalize_rejects_bad_input(bad):
    with pytest.raises(InvalidWeightsError):
        normalize_weights(bad)


def test_normalize_row_sums_property():
    rng = np.random.default_rng(7)
    for _ in range(200):
        raw = rng.uniform(0.0, 10.0, size=rng.integers(1, 9))
        if raw.sum() == 0:
            continue
        out = normalize_weights(raw)
        assert abs(out.sum() - 1.0) <= 1e-12
        assert np.all(out >= 0)


# ---------------------------------------------------------------------------
# Dataset / Classification
# ---------------------------------------------------------------------------

def test_dataset_checks_lengths_and_ids():
    with pytest.raises(DimensionError):
        Dataset(unit_ids=("a", "b"), columns={"y": [1.0]})
    with pytest.raises(ModelError):
        Dataset(unit_ids=("a", "a"), columns={"y": [1.0, 2.0]})


def test_dataset_require_finite():
    data = Dataset(unit_ids=("a", "b"), columns={"y": [1.0, np.nan]})
    data.require_finite([])
    with pytest.raises(ModelError):
        data.require_finite(["y"])


def test_classification_duplicate_labels():
    with pytest.raises(ModelError):
        Classification("t", ("a", "a"))


# ---------------------------------------------------------------------------
# MembershipDesign construction
# ---------------------------------------------------------------------------

def test_design_canonicalizes_rows():
    cl = make_classification(3)
    design = MembershipDesign(cl, [[(2, 0.6), (0, 0.4)], [(1, 1.0), (0, 0.0)]])
    assert design.rows[0] == ((0, 0.4), (2, 0.6))   # sorted, zero entries dropped
    assert design.rows[1] == ((1, 1.0),)


def test_design_renormalizes_small_drift_only():
    cl = make_classification(2)
    design = MembershipDesign(cl, [[(0, 0.5), (1, 0.5 + 5e-7)]])
    w = dict(design.rows[0])
    assert abs(sum(w.values()) - 1.0) <= 1e-12
    with pytest.raises(InvalidWeightsError):
        MembershipDesign(cl, [[(0, 0.4), (1, 0.5)]])


@pytest.mark.parametrize(
    "rows, err",
    [
        ([[]], InvalidWeightsError),                       # empty row
        ([[(0, 0.5), (0, 0.5)]], ModelError),              # duplicate cluster
        ([[(5, 1.0)]], ModelError),                        # out of range
        ([[(0, -0.2), (1, 1.2)]], InvalidWeightsError),    # negative weight
    ],
)
def test_design_rejects_bad_rows(rows, err):
    with pytest.raises(err):
        MembershipDesign(make_classification(3), rows)


def test_design_row_stochastic_property():
    rng = np.random.default_rng(11)
    cl = make_classification(6)
    for _ in range(100):
        m = int(rng.integers(1, 5))
        idx = rng.choice(6, size=m, replace=False)
        raw = rng.uniform(0.01, 5.0, size=m)
        design = MembershipDesign(cl, [list(zip(idx.tolist(), normalize_weights(raw)))])
        total = sum(w for _, w in design.rows[0])
        assert abs(total - 1.0) <= 1e-8


# ---------------------------------------------------------------------------
# validate_design
# ---------------------------------------------------------------------------

def test_validate_passes_pure_hierarchy():
    cl = make_classification(3)
    design = MembershipDesign(cl, [[(j % 3, 1.0)] for j in range(6)])
    assert validate_design(design, 6) == []


def test_validate_reports_row_sum_with_unit():
    cl = make_classification(3)
    design = MembershipDesign.unchecked(cl, [[(0, 1.0)], [(0, 0.4), (1, 0.5)]])
    violations = validate_design(design, 2)
    assert len(violations) == 1
    assert violations[0].unit == 1
    assert violations[0].kind == "row-sum"


def test_validate_reports_out_of_range_and_more():
    cl = make_classification(3)
    design = MembershipDesign.unchecked(
        cl, [[(3, 1.0)], [], [(1, 0.5), (1, 0.5)], [(0, 1.0)]]
    )
    kinds = {v.unit: v.kind for v in validate_design(design, 4)}
    assert kinds == {0: "out-of-range", 1: "empty-row", 2: "duplicate-cluster"}


def test_validate_reports_row_count_mismatch():
    cl = make_classification(3)
    design = MembershipDesign(cl, [[(0, 1.0)]])
    kinds = [v.kind for v in validate_design(design, 2)]
    assert kinds == ["row-count"]


# ---------------------------------------------------------------------------
# weighted_cluster_covariate
# ---------------------------------------------------------------------------

def test_weighted_covariate_examples():
    cl = make_classification(2)
    design = MembershipDesign(cl, [[(0, 0.4), (1, 0.6)]])
    np.testing.assert_allclose(weighted_cluster_covariate(design, [1.0, 0.0]), [0.4])

    cl3 = make_classification(3)
    design3 = MembershipDesign(cl3, [[(0, 0.25), (1, 0.25), (2, 0.5)]])
    np.testing.assert_allclose(weighted_cluster_covariate(design3, [2.0, 4.0, -1.0]), [1.0])


def test_weighted_covariate_constant_is_identity():
    cl = make_classification(4)
    design = MembershipDesign(cl, [[(0, 0.3), (2, 0.7)], [(1, 1.0)]])
    np.testing.assert_allclose(weighted_cluster_covariate(design, [3.5] * 4), [3.5, 3.5])


def test_weighted_covariate_convexity_property():
    rng = np.random.default_rng(5)
    cl = make_classification(5)
    for _ in range(50):
        rows = []
        for _ in range(8):
            m = int(rng.integers(1, 5))
            idx = rng.choice(5, size=m, replace=False)
            w = normalize_weights(rng.uniform(0.1, 1.0, size=m))
            rows.append(list(zip(idx.tolist(), w)))
        design = MembershipDesign(cl, rows)
        values = rng.normal(size=5)
        out = weighted_cluster_covariate(design, values)
        assert np.all(out >= values.min() - 1e-12)
        assert np.all(out <= values.max() + 1e-12)


def test_weighted_covariate_dimension_error():
    design = MembershipDesign(make_classification(2), [[(0, 1.0)]])
    with pytest.raises(DimensionError):
        weighted_cluster_covariate(design, [1.0, 2.0, 3.0])


# ---------------------------------------------------------------------------
# collapse_to_single_membership
# ---------------------------------------------------------------------------

def test_collapse_takes_argmax_and_breaks_ties_low():
    cl = make_classification(2, name="t")
    design = MembershipDesign(cl, [[(0, 0.4), (1, 0.6)], [(0, 1.0)], [(0, 0.5), (1, 0.5)]])
    collapsed = collapse_to_single_membership(design)
    assert collapsed.rows == (((1, 1.0),), ((0, 1.0),), ((0, 1.0),))


def test_collapse_idempotent_property():
    rng = np.random.default_rng(3)
    cl = make_classification(6)
    rows = []
    for _ in range(20):
        m = int(rng.integers(1, 5))
        idx = rng.choice(6, size=m, replace=False)
        rows.append(list(zip(idx.tolist(), normalize_weights(rng.uniform(0.1, 1, m)))))
    design = MembershipDesign(cl, rows)
    once = collapse_to_single_membership(design)
    twice = collapse_to_single_membership(once)
    assert once == twice


# ---------------------------------------------------------------------------
# linear_predictor
# ---------------------------------------------------------------------------

def small_model(n=4):
    cl = make_classification(2)
    design = MembershipDesign(cl, [[(0, 0.4), (1, 0.6)]] * n)
    data = Dataset(
        unit_ids=tuple(f"s{i}" for i in range(n)),
        columns={"y": np.zeros(n), "x": np.arange(n, dtype=float)},
    )
    spec = ModelSpec(response="y", fixed_covariates=("x",), memberships=(design,))
    return spec, data, design


def test_predictor_zero_effects_gives_intercept():
    spec, data, _ = small_model()
    params = Parameters(beta=[2.5, 0.0], sigma2_e=1.0, sigma2_u=[1.0], u=(np.zeros(2),))
    np.testing.assert_array_equal(linear_predictor(spec, data, params), [2.5] * 4)


def test_predictor_forced_arithmetic():
    spec, data, _ = small_model(n=1)
    data = Dataset(unit_ids=("s0",), columns={"y": [0.0], "x": [2.0]})
    params = Parameters(beta=[1.0, 0.5], sigma2_e=1.0, sigma2_u=[1.0], u=(np.array([1.0, -1.0]),))
    np.testing.assert_allclose(linear_predictor(spec, data, params), [1.8])


def test_predictor_matches_two_level_on_single_membership():
    rng = np.random.default_rng(19)
    n, J = 40, 5
    groups = rng.integers(0, J, size=n)
    cl = make_classification(J)
    design = MembershipDesign(cl, [[(int(g), 1.0)] for g in groups])
    x = rng.normal(size=n)
    data = Dataset(
        unit_ids=tuple(f"s{i}" for i in range(n)),
        columns={"y": np.zeros(n), "x": x},
    )
    spec = ModelSpec(response="y", fixed_covariates=("x",), memberships=(design,))
    beta = np.array([0.3, -1.2])
    u = rng.normal(size=J)
    params = Parameters(beta=beta, sigma2_e=1.0, sigma2_u=[1.0], u=(u,))
    X = np.column_stack([np.ones(n), x])
    np.testing.assert_allclose(
        linear_predictor(spec, data, params),
        two_level_predictor(X, beta, groups, u),
        rtol=1e-13, atol=1e-15,
    )


def test_predictor_invariant_to_row_entry_order():
    cl = make_classification(3)
    a = MembershipDesign(cl, [[(0, 0.2), (1, 0.3), (2, 0.5)]])
    b = MembershipDesign(cl, [[(2, 0.5), (0, 0.2), (1, 0.3)]])
    data = Dataset(unit_ids=("s0",), columns={"y": [0.0]})
    params = Parameters(beta=[0.0], sigma2_e=1.0, sigma2_u=[1.0], u=(np.array([1.0, 2.0, 3.0]),))
    for design in (a, b):
        spec = ModelSpec(response="y", fixed_covariates=(), memberships=(design,))
        np.testing.assert_array_equal(linear_predictor(spec, data, params), [2.3])


def test_predictor_dimension_errors():
    spec, data, _ = small_model()
    with pytest.raises(DimensionError):
        linear_predictor(
            spec, data,
            Parameters(beta=[1.0], sigma2_e=1.0, sigma2_u=[1.0], u=(np.zeros(2),)),
        )
    with pytest.raises(DimensionError):
        linear_predictor(
            spec, data,
            Parameters(beta=[1.0, 0.0], sigma2_e=1.0, sigma2_u=[1.0], u=(np.zeros(3),)),
        )


def test_model_spec_invariants():
    _, data, design = small_model()
    with pytest.raises(ModelError):
        ModelSpec(response="y", fixed_covariates=(), memberships=())
    with pytest.raises(ModelError):
        ModelSpec(response="y", fixed_covariates=(), memberships=(design, design))
    spec = ModelSpec(response="y", fixed_covariates=("missing",), memberships=(design,))
    with pytest.raises(ModelError):
        spec.check_against(data)
