import numpy as np
import pytest

from mmlm import DimensionError, effective_sample_size, mcse_mean, split_rhat

from oracles import ar1_series


def test_ess_iid_draws_near_length():
    rng = np.random.default_rng(123)
    draws = rng.normal(size=1000)
    ess = effective_sample_size(draws)
    assert 800 <= ess <= 1200


def test_ess_iid_many_seeds_stay_in_band():
    # the estimator is noisy on iid data; individual frozen seeds sit in the
    # band and the median over seeds must too
    values = []
    for seed in range(20):
        draws = np.random.default_rng(seed).normal(size=1000)
        ess = effective_sample_size(draws)
        assert 0 < ess <= 1000
        values.append(ess)
    for seed in range(8):
        assert 800 <= values[seed] <= 1200
    assert 800 <= np.median(values) <= 1200


def test_ess_ar1_matches_analytic_rate():
    rho = 0.9
    n = 20000
    expected = n * (1 - rho) / (1 + rho)
    for seed in range(4):
        ess = effective_sample_size(ar1_series(np.random.default_rng(seed), rho, n))
        assert abs(ess - expected) / expected < 0.25


def test_ess_constant_chain_reports_length_with_warning():
    with pytest.warns(RuntimeWarning, match="constant chain"):
        assert effective_sample_size(np.full(10, 3.2)) == 10.0


def test_ess_requires_ten_draws():
    with pytest.raises(DimensionError):
        effective_sample_size(np.arange(9.0))


def test_ess_never_exceeds_length():
    # strongly antithetic chain: tau near zero, so the clip at n binds
    x = np.tile([1.0, -1.0], 50) + 0.01 * np.random.default_rng(0).normal(size=100)
    assert effective_sample_size(x) <= 100.0
    assert effective_sample_size(x) > 0.0


def test_split_rhat_agreeing_chains_near_one():
    rng = np.random.default_rng(9)
    chains = rng.normal(size=(4, 2000))
    assert abs(split_rhat(chains) - 1.0) < 0.05


def test_split_rhat_detects_disagreement():
    rng = np.random.default_rng(10)
    chains = rng.normal(size=(2, 1000))
    chains[1] += 5.0
    assert split_rhat(chains) > 1.5


def test_split_rhat_detects_trend_within_chain():
    # a strong trend splits into halves with different means
    chains = np.linspace(0.0, 1.0, 1000)[None, :].repeat(2, axis=0)
    chains += 0.01 * np.random.default_rng(2).normal(size=chains.shape)
    assert split_rhat(chains) > 1.5


def test_split_rhat_input_checks():
    with pytest.raises(DimensionError):
        split_rhat(np.zeros(10))
    with pytest.raises(DimensionError):
        split_rhat(np.zeros((2, 3)))
    assert split_rhat(np.ones((2, 100))) == 1.0


def test_mcse_mean_iid_scaling():
    rng = np.random.default_rng(3)
    draws = rng.normal(size=4000)
    mcse = mcse_mean(draws)
    assert 0.7 / np.sqrt(4000) < mcse < 1.4 / np.sqrt(4000)
