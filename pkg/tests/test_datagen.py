import numpy as np
import pytest

from ganmia.datagen import (
    SnpDistributionSpec,
    SplitPlan,
    sample_distribution,
    split_dataset,
)
from ganmia.rng import make_rng


def test_spec_generation_clamps_frequencies():
    spec = SnpDistributionSpec.generate(500, 3, seed=1)
    assert spec.frequencies.shape == (3, 500)
    assert spec.frequencies.min() >= 0.01
    assert spec.frequencies.max() <= 0.99
    assert abs(spec.weights.sum() - 1.0) < 1e-12


def test_spec_rejects_bad_weights():
    with pytest.raises(ValueError, match="simplex"):
        SnpDistributionSpec(np.full((2, 4), 0.5), np.array([0.7, 0.7]))


def test_low_frequency_columns_stay_rare():
    # all frequencies at the clamp floor 0.01
    spec = SnpDistributionSpec(np.full((1, 50), 0.01), np.array([1.0]))
    sample = sample_distribution(spec, 10_000, seed=2)
    assert sample.column_means().max() <= 0.02


def test_fair_coin_columns_near_half():
    spec = SnpDistributionSpec(np.full((1, 30), 0.5), np.array([1.0]))
    means = sample_distribution(spec, 10_000, seed=3).column_means()
    assert np.all(np.abs(means - 0.5) < 0.02)


def test_sampling_deterministic_per_seed():
    spec = SnpDistributionSpec.generate(40, 2, seed=4)
    assert sample_distribution(spec, 100, seed=9) == sample_distribution(spec, 100, seed=9)
    assert sample_distribution(spec, 100, seed=9) != sample_distribution(spec, 100, seed=10)


def test_empirical_frequencies_converge():
    # binomial concentration: |empirical - true| < 5 / sqrt(n) per column
    spec = SnpDistributionSpec.generate(100, 1, seed=5)
    n = 10_000
    means = sample_distribution(spec, n, seed=6).column_means()
    assert np.all(np.abs(means - spec.frequencies[0]) < 5.0 / np.sqrt(n))


def test_mixture_changes_column_rates():
    freqs = np.array([[0.9, 0.1], [0.1, 0.9]])
    spec = SnpDistributionSpec(freqs, np.array([0.8, 0.2]))
    means = sample_distribution(spec, 20_000, seed=7).column_means()
    expected = 0.8 * freqs[0] + 0.2 * freqs[1]
    assert np.all(np.abs(means - expected) < 0.02)


def test_log_row_probability_matches_direct_product():
    spec = SnpDistributionSpec.generate(8, 2, seed=8)
    rows = sample_distribution(spec, 20, seed=9)
    dense = rows.to_array()
    direct = np.zeros(20)
    for i, x in enumerate(dense):
        total = 0.0
        for k in range(2):
            p = spec.frequencies[k]
            total += spec.weights[k] * np.prod(np.where(x == 1, p, 1 - p))
        direct[i] = np.log(total)
    assert np.allclose(spec.log_row_probability(rows), direct, atol=1e-12)


def test_split_default_sizes_fit_in_6000_rows():
    spec = SnpDistributionSpec.generate(10, 1, seed=10)
    data = sample_distribution(spec, 6000, seed=11)
    plan = SplitPlan(3000, 2008, 500, 500)
    assert plan.rows_needed == 5508
    split = split_dataset(data, plan, seed=12)
    member_keys = set(split.test_members.row_keys())
    train_keys = set(split.train.row_keys())
    assert member_keys <= train_keys


def test_split_members_equal_train_when_sizes_match():
    spec = SnpDistributionSpec.generate(60, 1, seed=13)
    data = sample_distribution(spec, 50, seed=14)
    split = split_dataset(data, SplitPlan(20, 10, 20, 10), seed=15)
    assert sorted(split.member_idx) == sorted(split.train_idx)


def test_split_rejects_oversized_plan():
    spec = SnpDistributionSpec.generate(10, 1, seed=16)
    data = sample_distribution(spec, 100, seed=17)
    with pytest.raises(ValueError, match="plan needs"):
        split_dataset(data, SplitPlan(80, 20, 10, 10), seed=18)


def test_split_seeds_give_different_members():
    spec = SnpDistributionSpec.generate(10, 1, seed=19)
    data = sample_distribution(spec, 400, seed=20)
    plan = SplitPlan(200, 100, 50, 50)
    a = split_dataset(data, plan, seed=1)
    b = split_dataset(data, plan, seed=2)
    assert not np.array_equal(a.member_idx, b.member_idx)
    assert np.array_equal(a.member_idx, split_dataset(data, plan, seed=1).member_idx)


def test_split_role_disjointness_many_random_plans():
    # property sweep: roles disjoint and members inside train for 1000 plans
    rng = make_rng(21)
    spec = SnpDistributionSpec.generate(12, 1, seed=22)
    data = sample_distribution(spec, 300, seed=23)
    for trial in range(1000):
        train = int(rng.integers(1, 150))
        ref = int(rng.integers(0, 100))
        nonmember = int(rng.integers(0, 50))
        member = int(rng.integers(0, train + 1))
        if train + ref + nonmember > data.n_rows:
            continue
        split = split_dataset(data, SplitPlan(train, ref, member, nonmember), seed=trial)
        roles = (set(split.train_idx), set(split.reference_idx), set(split.nonmember_idx))
        for i, a in enumerate(roles):
            for b in roles[i + 1 :]:
                assert not (a & b)
        assert set(split.member_idx) <= set(split.train_idx)


def test_plan_validation():
    with pytest.raises(ValueError, match="train rows"):
        SplitPlan(10, 5, 11, 5)
    with pytest.raises(ValueError):
        SplitPlan(0, 5, 0, 5)


def test_spec_dict_round_trip():
    spec = SnpDistributionSpec.generate(6, 2, seed=24)
    again = SnpDistributionSpec.from_dict(spec.to_dict())
    assert np.array_equal(again.frequencies, spec.frequencies)
    assert np.array_equal(again.weights, spec.weights)
    assert again.seed == spec.seed
