import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zodc.attacks import (AttackError, MiaConfig, attack_table, grouped_split,
                          membership_advantage,
                          mia_feature_matrix, mia_features, run_aia, run_mia, stratified_split,
                          tpr_at_fpr)
from zodc.datakit import Dataset, SurvivalDataset
from zodc.privacy import membership_advantage_bound

from oracles import random_binary_instance

FAST = MiaConfig(n_trees=30, repeats=3)


# ---------------------------------------------------------------- features


def test_feature_hand_example():
    f = mia_features([0.0], np.array([[0.0], [2.0]]), k=2, metrics=("euclidean",))
    np.testing.assert_allclose(f, [1, 0, 2, 1, 2])


def test_feature_layout_and_coincident_point(rng):
    X_syn = rng.standard_normal((10, 4))
    f = mia_features(X_syn[3], X_syn, k=1)
    assert f.shape == (15,)
    assert f[1] == 0 and f[6] == 0  # euclidean and manhattan minimum
    # k=1: std and range vanish for every metric
    np.testing.assert_array_equal(f[[3, 4, 8, 9, 13, 14]], 0)


def test_feature_errors(rng):
    with pytest.raises(AttackError, match="exceeds"):
        mia_feature_matrix(rng.standard_normal((2, 3)), rng.standard_normal((4, 3)), k=5)
    with pytest.raises(ValueError):
        MiaConfig(k_neighbors=0)
    with pytest.raises(ValueError):
        MiaConfig(metrics=("chebyshev",))


@settings(max_examples=30)
@given(st.integers(0, 2**31), st.integers(1, 6))
def test_features_invariant_to_synthetic_order(seed, k):
    rng = np.random.default_rng(seed)
    X, X_syn = rng.standard_normal((8, 3)), rng.standard_normal((12, 3))
    a = mia_feature_matrix(X, X_syn, k)
    b = mia_feature_matrix(X, X_syn[rng.permutation(12)], k)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_features_match_sorted_oracle(rng):
    X, X_syn = rng.standard_normal((6, 3)), rng.standard_normal((9, 3))
    F = mia_feature_matrix(X, X_syn, 4, ("manhattan",))
    for i, x in enumerate(X):
        near = np.sort(np.abs(X_syn - x).sum(axis=1))[:4]
        np.testing.assert_allclose(F[i], [near.mean(), near[0], near[-1], near.std(),
                                          near[-1] - near[0]])


# ---------------------------------------------------------------- ROC summaries


@settings(max_examples=80)
@given(st.integers(0, 2**31), st.integers(2, 40))
def test_advantage_matches_threshold_sweep(seed, n):
    scores, labels = random_binary_instance(np.random.default_rng(seed), n)
    P, N = labels.sum(), (labels == 0).sum()
    sweep = [np.sum((scores >= t) & (labels == 1)) / P - np.sum((scores >= t) & (labels == 0)) / N
             for t in np.r_[np.unique(scores), np.inf]]
    adv = membership_advantage(scores, labels)
    assert adv == pytest.approx(max(sweep), abs=1e-12)
    assert 0 <= adv <= 1


def test_tpr_at_fpr_example():
    s = np.array([0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.05, 0.01, 0.0])
    y = np.array([1, 1, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0])
    # one negative above 0.6 is 1/9 > 0.1, so only the top two positives count
    assert tpr_at_fpr(s, y, 0.1) == pytest.approx(2 / 3)


# ---------------------------------------------------------------- run_mia


def test_mia_indistinguishable_groups(rng):
    rows = rng.standard_normal((300, 4))
    X_syn = rng.standard_normal((50, 4))
    rep = run_mia(rows, rows, X_syn, FAST)
    assert abs(rep.auroc[0] - 0.5) <= 0.05
    assert len(rep.per_repeat) == 3


@settings(max_examples=30)
@given(st.integers(0, 2**31), st.integers(0, 30))
def test_grouped_split_keeps_duplicates_together(seed, n_dup):
    rng = np.random.default_rng(seed)
    F = np.round(rng.standard_normal((40, 2)), 2)
    F[40 - n_dup:] = F[:n_dup]
    y = np.r_[np.ones(20), np.zeros(20)]
    tr, te = grouped_split(F, y, 0.8, seed)
    assert np.array_equal(np.sort(np.r_[tr, te]), np.arange(40))
    train_rows = {tuple(r) for r in F[tr]}
    assert not any(tuple(r) in train_rows for r in F[te])
    if n_dup == 0:
        for a, b in zip((tr, te), stratified_split(y, 0.8, seed)):
            np.testing.assert_array_equal(a, b)


def test_mia_verbatim_leak(rng):
    members = rng.standard_normal((200, 5))
    nonmembers = rng.standard_normal((200, 5))
    rep = run_mia(members, nonmembers, members, FAST)
    assert rep.auroc[0] >= 0.9
    assert rep.membership_advantage[0] <= 1


def test_mia_reports_bound(rng):
    a, b = rng.standard_normal((40, 2)), rng.standard_normal((40, 2))
    rep = run_mia(a, b, rng.standard_normal((10, 2)), MiaConfig(n_trees=5, repeats=1),
                  epsilon=2.5)
    assert rep.theoretical_bound == membership_advantage_bound(2.5, 1e-5)
    assert set(rep.to_dict()) >= {"auroc", "membership_advantage", "tpr_at_fpr10"}


def test_mia_errors(rng):
    X_syn = rng.standard_normal((10, 2))
    with pytest.raises(AttackError):
        run_mia(np.empty((0, 2)), rng.standard_normal((5, 2)), X_syn)
    with pytest.raises(AttackError, match="single class"):
        run_mia(rng.standard_normal((1, 2)), rng.standard_normal((20, 2)), X_syn,
                MiaConfig(n_trees=5, repeats=1))


def test_mia_deterministic(rng):
    a, b, s = rng.standard_normal((60, 3)), rng.standard_normal((60, 3)), rng.standard_normal((20, 3))
    cfg = MiaConfig(n_trees=10, repeats=2)
    assert run_mia(a, b, s, cfg).per_repeat == run_mia(a, b, s, cfg).per_repeat


# ---------------------------------------------------------------- attribute inference


def test_attack_table_columns(rng):
    d = Dataset(rng.standard_normal((4, 2)), [0, 1, 0, 1])
    table, cols = attack_table(d)
    assert cols[-1] == "label" and table.shape == (4, 3)
    s = SurvivalDataset(rng.standard_normal((4, 2)), [1, 2, 3, 4], [1, 0, 1, 1])
    table, cols = attack_table(s)
    assert cols[-2:] == ["time", "event"] and table.shape == (4, 4)


def test_aia_independent_target(rng):
    syn, real = rng.standard_normal((400, 4)), rng.standard_normal((400, 4))
    rep = run_aia(syn, real, ["a", "b", "c", "t"], "t", seeds=3)
    assert rep.applicable and rep.r2 <= 0.05


def test_aia_copy_leak(rng):
    def table(n):
        X = rng.standard_normal((n, 3))
        return np.column_stack([X, X[:, 1]])
    rep = run_aia(table(500), table(500), ["a", "b", "c", "t"], "t", seeds=2)
    assert rep.r2 >= 0.99


def test_aia_constant_target_not_applicable(rng):
    syn = np.column_stack([rng.standard_normal((50, 2)), np.ones(50)])
    real = np.column_stack([rng.standard_normal((50, 2)), rng.random(50)])
    rep = run_aia(syn, real, ["a", "b", "t"], "t")
    assert not rep.applicable and rep.r2 is None and "constant" in rep.note


def test_aia_binary_random_predictions_hit_majority_rate(rng):
    # target independent of features with prevalence 0.2: thresholded predictions stay
    # near the base rate, so accuracy is close to the majority rate of 0.8
    n = 1000
    syn = np.column_stack([rng.standard_normal((n, 3)), rng.random(n) < 0.2])
    real = np.column_stack([rng.standard_normal((n, 3)), rng.random(n) < 0.2])
    rep = run_aia(syn, real, ["a", "b", "c", "t"], "t", seeds=3)
    assert rep.binary
    majority = max(real[:, 3].mean(), 1 - real[:, 3].mean())
    assert abs(rep.accuracy - majority) <= 0.03
    assert abs(rep.auroc - 0.5) <= 0.06


def test_aia_errors(rng):
    t = rng.standard_normal((5, 3))
    with pytest.raises(AttackError):
        run_aia(t, t, ["a", "b", "c"], "z")
    with pytest.raises(AttackError):
        run_aia(t, t[:, :2], ["a", "b", "c"], "a")
