import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zodc.evalkit import (MetricError, auroc, bootstrap_ci, classification_report,
                          concordance_index, confusion_metrics, km_curve, km_sup_distance,
                          nn_distance_distribution, pairwise_distances, risk_group_curves,
                          roc_curve, survival_report, youden_threshold)

from oracles import (brute_auroc, brute_cindex, brute_km, random_binary_instance,
                     random_survival_instance)


# ---------------------------------------------------------------- AUROC


def test_auroc_examples():
    assert auroc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert auroc([0.5] * 4, [0, 1, 0, 1]) == 0.5
    assert auroc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    with pytest.raises(MetricError):
        auroc([0.1, 0.2], [1, 1])


@settings(max_examples=150)
@given(st.integers(0, 2**31), st.integers(2, 200))
def test_auroc_matches_brute_force(seed, n):
    scores, labels = random_binary_instance(np.random.default_rng(seed), n)
    assert auroc(scores, labels) == pytest.approx(brute_auroc(scores, labels), abs=1e-12)
    assert auroc(scores, labels) == pytest.approx(1 - auroc(-scores, labels), abs=1e-12)


def test_roc_curve_endpoints(rng):
    scores, labels = random_binary_instance(rng, 50)
    fpr, tpr, thr = roc_curve(scores, labels)
    assert (fpr[0], tpr[0], fpr[-1], tpr[-1]) == (0, 0, 1, 1)
    assert np.all(np.diff(fpr) >= 0) and np.all(np.diff(tpr) >= 0)
    assert np.trapezoid(tpr, fpr) == pytest.approx(auroc(scores, labels))


# ---------------------------------------------------------------- confusion


def test_confusion_examples():
    s, y = [0.2, 0.7, 0.6, 0.9], [0, 0, 1, 1]
    assert confusion_metrics(s, y, 0.0)[:2] == (1.0, 0.0)
    sens, spec, ppv, npv = confusion_metrics(s, y, 1.0)
    assert (sens, spec, ppv) == (0.0, 1.0, None)
    assert confusion_metrics(s, y, 0.65) == (0.5, 0.5, 0.5, 0.5)


@given(st.integers(0, 2**31), st.integers(2, 80), st.floats(-2, 2))
def test_confusion_count_identity(seed, n, tau):
    scores, labels = random_binary_instance(np.random.default_rng(seed), n)
    sens, spec, _, _ = confusion_metrics(scores, labels, tau)
    P, N = int(labels.sum()), int((labels == 0).sum())
    assert sens * P + (1 - spec) * N == pytest.approx(np.sum(scores >= tau))


def test_youden_threshold_separable():
    s = np.array([0.1, 0.2, 0.3, 0.7, 0.8])
    y = np.array([0, 0, 0, 1, 1])
    t = youden_threshold(s, y)
    assert confusion_metrics(s, y, t)[:2] == (1.0, 1.0)


# ---------------------------------------------------------------- C-index


def test_cindex_examples():
    assert concordance_index([3, 2, 1], [1, 2, 3], [1, 1, 1]) == 1.0
    assert concordance_index([1, 2, 3], [1, 2, 3], [1, 1, 1]) == 0.0
    assert concordance_index([3, 1, 2], [1, 2, 3], [1, 0, 1]) == 1.0
    with pytest.raises(MetricError):
        concordance_index([1, 2], [1, 2], [0, 0])


@settings(max_examples=150)
@given(st.integers(0, 2**31), st.integers(2, 200))
def test_cindex_matches_brute_force(seed, n):
    risk, times, events = random_survival_instance(np.random.default_rng(seed), n)
    expected = brute_cindex(risk, times, events)
    if expected is None:
        with pytest.raises(MetricError):
            concordance_index(risk, times, events)
    else:
        assert concordance_index(risk, times, events) == pytest.approx(expected, abs=1e-12)


# ---------------------------------------------------------------- Kaplan-Meier


def test_km_hand_fixture():
    km = km_curve([1, 2, 3], [1, 0, 1])
    np.testing.assert_array_equal(km.event_times, [1, 3])
    np.testing.assert_allclose(km.survival_probs, [2 / 3, 0.0], atol=1e-12)
    np.testing.assert_allclose(km.survival_at([0.5, 1, 2, 2.9, 3, 10]),
                               [1, 2 / 3, 2 / 3, 2 / 3, 0, 0], atol=1e-12)
    np.testing.assert_array_equal(km.at_risk_counts, [3, 1])


def test_km_tied_fixture():
    # at t=2: 4 at risk, 2 deaths; at t=5: 1 at risk after the censor at 4
    km = km_curve([1, 2, 2, 4, 5], [1, 1, 1, 0, 1])
    np.testing.assert_allclose(km.survival_probs, [0.8, 0.8 * 0.5, 0.0], atol=1e-12)


def test_km_no_events_and_uniform():
    assert np.all(km_curve([1, 2, 3], [0, 0, 0]).survival_at([0, 5]) == 1.0)
    km = km_curve([4, 1, 3, 2], [1, 1, 1, 1])
    np.testing.assert_allclose(km.survival_probs, [0.75, 0.5, 0.25, 0.0], atol=1e-12)


@settings(max_examples=60)
@given(st.integers(0, 2**31), st.integers(1, 60))
def test_km_matches_brute_force(seed, n):
    _, times, events = random_survival_instance(np.random.default_rng(seed), n)
    km = km_curve(times, events)
    grid = np.r_[0.0, np.unique(times), times.max() + 1]
    np.testing.assert_allclose(km.survival_at(grid), brute_km(times, events, grid), atol=1e-12)
    assert np.all(np.diff(km.survival_probs) <= 0)
    assert np.all((km.survival_probs >= 0) & (km.survival_probs <= 1))


def test_km_equals_empirical_without_censoring(rng):
    t = rng.exponential(size=100)
    km = km_curve(t, np.ones(100))
    grid = np.linspace(0, t.max() * 1.1, 50)
    np.testing.assert_allclose(km.survival_at(grid), [(t > g).mean() for g in grid], atol=1e-12)


def test_km_csv_and_sup_distance(tmp_path):
    a = km_curve([1, 2, 3], [1, 1, 1])
    b = km_curve([1, 2, 3, 4], [1, 1, 1, 1])
    assert km_sup_distance(a, a) == 0.0
    # gaps after t = 1, 2, 3 are 1/12, 1/6, 1/4
    assert km_sup_distance(a, b) == pytest.approx(0.25, abs=1e-12)
    path = tmp_path / "km.csv"
    a.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "time,survival" and len(lines) == 5


def test_risk_groups_split_at_median(rng):
    risk = rng.standard_normal(100)
    curves = risk_group_curves(risk, rng.exponential(size=100), np.ones(100), n_groups=2)
    assert len(curves) == 2
    assert sum(c.at_risk_counts[0] for c in curves) == 100


# ---------------------------------------------------------------- distances


def test_nn_distance_examples(rng):
    A = rng.standard_normal((20, 3))
    d_self = nn_distance_distribution(A, A)
    D = pairwise_distances(A, A, "euclidean")
    np.testing.assert_allclose(d_self, np.sort(D, axis=1)[:, 1])
    B = np.vstack([A[:5], rng.standard_normal((5, 3))])
    assert np.all(nn_distance_distribution(A[:5], B) == 0)
    with pytest.raises(MetricError):
        nn_distance_distribution(A, np.empty((0, 3)))


def test_cosine_zero_vector():
    D = pairwise_distances([[0.0, 0.0], [1.0, 0.0]], [[0.0, 0.0], [2.0, 0.0], [-1.0, 0.0]],
                           "cosine")
    np.testing.assert_allclose(D, [[1, 1, 1], [1, 0, 2]], atol=1e-12)


def test_manhattan():
    assert pairwise_distances([[0, 0]], [[1, -2]], "manhattan")[0, 0] == 3.0


# ---------------------------------------------------------------- bootstrap


def test_bootstrap_constant_and_deterministic(rng):
    s, y = random_binary_instance(rng, 100)
    assert bootstrap_ci(lambda s, y: 0.7, s, (y,)) == (pytest.approx(0.7),) * 3
    a = bootstrap_ci(auroc, s, (y,), seed=3, stratify=y)
    assert a == bootstrap_ci(auroc, s, (y,), seed=3, stratify=y)
    assert a[1] <= a[0] <= a[2]
    with pytest.raises(ValueError):
        bootstrap_ci(auroc, s, (y,), n_resamples=10)


def test_bootstrap_width_scales_root_n():
    rng = np.random.default_rng(0)

    def width(n):
        y = np.r_[np.zeros(n // 2), np.ones(n // 2)]
        s = rng.standard_normal(n) + y
        _, lo, hi = bootstrap_ci(auroc, s, (y,), n_resamples=500, seed=1, stratify=y)
        return hi - lo

    ratio = width(400) / width(1600)
    assert 2 / 1.5 <= ratio <= 2 * 1.5


def test_bootstrap_redraws_undefined_resamples():
    y = np.r_[np.zeros(19), 1.0]
    s = np.arange(20.0)
    # unstratified resamples often miss the lone positive
    mean, lo, hi = bootstrap_ci(auroc, s, (y,), n_resamples=100, max_retries=1000)
    assert mean == 1.0
    with pytest.raises(MetricError):
        bootstrap_ci(auroc, s, (y,), n_resamples=100, max_retries=0)


# ---------------------------------------------------------------- reports


def test_classification_report(rng, tmp_path):
    y = np.r_[np.zeros(100), np.ones(100)]
    s = rng.standard_normal(200) + 2 * y
    rep = classification_report(s, y, s, y, n_resamples=200)
    for name in ("auroc", "sensitivity", "specificity", "ppv", "npv"):
        m = rep.metrics[name]
        assert 0 <= m["ci_low"] <= m["mean"] <= m["ci_high"] <= 1
    assert rep.threshold_used == youden_threshold(s, y)
    rep.to_json(tmp_path / "r.json")
    assert json.loads((tmp_path / "r.json").read_text())["n_test"] == 200


def test_classification_report_no_predicted_positives(rng):
    y = np.r_[np.zeros(50), np.ones(50)]
    s = rng.random(100)
    rep = classification_report(s, y, s, y, n_resamples=100, threshold=5.0)
    assert rep.metrics["ppv"] is None
    assert rep.metrics["sensitivity"]["mean"] == 0.0


def test_survival_report(rng):
    risk, times, events = random_survival_instance(rng, 150)
    rep = survival_report(risk, times, events, n_resamples=100)
    c = rep.metrics["c_index"]
    assert c["ci_low"] <= c["mean"] <= c["ci_high"]
