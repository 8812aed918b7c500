"""Downstream utility metrics: ROC, confusion ratios, concordance, Kaplan-Meier, bootstrap."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import rankdata


class MetricError(ValueError):
    """Raised when a metric is undefined on the given input."""


def _binary(labels):
    y = np.asarray(labels, dtype=float)
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise MetricError("both classes are required")
    return y, n_pos, n_neg


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC; tied scores count one half."""
    y, n_pos, n_neg = _binary(labels)
    ranks = rankdata(np.asarray(scores, dtype=float))
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve(scores, labels):
    """Exact empirical ROC over every distinct score cut-point (predict positive if score >= t).

    Returns (fpr, tpr, thresholds) starting at the all-negative point.
    """
    y, n_pos, n_neg = _binary(labels)
    s = np.asarray(scores, dtype=float)
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    last_of_tie = np.r_[s_sorted[1:] != s_sorted[:-1], True]
    tp = np.cumsum(y_sorted == 1)[last_of_tie]
    fp = np.cumsum(y_sorted == 0)[last_of_tie]
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    thresholds = np.r_[np.inf, s_sorted[last_of_tie]]
    return fpr, tpr, thresholds


def youden_threshold(scores, labels) -> float:
    fpr, tpr, thr = roc_curve(scores, labels)
    i = int(np.argmax(tpr - fpr))
    return float(thr[i]) if np.isfinite(thr[i]) else float(np.max(scores)) + 1.0


def confusion_metrics(scores, labels, threshold):
    """(sensitivity, specificity, ppv, npv) for the rule score >= threshold.

    PPV or NPV is None when the rule predicts no positives or no negatives.
    """
    y, n_pos, n_neg = _binary(labels)
    pred = np.asarray(scores, dtype=float) >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    tn = n_neg - fp
    fn = n_pos - tp
    ppv = tp / (tp + fp) if tp + fp else None
    npv = tn / (tn + fn) if tn + fn else None
    return tp / n_pos, tn / n_neg, ppv, npv


def concordance_index(risk_scores, times, events) -> float:
    """Harrell's C: pairs with an earlier observed event; risk ties count one half.

    A pair tied in time is comparable when only the first member is an event.
    """
    r = np.asarray(risk_scores, dtype=float)
    t = np.asarray(times, dtype=float)
    e = np.asarray(events, dtype=float) == 1
    num = 0.0
    den = 0
    chunk = max(1, 2_000_000 // max(t.size, 1))
    ev = np.flatnonzero(e)
    for lo in range(0, ev.size, chunk):
        i = ev[lo:lo + chunk]
        ti, ri = t[i][:, None], r[i][:, None]
        comparable = (ti < t[None, :]) | ((ti == t[None, :]) & ~e[None, :])
        conc = np.sum(comparable & (ri > r[None, :]))
        ties = np.sum(comparable & (ri == r[None, :]))
        num += conc + 0.5 * ties
        den += int(np.sum(comparable))
    if den == 0:
        raise MetricError("no comparable pairs")
    return float(num / den)


@dataclass
class KmCurve:
    event_times: np.ndarray
    survival_probs: np.ndarray
    at_risk_counts: np.ndarray

    def survival_at(self, t) -> np.ndarray:
        """Right-continuous step function S(t)."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.event_times, t, side="right")
        return np.r_[1.0, self.survival_probs][idx]

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("time,survival\n")
            fh.write(f"{0.0!r},{1.0!r}\n")
            for a, b in zip(self.event_times, self.survival_probs):
                fh.write(f"{float(a)!r},{float(b)!r}\n")


def km_curve(times, events) -> KmCurve:
    """Product-limit estimate over distinct event times."""
    t = np.asarray(times, dtype=float)
    e = np.asarray(events, dtype=float) == 1
    uniq = np.unique(t[e])
    t_sorted = np.sort(t)
    at_risk = t.size - np.searchsorted(t_sorted, uniq, side="left")
    ev_sorted = np.sort(t[e])
    deaths = np.searchsorted(ev_sorted, uniq, side="right") - np.searchsorted(ev_sorted, uniq, side="left")
    probs = np.cumprod(1.0 - deaths / at_risk)
    return KmCurve(uniq, probs, at_risk)


def km_sup_distance(a: KmCurve, b: KmCurve) -> float:
    grid = np.union1d(a.event_times, b.event_times)
    if grid.size == 0:
        return 0.0
    return float(np.max(np.abs(a.survival_at(grid) - b.survival_at(grid))))


def risk_group_curves(risk, times, events, n_groups=2, cuts=None):
    """KM curves of risk groups split at quantiles of ``risk`` (or at given ``cuts``)."""
    risk = np.asarray(risk, dtype=float)
    if cuts is None:
        cuts = np.quantile(risk, np.linspace(0, 1, n_groups + 1)[1:-1])
    group = np.searchsorted(np.asarray(cuts), risk, side="right")
    return [km_curve(np.asarray(times)[group == g], np.asarray(events)[group == g])
            for g in range(len(cuts) + 1)]


# ---------------------------------------------------------------- distances


def pairwise_distances(A, B, metric) -> np.ndarray:
    """Distances between rows; cosine distance to or from a zero vector is 1."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if metric == "cosine":
        na = np.linalg.norm(A, axis=1)
        nb = np.linalg.norm(B, axis=1)
        denom = na[:, None] * nb[None, :]
        with np.errstate(invalid="ignore", divide="ignore"):
            sim = (A @ B.T) / denom
        dist = np.where(denom > 0, 1.0 - np.clip(sim, -1.0, 1.0), 1.0)
        return dist
    name = {"euclidean": "euclidean", "manhattan": "cityblock"}[metric]
    return cdist(A, B, metric=name)


def nn_distance_distribution(A, B, metric="euclidean", exclude_self=None) -> np.ndarray:
    """Distance from each row of A to its nearest row of B.

    With ``exclude_self`` (default: A is B) the row's own index is skipped.
    """
    if exclude_self is None:
        exclude_self = A is B
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape[0] == 0:
        raise MetricError("reference set is empty")
    D = pairwise_distances(A, B, metric)
    if exclude_self:
        np.fill_diagonal(D, np.inf)
    return D.min(axis=1)


# ---------------------------------------------------------------- bootstrap


def bootstrap_ci(metric, scores, outcomes, n_resamples=1000, seed=0, stratify=None,
                 max_retries=100):
    """Percentile 95% interval of ``metric(scores, *outcomes)`` over resamples.

    ``outcomes`` is a tuple of arrays (labels) or (times, events). Resamples on
    which the metric raises are redrawn, at most ``max_retries`` times in total.
    Returns (mean of replicates, 2.5th percentile, 97.5th percentile).
    """
    if n_resamples < 100:
        raise ValueError("n_resamples must be at least 100")
    scores = np.asarray(scores, dtype=float)
    outcomes = tuple(np.asarray(o) for o in outcomes)
    n = scores.size
    rng = np.random.default_rng(seed)
    groups = None
    if stratify is not None:
        stratify = np.asarray(stratify)
        groups = [np.flatnonzero(stratify == v) for v in np.unique(stratify)]
    values = []
    retries = 0
    while len(values) < n_resamples:
        if groups is None:
            idx = rng.integers(0, n, size=n)
        else:
            idx = np.concatenate([g[rng.integers(0, g.size, size=g.size)] for g in groups])
        try:
            values.append(metric(scores[idx], *(o[idx] for o in outcomes)))
        except MetricError:
            retries += 1
            if retries > max_retries:
                raise
    values = np.asarray(values)
    lo, hi = np.percentile(values, [2.5, 97.5])
    return float(values.mean()), float(lo), float(hi)


# ------------------------------------------------------------------ reports


@dataclass
class UtilityReport:
    metrics: dict = field(default_factory=dict)
    threshold_used: float | None = None
    n_test: int = 0

    def to_dict(self):
        return asdict(self)

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def _ci_entry(triple):
    mean, lo, hi = triple
    return {"mean": mean, "ci_low": lo, "ci_high": hi}


def classification_report(val_scores, val_labels, test_scores, test_labels, n_resamples=1000,
                          seed=0, threshold=None) -> UtilityReport:
    """AUROC and threshold metrics on the test split; the threshold is frozen from validation."""
    if threshold is None:
        threshold = youden_threshold(val_scores, val_labels)
    labels = np.asarray(test_labels)
    report = UtilityReport(threshold_used=float(threshold), n_test=int(labels.size))
    report.metrics["auroc"] = _ci_entry(bootstrap_ci(auroc, test_scores, (labels,), n_resamples,
                                                     seed, stratify=labels))
    names = ("sensitivity", "specificity", "ppv", "npv")
    for k, name in enumerate(names):
        def one(s, y, k=k):
            value = confusion_metrics(s, y, threshold)[k]
            if value is None:
                raise MetricError(f"{name} undefined")
            return value
        point = confusion_metrics(test_scores, labels, threshold)[k]
        if point is None:
            report.metrics[name] = None
            continue
        try:
            report.metrics[name] = _ci_entry(bootstrap_ci(one, test_scores, (labels,), n_resamples,
                                                          seed, stratify=labels))
        except MetricError:
            report.metrics[name] = None
    return report


def survival_report(test_risk, test_times, test_events, n_resamples=1000, seed=0) -> UtilityReport:
    report = UtilityReport(n_test=int(np.size(test_times)))
    report.metrics["c_index"] = _ci_entry(bootstrap_ci(
        concordance_index, test_risk, (test_times, test_events), n_resamples, seed))
    return report


def point_metric(name, scores, *outcomes) -> float:
    if name == "auroc":
        return auroc(scores, *outcomes)
    if name == "c_index":
        return concordance_index(scores, *outcomes)
    raise MetricError(f"unknown metric {name!r}")


def finite_or_none(x):
    return None if x is None or not math.isfinite(x) else x
