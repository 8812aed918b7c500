"""Supervision and matching losses over black-box predictions, with their output gradients.

Every function here works on prediction vectors only; the model is never
differentiated. ``task`` is one of ``classification``, ``cox`` or ``aft``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp


class LossError(ValueError):
    pass


@dataclass(frozen=True)
class LossBreakdown:
    supervision: float
    match: float
    alpha: float
    total: float

    def to_dict(self):
        return {"supervision": self.supervision, "match": self.match,
                "alpha": self.alpha, "total": self.total}


# ------------------------------------------------------------ classification


def loss_pred(predictions, labels) -> float:
    """Mean binary cross-entropy."""
    f = np.asarray(predictions, dtype=float)
    y = np.asarray(labels, dtype=float)
    return float(np.mean(-y * np.log(f) - (1 - y) * np.log1p(-f)))


def _class_groups(labels):
    labels = np.asarray(labels)
    return [np.flatnonzero(labels == c) for c in (0, 1)]


def loss_match_classification(pred_syn, y_syn, pred_real, y_real) -> float:
    """Sum over classes of |mean synthetic prediction - mean real prediction|."""
    total = 0.0
    for syn_idx, real_idx in zip(_class_groups(y_syn), _class_groups(y_real)):
        if syn_idx.size == 0 or real_idx.size == 0:
            raise LossError("both classes must be present in both batches")
        total += abs(np.mean(pred_syn[syn_idx]) - np.mean(pred_real[real_idx]))
    return float(total)


# ------------------------------------------------------------------ survival


def loss_cox(scores, times, events) -> float:
    """Negative Cox partial log-likelihood over uncensored rows; risk set T_j >= T_i."""
    f = np.asarray(scores, dtype=float)
    T = np.asarray(times, dtype=float)
    E = np.asarray(events)
    ev = np.flatnonzero(E == 1)
    if ev.size == 0:
        raise LossError("Cox loss needs at least one uncensored row")
    order = np.argsort(T, kind="stable")
    Ts, fs = T[order], f[order]
    # log of the suffix sums of exp(f), evaluated stably
    log_suffix = np.logaddexp.accumulate(fs[::-1])[::-1]
    first = np.searchsorted(Ts, T[ev], side="left")
    return float(-np.sum(f[ev] - log_suffix[first]))


def loss_aft(predicted_log_times, times) -> float:
    """Mean Smooth-L1 (transition at 1) between predictions and log times."""
    r = np.asarray(predicted_log_times, dtype=float) - np.log(np.asarray(times, dtype=float))
    a = np.abs(r)
    return float(np.mean(np.where(a < 1, 0.5 * r * r, a - 0.5)))


def survival_strata(times, events, K):
    """Split rows into K near-equal groups after sorting by (event desc, time asc)."""
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=float)
    if K > times.size:
        raise LossError(f"K={K} strata exceed batch size {times.size}")
    order = np.lexsort((times, -events))
    return np.array_split(order, K)


def loss_match_survival(pred_syn, syn_outcomes, pred_real, real_outcomes, K) -> float:
    """(1/K) sum_k |mean synthetic prediction - mean real prediction| per stratum."""
    syn_groups = survival_strata(*syn_outcomes, K)
    real_groups = survival_strata(*real_outcomes, K)
    gaps = [np.mean(pred_syn[s]) - np.mean(pred_real[r]) for s, r in zip(syn_groups, real_groups)]
    return float(np.mean(np.abs(gaps)))


# --------------------------------------------------------------- composition


def adaptive_alpha(l_sup, l_match, rho, alpha_eps) -> float:
    return (l_sup / (l_match + alpha_eps)) * (rho / (1 - rho))


def supervision_loss(task, pred_syn, syn_outcome):
    if task == "classification":
        return loss_pred(pred_syn, syn_outcome[0])
    if task == "cox":
        return loss_cox(pred_syn, *syn_outcome)
    if task == "aft":
        return loss_aft(pred_syn, syn_outcome[0])
    raise LossError(f"unknown task {task!r}")


def match_loss(task, pred_syn, syn_outcome, pred_real, real_outcome, K=4):
    if task == "classification":
        return loss_match_classification(pred_syn, syn_outcome[0], pred_real, real_outcome[0])
    return loss_match_survival(pred_syn, syn_outcome, pred_real, real_outcome, K)


def composite_from_predictions(task, pred_syn, syn_outcome, pred_real, real_outcome,
                               rho, alpha_eps, K=4, alpha=None) -> LossBreakdown:
    """supervision + alpha * match, with alpha from :func:`adaptive_alpha` unless given."""
    sup = supervision_loss(task, pred_syn, syn_outcome)
    match = match_loss(task, pred_syn, syn_outcome, pred_real, real_outcome, K)
    if alpha is None:
        alpha = adaptive_alpha(sup, match, rho, alpha_eps)
    return LossBreakdown(sup, match, float(alpha), sup + alpha * match)


# ------------------------------------------------------------ output gradient


def _cox_output_gradient(f, T, E):
    f = np.asarray(f, dtype=float)
    T = np.asarray(T, dtype=float)
    E = np.asarray(E, dtype=float)
    shift = f.max()
    w = np.exp(f - shift)
    order = np.argsort(T, kind="stable")
    Ts = T[order]
    S0_sorted = np.cumsum(w[order][::-1])[::-1]
    ev = np.flatnonzero(E == 1)
    ev_first = np.searchsorted(Ts, T[ev], side="left")
    inv_S0 = 1.0 / S0_sorted[ev_first]
    ev_times = T[ev]
    by_time = np.argsort(ev_times, kind="stable")
    cum = np.r_[0.0, np.cumsum(inv_S0[by_time])]
    # row i belongs to the risk set of every event k with T_k <= T_i
    reach = np.searchsorted(ev_times[by_time], T, side="right")
    return -E + w * cum[reach]


def loss_output_gradient(task, pred_syn, syn_outcome, pred_real, real_outcome, alpha, K=4):
    """Analytic d(composite loss)/d(synthetic predictions) with alpha held fixed.

    The real-batch predictions are constants; |.| uses sign(.) with sign(0) = 0.
    """
    f = np.asarray(pred_syn, dtype=float)
    m = f.size
    if task == "classification":
        y = np.asarray(syn_outcome[0], dtype=float)
        grad = (-y / f + (1 - y) / (1 - f)) / m
        for syn_idx, real_idx in zip(_class_groups(y), _class_groups(real_outcome[0])):
            gap = np.mean(f[syn_idx]) - np.mean(pred_real[real_idx])
            grad[syn_idx] += alpha * np.sign(gap) / syn_idx.size
        return grad

    if task == "cox":
        grad = _cox_output_gradient(f, *syn_outcome)
    elif task == "aft":
        r = f - np.log(np.asarray(syn_outcome[0], dtype=float))
        grad = np.clip(r, -1.0, 1.0) / m
    else:
        raise LossError(f"unknown task {task!r}")
    syn_groups = survival_strata(*syn_outcome, K)
    real_groups = survival_strata(*real_outcome, K)
    for s, r in zip(syn_groups, real_groups):
        gap = np.mean(f[s]) - np.mean(pred_real[r])
        grad[s] += alpha * np.sign(gap) / (K * s.size)
    return grad
