from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ..datakit import Dataset, SurvivalDataset


@dataclass(frozen=True)
class SyntheticDataset:
    """Optimised inputs with outcomes that stay fixed for the whole run."""

    X: np.ndarray
    labels: np.ndarray | None = None
    times: np.ndarray | None = None
    events: np.ndarray | None = None
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2 or X.shape[0] < 2:
            raise ValueError("synthetic data needs at least two rows")
        if (self.labels is None) == (self.times is None):
            raise ValueError("give either labels or (times, events)")
        object.__setattr__(self, "X", X)
        if not self.feature_names:
            object.__setattr__(self, "feature_names", tuple(f"x{j}" for j in range(X.shape[1])))

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def is_survival(self) -> bool:
        return self.times is not None

    @property
    def outcome(self) -> tuple:
        return (self.times, self.events) if self.is_survival else (self.labels,)

    def with_X(self, X) -> "SyntheticDataset":
        return SyntheticDataset(X, self.labels, self.times, self.events, self.feature_names)

    def as_dataset(self):
        if self.is_survival:
            return SurvivalDataset(self.X, self.times, self.events, self.feature_names)
        return Dataset(self.X, self.labels, self.feature_names)


def class_counts(ipc, class_ratio=(1, 1)):
    """Split 2 * ipc rows over the two classes by ``class_ratio`` (largest remainder)."""
    total = 2 * ipc
    r = np.asarray(class_ratio, dtype=float)
    raw = total * r / r.sum()
    counts = np.floor(raw).astype(int)
    for i in np.argsort(-(raw - counts), kind="stable")[: total - counts.sum()]:
        counts[i] += 1
    return tuple(int(c) for c in counts)


def init_synthetic_classification(ipc, d, class_ratio=(1, 1), seed=0, feature_names=()):
    if ipc < 1:
        raise ValueError("ipc must be >= 1")
    n0, n1 = class_counts(ipc, class_ratio)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n0 + n1, d))
    y = np.r_[np.zeros(n0), np.ones(n1)]
    return SyntheticDataset(X, labels=y, feature_names=tuple(feature_names))


def init_synthetic_survival(ipc_total, d, real_times, real_events, n_bins=10, seed=0,
                            feature_names=()):
    """Half the rows (rounded up) are events with times spread over equal-width bins
    from the first real event time to the last real censoring time, visited
    round-robin; the rest are censored at that last censoring time.
    """
    m = int(ipc_total)
    if m < 2:
        raise ValueError("need at least two synthetic rows")
    real_times = np.asarray(real_times, dtype=float)
    real_events = np.asarray(real_events, dtype=float)
    if not np.any(real_events == 1):
        raise ValueError("real data has no events")
    lo = float(real_times[real_events == 1].min())
    if np.any(real_events == 0):
        hi = float(real_times[real_events == 0].max())
    else:
        hi = float(real_times.max())
        warnings.warn("real data has no censored rows; using the last event time as the horizon")
    hi = max(hi, lo)
    rng = np.random.default_rng(seed)
    n_unc = math.ceil(m / 2)
    edges = np.linspace(lo, hi, n_bins + 1)
    bins = np.arange(n_unc) % n_bins
    t_unc = rng.uniform(edges[bins], edges[bins + 1])
    times = np.r_[t_unc, np.full(m - n_unc, hi)]
    events = np.r_[np.ones(n_unc), np.zeros(m - n_unc)]
    X = rng.standard_normal((m, d))
    return SyntheticDataset(X, times=times, events=events, feature_names=tuple(feature_names))
