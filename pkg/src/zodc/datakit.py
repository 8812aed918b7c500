"""Tabular datasets: ingestion, splitting, scaling and benchmark generators."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

CATEGORICAL_PREFIX = "categorical:"
STD_FLOOR = 1e-12


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=float)
        if X.ndim != 2:
            raise DataError(f"features must be 2-d, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise DataError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError("dataset needs at least one row and one feature")
        if not np.all(np.isfinite(X)):
            raise DataError("non-finite feature values")
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise DataError("labels must be 0/1")
        names = tuple(self.feature_names) or tuple(f"x{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError("feature_names length does not match feature count")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def strata(self) -> np.ndarray:
        return self.labels

    def take(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.feature_names)

    def with_features(self, X) -> "Dataset":
        return Dataset(X, self.labels, self.feature_names)


@dataclass(frozen=True)
class SurvivalDataset:
    features: np.ndarray
    times: np.ndarray
    events: np.ndarray
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        t = np.asarray(self.times, dtype=float)
        e = np.asarray(self.events, dtype=float)
        if X.ndim != 2:
            raise DataError(f"features must be 2-d, got shape {X.shape}")
        if not (X.shape[0] == t.shape[0] == e.shape[0]):
            raise DataError("features, times and events disagree in length")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError("dataset needs at least one row and one feature")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(t)):
            raise DataError("non-finite values")
        if np.any(t <= 0):
            raise DataError("non-positive duration")
        if not np.all(np.isin(e, (0.0, 1.0))):
            raise DataError("events must be 0/1")
        if not np.any(e == 1):
            raise DataError("no observed events")
        names = tuple(self.feature_names) or tuple(f"x{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError("feature_names length does not match feature count")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "events", e)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def strata(self) -> np.ndarray:
        return self.events

    def take(self, idx) -> "SurvivalDataset":
        return SurvivalDataset(self.features[idx], self.times[idx], self.events[idx], self.feature_names)

    def with_features(self, X) -> "SurvivalDataset":
        return SurvivalDataset(X, self.times, self.events, self.feature_names)

    def with_times(self, times) -> "SurvivalDataset":
        return SurvivalDataset(self.features, times, self.events, self.feature_names)


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.7
    val_frac: float = 0.1
    test_frac: float = 0.2
    seed: int = 0
    stratify: bool = True

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(not 0 < f < 1 for f in fracs):
            raise DataError(f"split fractions must lie in (0, 1), got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-12:
            raise DataError(f"split fractions must sum to 1, got {sum(fracs)!r}")


@dataclass(frozen=True)
class TimeScaler:
    scale_s: float

    def __post_init__(self):
        if not self.scale_s > 0:
            raise DataError("time scale must be positive")

    def transform(self, times):
        return np.asarray(times, dtype=float) / self.scale_s

    def inverse(self, scaled):
        return np.asarray(scaled, dtype=float) * self.scale_s


@dataclass(frozen=True)
class FeatureScaler:
    means: np.ndarray
    stds: np.ndarray

    def apply(self, X):
        return (np.asarray(X, dtype=float) - self.means) / self.stds

    def inverse(self, Z):
        return np.asarray(Z, dtype=float) * self.stds + self.means

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "stds": self.stds.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureScaler":
        return cls(np.asarray(doc["means"], dtype=float), np.asarray(doc["stds"], dtype=float))


# --------------------------------------------------------------------------- CSV


def load_csv(path, label_column: str = "label", time_column: str | None = None,
             event_column: str | None = None):
    """Read a CSV into a Dataset, or a SurvivalDataset when time and event columns are given.

    Columns named ``categorical:<name>`` are one-hot expanded into
    ``<name>=<value>`` columns, one per distinct value in sorted order.
    """
    if not os.path.exists(path):
        raise DataError(f"missing file: {path}")
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise DataError(f"empty file: {path}") from None
    if raw.shape[0] == 0:
        raise DataError(f"empty file: {path}")

    survival = time_column is not None or event_column is not None
    if survival and (time_column is None or event_column is None):
        raise DataError("survival data needs both time_column and event_column")
    outcome_cols = [time_column, event_column] if survival else [label_column]
    for col in outcome_cols:
        if col not in raw.columns:
            raise DataError(f"missing column: {col!r}")

    blocks, names = [], []
    for col in raw.columns:
        if col in outcome_cols:
            continue
        if col.startswith(CATEGORICAL_PREFIX):
            base = col[len(CATEGORICAL_PREFIX):]
            values = raw[col]
            if (values == "").any():
                row = int(np.flatnonzero(values.to_numpy() == "")[0])
                raise DataError(f"missing value at row {row + 1}, column {col!r}")
            for level in sorted(values.unique()):
                blocks.append((values == level).to_numpy(dtype=float))
                names.append(f"{base}={level}")
        else:
            blocks.append(_numeric_column(raw, col))
            names.append(col)
    if not blocks:
        raise DataError("no feature columns")
    X = np.column_stack(blocks)

    if survival:
        times = _numeric_column(raw, time_column)
        if np.any(times <= 0):
            row = int(np.flatnonzero(times <= 0)[0])
            raise DataError(f"non-positive duration at row {row + 1}")
        events = _numeric_column(raw, event_column)
        return SurvivalDataset(X, times, events, tuple(names))
    return Dataset(X, _numeric_column(raw, label_column), tuple(names))


def _to_float(cell):
    try:
        return float(cell)
    except ValueError:
        return np.nan


def _numeric_column(raw: pd.DataFrame, col: str) -> np.ndarray:
    cells = raw[col].str.strip().to_numpy()
    try:
        # numpy's parser is correctly rounded, pandas' fast path is not
        values = cells.astype(float)
    except ValueError:
        values = np.array([_to_float(c) for c in cells])
    bad = ~np.isfinite(values)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise DataError(f"non-numeric cell {raw[col].iloc[row]!r} at row {row + 1}, column {col!r}")
    return values


def save_csv(data, path, label_column: str = "label", time_column: str = "time",
             event_column: str = "event") -> None:
    frame = pd.DataFrame(data.features, columns=list(data.feature_names))
    if isinstance(data, SurvivalDataset):
        frame[time_column] = data.times
        frame[event_column] = data.events.astype(int)
    else:
        frame[label_column] = data.labels.astype(int)
    tmp = f"{path}.tmp"
    frame.to_csv(tmp, index=False, float_format="%.17g", lineterminator="\n")
    os.replace(tmp, path)


# ------------------------------------------------------------------------- split


def split(data, spec: SplitSpec):
    """Partition rows into (train, val, test) according to ``spec``."""
    n = data.n
    fracs = np.array([spec.train_frac, spec.val_frac, spec.test_frac])
    n_train = int(round(n * fracs[0]))
    n_val = int(round(n * fracs[1]))
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise DataError(f"split fractions leave an empty split for n={n}")
    rng = np.random.default_rng(spec.seed)

    if spec.stratify:
        if n < 10:
            raise DataError("stratified split needs at least 10 rows")
        strata = data.strata
        # spread each stratum evenly over [0, 1), then cut the merged ordering
        rank = np.empty(n)
        for value in np.unique(strata):
            members = rng.permutation(np.flatnonzero(strata == value))
            rank[members] = (np.arange(members.size) + 0.5) / members.size
        jitter = rng.random(n)
        order = np.lexsort((jitter, rank))
    else:
        order = rng.permutation(n)

    train_idx = np.sort(order[:n_train])
    val_idx = np.sort(order[n_train:n_train + n_val])
    test_idx = np.sort(order[n_train + n_val:])
    return data.take(train_idx), data.take(val_idx), data.take(test_idx)


def split_indices(data, spec: SplitSpec):
    """Like :func:`split` but returns the three index arrays."""
    marker = np.arange(data.n, dtype=float)[:, None]
    proxy = _with_marker(data, marker)
    parts = split(proxy, spec)
    return tuple(p.features[:, 0].astype(int) for p in parts)


def _with_marker(data, marker):
    if isinstance(data, SurvivalDataset):
        return SurvivalDataset(marker, data.times, data.events)
    return Dataset(marker, data.labels)


# ----------------------------------------------------------------------- scaling


def scale_survival_times(times, events):
    """Divide durations by the IQR of event times, or their median when the IQR is zero."""
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=float)
    event_times = times[events == 1]
    if event_times.size == 0:
        raise DataError("no uncensored events to derive a time scale from")
    q25, q75 = np.percentile(event_times, [25, 75])
    s = q75 - q25
    if not s > 0:
        s = float(np.median(event_times))
        if s == 0:
            raise DataError("median event time is zero")
    scaler = TimeScaler(float(s))
    return scaler.transform(times), scaler


def fit_feature_scaler(train) -> FeatureScaler:
    X = train.features if hasattr(train, "features") else np.asarray(train, dtype=float)
    if X.shape[0] < 2:
        raise DataError("need at least two rows to fit a scaler")
    means = X.mean(axis=0)
    stds = np.maximum(X.std(axis=0), STD_FLOOR)
    return FeatureScaler(means, stds)


def apply(scaler: FeatureScaler, X):
    return scaler.apply(X)


# -------------------------------------------------------------------- benchmarks

DEFAULT_WEIBULL_COEFS = (0.8, -0.6, 0.4)


@dataclass
class BenchmarkParams:
    delta: float = 2.0
    censor_frac: float = 0.3
    weibull_shape: float = 1.5
    coefs: Sequence[float] = field(default_factory=lambda: DEFAULT_WEIBULL_COEFS)
    intercept: float = 1.0


def generate_benchmark(kind: str, n: int, d: int, seed: int, params: BenchmarkParams | dict | None = None):
    """Synthetic stand-ins for the restricted clinical cohorts.

    ``two_gaussians``: balanced labels, class means at +/- delta/2 on the first
    ceil(d/2) coordinates, identity covariance.

    ``weibull_survival``: log of the Weibull scale is ``intercept + coefs . x[:3]``
    (larger means longer survival); a ``censor_frac`` share of rows, picked
    independently, is censored at a time uniform on (0, T).
    """
    if params is None:
        params = BenchmarkParams()
    elif isinstance(params, dict):
        params = BenchmarkParams(**params)
    if n < 100 or d < 2:
        raise DataError("benchmarks need n >= 100 and d >= 2")
    rng = np.random.default_rng(seed)
    names = tuple(f"x{j}" for j in range(d))

    if kind == "two_gaussians":
        y = np.zeros(n)
        y[: n // 2] = 1.0
        y = rng.permutation(y)
        k = math.ceil(d / 2)
        shift = np.zeros(d)
        shift[:k] = params.delta / 2.0
        X = rng.standard_normal((n, d)) + np.where(y[:, None] == 1, shift, -shift)
        return Dataset(X, y, names)

    if kind == "weibull_survival":
        if not 0 <= params.censor_frac <= 0.9:
            raise DataError(f"censor_frac must lie in [0, 0.9], got {params.censor_frac}")
        coefs = np.zeros(d)
        c = np.asarray(params.coefs, dtype=float)[: min(3, d)]
        coefs[: c.size] = c
        X = rng.standard_normal((n, d))
        log_scale = params.intercept + X @ coefs
        T = np.exp(log_scale) * rng.weibull(params.weibull_shape, size=n)
        censored = rng.random(n) < params.censor_frac
        C = T * rng.uniform(0.0, 1.0, size=n)
        times = np.where(censored, C, T)
        times = np.maximum(times, 1e-8)
        events = (~censored).astype(float)
        return SurvivalDataset(X, times, events, names)

    raise DataError(f"unknown benchmark kind {kind!r}")


def weibull_cox_coefficients(params: BenchmarkParams | None = None, d: int = 3) -> np.ndarray:
    """Log hazard ratios implied by the Weibull generator: -shape * coefs."""
    params = params or BenchmarkParams()
    coefs = np.zeros(d)
    c = np.asarray(params.coefs, dtype=float)[: min(3, d)]
    coefs[: c.size] = c
    return -params.weibull_shape * coefs
