"""Distance-based membership inference and attribute inference against a released synthetic set."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .datakit import Dataset, SurvivalDataset
from .evalkit import MetricError, auroc, pairwise_distances, roc_curve
from .models import GbdtConfig, train_gbdt
from .privacy import membership_advantage_bound

METRICS = ("euclidean", "manhattan", "cosine")
STATS = ("mean", "min", "max", "std", "range")


class AttackError(ValueError):
    pass


@dataclass
class MiaConfig:
    k_neighbors: int = 5
    metrics: tuple[str, ...] = METRICS
    n_trees: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    train_frac: float = 0.8
    repeats: int = 5
    seed: int = 0

    def __post_init__(self):
        self.metrics = tuple(self.metrics)
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if not 0 < self.train_frac < 1:
            raise ValueError("train_frac must lie in (0, 1)")
        unknown = set(self.metrics) - set(METRICS)
        if unknown:
            raise ValueError(f"unknown distance metrics {sorted(unknown)}")

    def attacker(self, objective="logistic", seed=0, subsample=1.0) -> GbdtConfig:
        return GbdtConfig(rounds=self.n_trees, learning_rate=self.learning_rate,
                          max_depth=self.max_depth, subsample_fraction=subsample,
                          objective=objective, seed=seed)


def feature_names(metrics=METRICS):
    return [f"{m}_{s}" for m in metrics for s in STATS]


def mia_feature_matrix(X, X_syn, k=5, metrics=METRICS) -> np.ndarray:
    """Summaries of the k nearest synthetic distances, 5 per metric, one row per record."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    X_syn = np.atleast_2d(np.asarray(X_syn, dtype=float))
    if k > X_syn.shape[0]:
        raise AttackError(f"k={k} exceeds the {X_syn.shape[0]} synthetic rows")
    blocks = []
    for metric in metrics:
        D = pairwise_distances(X, X_syn, metric)
        near = np.sort(np.partition(D, k - 1, axis=1)[:, :k], axis=1)
        lo, hi = near[:, 0], near[:, -1]
        blocks.append(np.column_stack([near.mean(axis=1), lo, hi, near.std(axis=1), hi - lo]))
    return np.hstack(blocks)


def mia_features(x, X_syn, k=5, metrics=METRICS) -> np.ndarray:
    return mia_feature_matrix(np.asarray(x, dtype=float)[None, :], X_syn, k, metrics)[0]


def membership_advantage(scores, labels) -> float:
    fpr, tpr, _ = roc_curve(scores, labels)
    return float(np.max(tpr - fpr))


def tpr_at_fpr(scores, labels, target=0.1) -> float:
    fpr, tpr, _ = roc_curve(scores, labels)
    return float(np.max(tpr[fpr <= target + 1e-12]))


def stratified_split(labels, train_frac, seed):
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in (0.0, 1.0):
        idx = rng.permutation(np.flatnonzero(labels == c))
        cut = int(round(train_frac * idx.size))
        train.append(idx[:cut])
        test.append(idx[cut:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def grouped_split(F, labels, train_frac, seed):
    """Stratified split that keeps rows with identical features on one side.

    A record listed as both member and nonmember would otherwise leak its
    training label into the held-out half.
    """
    _, first, groups = np.unique(F, axis=0, return_index=True, return_inverse=True)
    if first.size == F.shape[0]:
        return stratified_split(labels, train_frac, seed)
    groups = groups.ravel()
    # stratify groups by their label composition
    n_pos = np.bincount(groups, weights=labels)
    size = np.bincount(groups)
    strata = np.unique(np.column_stack([n_pos, size]), axis=0, return_inverse=True)[1].ravel()
    rng = np.random.default_rng(seed)
    in_train = np.zeros(size.size, dtype=bool)
    for c in range(strata.max() + 1):
        idx = rng.permutation(np.flatnonzero(strata == c))
        in_train[idx[:int(round(train_frac * idx.size))]] = True
    rows = np.arange(F.shape[0])
    return rows[in_train[groups]], rows[~in_train[groups]]


@dataclass
class MiaReport:
    auroc: tuple[float, float]
    membership_advantage: tuple[float, float]
    tpr_at_fpr10: tuple[float, float]
    theoretical_bound: float | None = None
    per_repeat: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def _mean_sd(values):
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


def run_mia(members, nonmembers, X_syn, config: MiaConfig | None = None, epsilon=None,
            delta=1e-5) -> MiaReport:
    """Train a boosted attacker on neighbour-distance features and score held-out records."""
    config = config or MiaConfig()
    members = np.atleast_2d(np.asarray(members, dtype=float))
    nonmembers = np.atleast_2d(np.asarray(nonmembers, dtype=float))
    if members.shape[0] == 0 or nonmembers.shape[0] == 0:
        raise AttackError("members and nonmembers must both be nonempty")
    F = mia_feature_matrix(np.vstack([members, nonmembers]), X_syn, config.k_neighbors,
                           config.metrics)
    y = np.r_[np.ones(members.shape[0]), np.zeros(nonmembers.shape[0])]

    rows = []
    for r in range(config.repeats):
        tr, te = grouped_split(F, y, config.train_frac, config.seed + r)
        if np.unique(y[tr]).size < 2 or np.unique(y[te]).size < 2:
            raise AttackError(f"repeat {r}: attack split has a single class")
        model = train_gbdt(F[tr], None, config.attacker(seed=config.seed + r), targets=y[tr])
        s = model.predict(F[te])
        rows.append({"auroc": auroc(s, y[te]),
                     "membership_advantage": membership_advantage(s, y[te]),
                     "tpr_at_fpr10": tpr_at_fpr(s, y[te], 0.1)})
    bound = membership_advantage_bound(epsilon, delta) if epsilon is not None else None
    return MiaReport(*(_mean_sd([row[k] for row in rows])
                       for k in ("auroc", "membership_advantage", "tpr_at_fpr10")),
                     theoretical_bound=bound, per_repeat=rows)


# ---------------------------------------------------------------- attribute inference


def attack_table(data):
    """Feature matrix with outcome columns appended, plus the column names."""
    if isinstance(data, SurvivalDataset):
        return (np.column_stack([data.features, data.times, data.events]),
                list(data.feature_names) + ["time", "event"])
    if isinstance(data, Dataset):
        return np.column_stack([data.features, data.labels]), list(data.feature_names) + ["label"]
    raise TypeError(f"cannot tabulate {type(data).__name__}")


@dataclass
class AiaReport:
    target: str
    applicable: bool
    r2: float | None = None
    r2_sd: float | None = None
    accuracy: float | None = None
    auroc: float | None = None
    binary: bool = False
    note: str = ""

    def to_dict(self):
        return asdict(self)


def r2_score(y, pred) -> float:
    y = np.asarray(y, dtype=float)
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot == 0:
        raise MetricError("constant target")
    return float(1.0 - np.sum((y - pred) ** 2) / ss_tot)


def run_aia(syn_table, real_table, columns, target, config: MiaConfig | None = None,
            seeds=5, subsample=0.8) -> AiaReport:
    """Regress ``target`` on the other released columns, score on real rows."""
    config = config or MiaConfig()
    columns = list(columns)
    if target not in columns:
        raise AttackError(f"target {target!r} not among columns")
    syn_table = np.asarray(syn_table, dtype=float)
    real_table = np.asarray(real_table, dtype=float)
    if syn_table.shape[1] != len(columns) or real_table.shape[1] != len(columns):
        raise AttackError("table widths do not match the column list")
    j = columns.index(target)
    keep = [c for c in range(len(columns)) if c != j]
    y_syn, y_real = syn_table[:, j], real_table[:, j]
    if np.ptp(y_syn) == 0:
        return AiaReport(target, False, note="constant target in synthetic data")
    if np.ptp(y_real) == 0:
        return AiaReport(target, False, note="constant target in evaluation data")
    binary = bool(np.all(np.isin(y_real, (0.0, 1.0))))

    r2s, accs, aucs = [], [], []
    for s in range(seeds):
        model = train_gbdt(syn_table[:, keep], None,
                           config.attacker("squared", config.seed + s, subsample), targets=y_syn)
        pred = model.predict(real_table[:, keep])
        r2s.append(r2_score(y_real, pred))
        if binary:
            accs.append(float(np.mean((pred >= 0.5) == (y_real == 1))))
            aucs.append(auroc(pred, y_real))
    r2, r2_sd = _mean_sd(r2s)
    return AiaReport(target, True, r2, r2_sd,
                     float(np.mean(accs)) if binary else None,
                     float(np.mean(aucs)) if binary else None, binary)
