"""Gradient-boosted regression trees with exact greedy split search."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit, log_ndtr

from ..datakit import Dataset, SurvivalDataset
from ._kernels import ensemble_raw_score, grow_tree
from .base import ModelError, Predictor, clamp_probability

OBJECTIVES = ("logistic", "squared", "aft_normal")
HESS_FLOOR = 1e-6
_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


@dataclass
class GbdtConfig:
    rounds: int = 100
    learning_rate: float = 0.1
    max_depth: int = 5
    subsample_fraction: float = 0.7
    objective: str = "logistic"
    aft_sigma: float = 1.0
    l2_leaf: float = 1.0
    min_samples_leaf: int = 1
    min_child_weight: float = 1.0
    class_weighting: bool = False
    patience: int = 10
    min_rounds: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.rounds < 1:
            raise ModelError("rounds must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ModelError("learning_rate must lie in (0, 1]")
        if self.max_depth < 1:
            raise ModelError("max_depth must be >= 1")
        if not 0 < self.subsample_fraction <= 1:
            raise ModelError("subsample_fraction must lie in (0, 1]")
        if self.objective not in OBJECTIVES:
            raise ModelError(f"unknown objective {self.objective!r}")
        if self.aft_sigma <= 0:
            raise ModelError("aft_sigma must be positive")


# ---------------------------------------------------------------- objectives


def _grad_hess(objective, F, target, sigma):
    if objective == "logistic":
        p = expit(F)
        return p - target, np.maximum(p * (1 - p), HESS_FLOOR)
    if objective == "squared":
        return F - target, np.ones_like(F)
    log_t, event = target
    z = (log_t - F) / sigma
    g = np.empty_like(F)
    h = np.empty_like(F)
    obs = event == 1
    g[obs] = -z[obs] / sigma
    h[obs] = 1.0 / sigma**2
    cen = ~obs
    if cen.any():
        zc = z[cen]
        # hazard of the standard normal, phi(z) / (1 - Phi(z))
        lam = np.exp(-0.5 * zc**2 - _LOG_SQRT_2PI - log_ndtr(-zc))
        g[cen] = -lam / sigma
        h[cen] = lam * (lam - zc) / sigma**2
    return g, np.maximum(h, HESS_FLOOR)


def objective_loss(objective, F, target, sigma=1.0, weights=None):
    """Mean loss of raw scores ``F``; the early-stopping and monotonicity metric."""
    if objective == "logistic":
        # log(1 + e^F) - y F, computed stably
        per_row = np.logaddexp(0.0, F) - target * F
    elif objective == "squared":
        per_row = 0.5 * (F - target) ** 2
    else:
        log_t, event = target
        z = (log_t - F) / sigma
        # log-normal density on t: includes the log(sigma * t) Jacobian
        per_row = np.where(
            event == 1,
            0.5 * z**2 + _LOG_SQRT_2PI + math.log(sigma) + log_t,
            -log_ndtr(z),
        )
    if weights is None:
        return float(per_row.mean())
    return float(np.sum(per_row * weights) / np.sum(weights))


# --------------------------------------------------------------------- trees


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def depth(self) -> int:
        depth = np.zeros(self.feature.size, dtype=int)
        for i in range(self.feature.size):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            r, nd = rows[inner], node[inner]
            go_left = X[r, f[inner]] <= self.threshold[nd]
            node[inner] = np.where(go_left, self.left[nd], self.right[nd])

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, doc) -> "Tree":
        return cls(
            np.asarray(doc["feature"], dtype=np.int64),
            np.asarray(doc["threshold"], dtype=float),
            np.asarray(doc["left"], dtype=np.int64),
            np.asarray(doc["right"], dtype=np.int64),
            np.asarray(doc["value"], dtype=float),
        )


def build_tree(X, g, h, rows, cfg: GbdtConfig) -> Tree:
    """Grow one tree on ``rows`` from per-row gradients and hessians."""
    arrays = grow_tree(X, g, h, np.asarray(rows, dtype=np.int64), cfg.max_depth, cfg.l2_leaf,
                       cfg.min_samples_leaf, cfg.min_child_weight, cfg.learning_rate)
    return Tree(*arrays)


# ------------------------------------------------------------------ ensemble


class GbdtModel(Predictor):
    """A boosted ensemble behind the black-box ``predict`` contract."""

    kind = "gbdt"

    def __init__(self, trees, base_score, config: GbdtConfig, n_features, task):
        self.trees = list(trees)
        self.base_score = float(base_score)
        self.config = config
        self.n_features = int(n_features)
        self.task = task
        self._pack()

    def _pack(self):
        T = len(self.trees)
        width = max((t.feature.size for t in self.trees), default=1)
        self._feat = np.full((T, width), -1, dtype=np.int64)
        self._thr = np.zeros((T, width))
        self._left = np.zeros((T, width), dtype=np.int64)
        self._right = np.zeros((T, width), dtype=np.int64)
        self._val = np.zeros((T, width))
        for i, t in enumerate(self.trees):
            w = t.feature.size
            self._feat[i, :w] = t.feature
            self._thr[i, :w] = t.threshold
            self._left[i, :w] = t.left
            self._right[i, :w] = t.right
            self._val[i, :w] = t.value

    def raw_score(self, X) -> np.ndarray:
        X = np.ascontiguousarray(self._check(X))
        return ensemble_raw_score(X, self._feat, self._thr, self._left, self._right, self._val,
                                  self.base_score)

    def predict(self, X) -> np.ndarray:
        F = self.raw_score(X)
        if self.task == "binary_classification":
            return clamp_probability(expit(F))
        return F

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "task": self.task,
            "n_features": self.n_features,
            "base_score": self.base_score,
            "config": asdict(self.config),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, doc) -> "GbdtModel":
        cfg = GbdtConfig(**doc["config"])
        trees = [Tree.from_dict(t) for t in doc["trees"]]
        return cls(trees, doc["base_score"], cfg, doc["n_features"], doc["task"])


_TASK_OF = {"logistic": "binary_classification", "squared": "regression", "aft_normal": "aft_log_time"}


def _targets(data, cfg):
    if cfg.objective == "aft_normal":
        if not isinstance(data, SurvivalDataset):
            raise ModelError("aft_normal needs a SurvivalDataset")
        if not np.any(data.events == 1):
            raise ModelError("no events in training data")
        return (np.log(data.times), data.events)
    if isinstance(data, SurvivalDataset):
        raise ModelError(f"objective {cfg.objective!r} needs labelled data, not survival data")
    return data.labels


def _row_targets(target, idx):
    if isinstance(target, tuple):
        return tuple(t[idx] for t in target)
    return target[idx]


def train_gbdt(train, val=None, config: GbdtConfig | None = None, targets=None) -> GbdtModel:
    """Fit a boosted ensemble; ``val`` enables early stopping on the objective's loss.

    ``targets`` overrides the dataset outcome (used by the squared-loss attacker,
    which regresses on an arbitrary column).
    """
    cfg = config or GbdtConfig()
    X = np.asarray(train.features if hasattr(train, "features") else train, dtype=float)
    n, d = X.shape
    if n == 0:
        raise ModelError("empty training data")
    y = targets if targets is not None else _targets(train, cfg)

    weights = np.ones(n)
    if cfg.objective == "logistic":
        y = np.asarray(y, dtype=float)
        pos = y.mean()
        if pos in (0.0, 1.0):
            raise ModelError("training labels contain a single class")
        if cfg.class_weighting:
            weights = np.where(y == 1, 0.5 / pos, 0.5 / (1 - pos))
        wpos = np.sum(weights * y) / np.sum(weights)
        base = math.log(wpos / (1 - wpos))
    elif cfg.objective == "squared":
        y = np.asarray(y, dtype=float)
        base = float(y.mean())
    else:
        base = float(np.mean(y[0]))

    if val is not None:
        Xv = np.asarray(val.features, dtype=float)
        yv = _targets(val, cfg) if targets is None else None
        Fv = np.full(Xv.shape[0], base)
        use_val = yv is not None and Xv.shape[0] > 0
    else:
        use_val = False

    rng = np.random.default_rng(cfg.seed)
    F = np.full(n, base)
    trees, best_loss, best_len, stale = [], np.inf, 0, 0
    n_sub = max(1, int(math.floor(cfg.subsample_fraction * n)))
    for r in range(cfg.rounds):
        g, h = _grad_hess(cfg.objective, F, y, cfg.aft_sigma)
        g, h = g * weights, h * weights
        if n_sub < n:
            rows = np.sort(rng.choice(n, size=n_sub, replace=False))
        else:
            rows = np.arange(n)
        tree = build_tree(X, g, h, rows, cfg)
        trees.append(tree)
        F = F + tree.predict(X)
        if use_val:
            Fv = Fv + tree.predict(Xv)
            loss = objective_loss(cfg.objective, Fv, yv, cfg.aft_sigma)
            if loss < best_loss - 1e-12:
                best_loss, best_len, stale = loss, r + 1, 0
            else:
                stale += 1
                if stale >= cfg.patience and r + 1 >= cfg.min_rounds:
                    break
    if use_val:
        trees = trees[: max(best_len, min(cfg.min_rounds, len(trees)))]
    return GbdtModel(trees, base, cfg, d, _TASK_OF[cfg.objective])


def training_loss_curve(model: GbdtModel, data) -> list[float]:
    """Training loss after each boosting round (round 0 is the base score)."""
    cfg = model.config
    y = _targets(data, cfg)
    F = np.full(data.n, model.base_score)
    curve = [objective_loss(cfg.objective, F, y, cfg.aft_sigma)]
    for t in model.trees:
        F = F + t.predict(data.features)
        curve.append(objective_loss(cfg.objective, F, y, cfg.aft_sigma))
    return curve
