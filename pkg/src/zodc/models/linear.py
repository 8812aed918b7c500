"""Penalised linear models: Cox proportional hazards and logistic regression."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit

from ..datakit import SurvivalDataset
from .base import ConvergenceError, ModelError, Predictor, clamp_probability


@dataclass
class CoxConfig:
    l2_strength: float = 1.0
    max_iters: int = 100
    tol: float = 1e-6

    def __post_init__(self):
        if self.l2_strength < 0:
            raise ModelError("l2_strength must be non-negative")
        if not self.tol > 0:
            raise ModelError("tol must be positive")


def _risk_set_index(times):
    """Order rows by ascending time; each row maps to the first sorted slot of its tie group."""
    order = np.argsort(times, kind="stable")
    t_sorted = times[order]
    first = np.searchsorted(t_sorted, t_sorted, side="left")
    return order, first


def cox_partial_nll(beta, X, times, events):
    """Breslow negative partial log-likelihood (summed over events)."""
    eta = X @ beta
    order, first = _risk_set_index(times)
    eta_s = eta[order]
    shift = eta_s.max()
    w = np.exp(eta_s - shift)
    S0 = np.cumsum(w[::-1])[::-1][first]
    ev = events[order] == 1
    return float(-np.sum(eta_s[ev] - (np.log(S0[ev]) + shift)))


def _cox_objective(beta, X, times, events, l2, need_hess=True):
    eta = X @ beta
    order, first = _risk_set_index(times)
    Xs, eta_s = X[order], eta[order]
    ev = events[order] == 1
    shift = eta_s.max()
    w = np.exp(eta_s - shift)
    rev = slice(None, None, -1)
    S0 = np.cumsum(w[rev])[rev][first]
    S1 = np.cumsum((w[:, None] * Xs)[rev], axis=0)[rev][first]
    nll = -np.sum(eta_s[ev] - (np.log(S0[ev]) + shift))
    mean_x = S1[ev] / S0[ev][:, None]
    grad = -(Xs[ev] - mean_x).sum(axis=0)
    value = nll + 0.5 * l2 * beta @ beta
    grad = grad + l2 * beta
    if not need_hess:
        return value, grad, None
    outer = w[:, None, None] * Xs[:, :, None] * Xs[:, None, :]
    S2 = np.cumsum(outer[rev], axis=0)[rev][first][ev]
    hess = (S2 / S0[ev][:, None, None]).sum(axis=0) - mean_x.T @ mean_x
    hess = hess + l2 * np.eye(X.shape[1])
    return value, grad, hess


def _newton(objective, beta, max_iters, tol, what):
    value, grad, hess = objective(beta, True)
    for _ in range(max_iters):
        gnorm = float(np.linalg.norm(grad))
        if gnorm < tol:
            return beta
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        t = 1.0
        for _halving in range(40):
            cand = beta - t * step
            cval, _, _ = objective(cand, False)
            if np.isfinite(cval) and cval <= value + 1e-12 * abs(value):
                break
            t *= 0.5
        else:
            raise ConvergenceError(f"{what}: step-halving exhausted", gnorm)
        beta = cand
        value, grad, hess = objective(beta, True)
    gnorm = float(np.linalg.norm(grad))
    if gnorm < tol:
        return beta
    raise ConvergenceError(f"{what}: no convergence within {max_iters} iterations", gnorm)


class CoxModel(Predictor):
    kind = "cox"
    task = "cox_risk"

    def __init__(self, beta, config: CoxConfig | None = None):
        self.beta = np.asarray(beta, dtype=float)
        self.n_features = self.beta.size
        self.config = config or CoxConfig()

    @property
    def hazard_ratios(self) -> np.ndarray:
        return np.exp(self.beta)

    def predict(self, X) -> np.ndarray:
        X = self._check(X)
        return X @ self.beta

    def to_dict(self) -> dict:
        return {"kind": self.kind, "task": self.task, "beta": self.beta.tolist(),
                "config": asdict(self.config)}

    @classmethod
    def from_dict(cls, doc) -> "CoxModel":
        return cls(doc["beta"], CoxConfig(**doc["config"]))


def train_cox(train: SurvivalDataset, config: CoxConfig | None = None) -> CoxModel:
    """Newton fit of the l2-penalised Breslow partial likelihood.

    The penalty is ``0.5 * l2_strength * ||beta||^2`` added to the summed
    negative partial log-likelihood.
    """
    cfg = config or CoxConfig()
    if not isinstance(train, SurvivalDataset):
        raise ModelError("train_cox needs a SurvivalDataset")
    if not np.any(train.events == 1):
        raise ModelError("no events in training data")
    X, t, e = train.features, train.times, train.events

    def objective(beta, need_hess):
        return _cox_objective(beta, X, t, e, cfg.l2_strength, need_hess)

    beta = _newton(objective, np.zeros(X.shape[1]), cfg.max_iters, cfg.tol, "cox")
    return CoxModel(beta, cfg)


class LogisticModel(Predictor):
    """Logistic regression; also a differentiable surrogate for gradient checks."""

    kind = "logistic"
    task = "binary_classification"

    def __init__(self, beta, intercept, l2_strength=1.0):
        self.beta = np.asarray(beta, dtype=float)
        self.intercept = float(intercept)
        self.n_features = self.beta.size
        self.l2_strength = float(l2_strength)

    def predict(self, X) -> np.ndarray:
        X = self._check(X)
        return clamp_probability(expit(X @ self.beta + self.intercept))

    def input_gradient(self, X) -> np.ndarray:
        """Row-wise d predict / d x: f (1 - f) beta, zero where the output clamp binds."""
        X = self._check(X)
        f = expit(X @ self.beta + self.intercept)
        slope = np.where(clamp_probability(f) == f, f * (1 - f), 0.0)
        return slope[:, None] * self.beta[None, :]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "task": self.task, "beta": self.beta.tolist(),
                "intercept": self.intercept, "l2_strength": self.l2_strength}

    @classmethod
    def from_dict(cls, doc) -> "LogisticModel":
        return cls(doc["beta"], doc["intercept"], doc.get("l2_strength", 1.0))


def train_logistic(train, l2_strength: float = 1.0, max_iters: int = 100, tol: float = 1e-8) -> LogisticModel:
    """Newton fit of summed log-loss + 0.5 * l2 * ||beta||^2 (intercept unpenalised)."""
    X = np.asarray(train.features, dtype=float)
    y = np.asarray(train.labels, dtype=float)
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    pen = np.full(d + 1, float(l2_strength))
    pen[-1] = 0.0

    def objective(w, need_hess):
        z = Xa @ w
        value = float(np.sum(np.logaddexp(0.0, z) - y * z) + 0.5 * np.sum(pen * w * w))
        p = expit(z)
        grad = Xa.T @ (p - y) + pen * w
        if not need_hess:
            return value, grad, None
        hess = (Xa * (p * (1 - p))[:, None]).T @ Xa + np.diag(pen)
        return value, grad, hess

    w = _newton(objective, np.zeros(d + 1), max_iters, tol, "logistic")
    return LogisticModel(w[:-1], w[-1], l2_strength)
