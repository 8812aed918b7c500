from __future__ import annotations

import hashlib
import json

import numpy as np

PROB_CLAMP = 1e-7
TASKS = ("binary_classification", "cox_risk", "aft_log_time", "regression")


class ModelError(ValueError):
    """Raised for invalid training input or prediction calls."""


class ConvergenceError(RuntimeError):
    def __init__(self, message, grad_norm):
        super().__init__(f"{message} (final gradient norm {grad_norm:.3e})")
        self.grad_norm = grad_norm


def clamp_probability(p):
    return np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


class Predictor:
    """Black-box contract: a fitted model exposing only ``predict``.

    Subclasses set ``kind``, ``task`` and ``n_features`` and implement
    ``predict``, ``to_dict`` and ``from_dict``.
    """

    kind = "abstract"
    task = "binary_classification"
    n_features = 0

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1 and X.size == 0:
            X = X.reshape(0, self.n_features)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ModelError(f"expected {self.n_features} features, got array of shape {X.shape}")
        return X

    def predict(self, X) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def to_dict(self) -> dict:  # pragma: no cover - interface
        raise NotImplementedError

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()
