from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


class NumericalError(FloatingPointError):
    pass


@dataclass(frozen=True)
class OptimizerState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8

    @classmethod
    def zeros_like(cls, X, lr=1e-3, **kw) -> "OptimizerState":
        X = np.asarray(X, dtype=float)
        return cls(np.zeros_like(X), np.zeros_like(X), 0, lr, **kw)


def optimizer_step(state: OptimizerState, X, G):
    """One bias-corrected Adam update; returns (new X, new state)."""
    G = np.asarray(G, dtype=float)
    if G.shape != state.first_moment.shape or np.shape(X) != G.shape:
        raise ValueError(f"shape mismatch: X {np.shape(X)}, G {G.shape}")
    if not np.all(np.isfinite(G)):
        bad = np.argwhere(~np.isfinite(G))[0]
        raise NumericalError(f"non-finite gradient entry at row {bad[0]}, column {bad[1]}")
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1 - state.beta1) * G
    v = state.beta2 * state.second_moment + (1 - state.beta2) * G * G
    m_hat = m / (1 - state.beta1**t)
    v_hat = v / (1 - state.beta2**t)
    X_new = np.asarray(X, dtype=float) - state.lr * m_hat / (np.sqrt(v_hat) + state.eps_hat)
    return X_new, replace(state, first_moment=m, second_moment=v, step_count=t)
