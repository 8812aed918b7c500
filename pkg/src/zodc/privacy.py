"""Per-example clipping, adaptive Gaussian noise and Renyi-DP accounting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, logsumexp

from .rng import DP_NOISE, keyed_rng

DEFAULT_MULTIPLIERS = (0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0)
DEFAULT_ORDERS = tuple(sorted([1.5] + list(range(2, 65)) + [96, 128, 256]))


class PrivacyError(ValueError):
    pass


@dataclass
class DpConfig:
    clip_norm: float = 1.0
    sigma_base: float = 1.0
    sigma_grid_multipliers: tuple[float, ...] = DEFAULT_MULTIPLIERS
    delta: float = 1e-5
    rdp_orders: tuple[float, ...] = DEFAULT_ORDERS
    noise_seed: int = 0

    def __post_init__(self):
        self.sigma_grid_multipliers = tuple(float(v) for v in self.sigma_grid_multipliers)
        self.rdp_orders = tuple(float(a) for a in self.rdp_orders)
        mult = self.sigma_grid_multipliers
        if not self.clip_norm > 0:
            raise PrivacyError("clip_norm must be positive")
        if not self.sigma_base > 0:
            raise PrivacyError("sigma_base must be positive")
        if list(mult) != sorted(mult) or len(set(mult)) != len(mult):
            raise PrivacyError("sigma_grid_multipliers must be strictly ascending")
        if mult[0] != 0.25:
            raise PrivacyError("the smallest sigma multiplier must be 0.25")
        if not 0 < self.delta < 1:
            raise PrivacyError("delta must lie in (0, 1)")
        if not self.rdp_orders or min(self.rdp_orders) <= 1:
            raise PrivacyError("RDP orders must all exceed 1")


# ------------------------------------------------------------------- release


def clip_per_example(G, C):
    """Scale each row by min(1, C / ||g_i||)."""
    G = np.asarray(G, dtype=float)
    norms = np.linalg.norm(G, axis=1)
    factor = np.minimum(1.0, C / np.where(norms > 0, norms, 1.0))
    return G * np.where(norms > C, factor, 1.0)[:, None]


def select_sigma(clipped_norms, C, d, config: DpConfig):
    """Largest grid sigma keeping ||g|| / (sigma C sqrt(d)) >= 1, floored at the grid minimum.

    Returns the per-example sigmas and the step sigma used for accounting
    (their minimum).
    """
    grid = np.asarray(config.sigma_grid_multipliers) * config.sigma_base
    norms = np.asarray(clipped_norms, dtype=float)
    # SNR >= 1  <=>  sigma <= ||g|| / (C sqrt d)
    limit = norms / (C * math.sqrt(d))
    ok = grid[None, :] <= limit[:, None]
    idx = np.where(ok.any(axis=1), ok.shape[1] - 1 - np.argmax(ok[:, ::-1], axis=1), 0)
    sigmas = grid[idx]
    return sigmas, float(sigmas.min()) if sigmas.size else float(grid[0])


def noise_gradient(G_clip, sigmas, C, noise_seed, step=0):
    """Add N(0, sigma_i^2 C^2 I) to each row; row noise is keyed by (seed, step, row)."""
    G_clip = np.asarray(G_clip, dtype=float)
    out = G_clip.copy()
    m, d = G_clip.shape
    for i in range(m):
        if sigmas[i] == 0:
            continue
        rng = keyed_rng(DP_NOISE, noise_seed, step, i)
        out[i] += rng.standard_normal(d) * (sigmas[i] * C)
    return out


# ---------------------------------------------------------------- accounting


@lru_cache(maxsize=4096)
def _log_a_int(q, sigma, alpha):
    k = np.arange(alpha + 1, dtype=float)
    log_binom = gammaln(alpha + 1) - gammaln(k + 1) - gammaln(alpha - k + 1)
    with np.errstate(divide="ignore"):
        log_terms = (log_binom + (alpha - k) * math.log1p(-q) + k * math.log(q)
                     + k * (k - 1) / (2 * sigma**2))
    return float(logsumexp(log_terms))


def rdp_subsampled_gaussian(q, noise_multiplier, order) -> float:
    """RDP of one Poisson-subsampled Gaussian step at order ``order``."""
    if not 0 < q <= 1:
        raise PrivacyError(f"sampling rate must lie in (0, 1], got {q}")
    if not order > 1:
        raise PrivacyError(f"order must exceed 1, got {order}")
    if not noise_multiplier > 0:
        raise PrivacyError("noise multiplier must be positive")
    sigma = float(noise_multiplier)
    if q == 1:
        return order / (2 * sigma**2)
    alpha = int(math.ceil(order))
    return _log_a_int(float(q), sigma, alpha) / (alpha - 1)


@dataclass
class StepRecord:
    q: float
    noise_multiplier: float
    sigma: float

    def to_dict(self):
        return {"q": self.q, "noise_multiplier": self.noise_multiplier, "sigma": self.sigma}


@dataclass
class PrivacyReport:
    epsilon: float
    delta: float
    best_order: float | None
    steps_accounted: int

    def to_dict(self):
        return {"epsilon": self.epsilon, "delta": self.delta, "best_order": self.best_order,
                "steps_accounted": self.steps_accounted}


@dataclass
class DpLedger:
    orders: tuple[float, ...] = DEFAULT_ORDERS
    rdp: np.ndarray = None
    records: list[StepRecord] = field(default_factory=list)

    def __post_init__(self):
        self.orders = tuple(float(a) for a in self.orders)
        if self.rdp is None:
            self.rdp = np.zeros(len(self.orders))

    @property
    def steps_accounted(self) -> int:
        return len(self.records)

    def copy(self) -> "DpLedger":
        return DpLedger(self.orders, self.rdp.copy(), list(self.records))

    def merge(self, other: "DpLedger") -> "DpLedger":
        if other.orders != self.orders:
            raise PrivacyError("cannot merge ledgers over different orders")
        return DpLedger(self.orders, self.rdp + other.rdp, self.records + other.records)

    def truncated(self, steps: int) -> "DpLedger":
        """Re-account only the first ``steps`` records."""
        ledger = DpLedger(self.orders)
        for rec in self.records[:steps]:
            account_step(ledger, rec.q, rec.noise_multiplier, sigma=rec.sigma)
        return ledger

    def to_dict(self, delta: float | None = None) -> dict:
        doc = {
            "orders": list(self.orders),
            "rdp": self.rdp.tolist(),
            "steps": [r.to_dict() for r in self.records],
        }
        if delta is not None:
            doc["report"] = to_epsilon_delta(self, delta).to_dict()
        return doc

    @classmethod
    def from_dict(cls, doc) -> "DpLedger":
        ledger = cls(tuple(doc["orders"]))
        for rec in doc["steps"]:
            account_step(ledger, rec["q"], rec["noise_multiplier"], sigma=rec.get("sigma"))
        return ledger


def _step_rdp(orders, q, noise_multiplier):
    return np.array([rdp_subsampled_gaussian(q, noise_multiplier, a) for a in orders])


_step_rdp_cached = lru_cache(maxsize=1024)(lambda orders, q, nm: _step_rdp(orders, q, nm))


def account_step(ledger: DpLedger, q, noise_multiplier, sigma=None) -> DpLedger:
    """Compose one subsampled Gaussian step into ``ledger`` (in place; also returned)."""
    ledger.rdp = ledger.rdp + _step_rdp_cached(ledger.orders, float(q), float(noise_multiplier))
    ledger.records.append(StepRecord(float(q), float(noise_multiplier),
                                     float(noise_multiplier if sigma is None else sigma)))
    return ledger


def to_epsilon_delta(ledger: DpLedger, delta) -> PrivacyReport:
    """eps = min over orders of RDP(a) + log(1/delta) / (a - 1)."""
    if ledger.steps_accounted == 0:
        return PrivacyReport(0.0, float(delta), None, 0)
    orders = np.asarray(ledger.orders)
    eps = ledger.rdp + math.log(1.0 / delta) / (orders - 1)
    i = int(np.argmin(eps))
    return PrivacyReport(max(float(eps[i]), 0.0), float(delta), float(orders[i]), ledger.steps_accounted)


def epsilon_curve(ledger: DpLedger, delta, every: int = 1) -> list[tuple[int, float]]:
    """(steps, eps) after every ``every`` accounted steps, always ending at the last step."""
    replay = DpLedger(ledger.orders)
    curve = []
    n = ledger.steps_accounted
    for i, rec in enumerate(ledger.records, start=1):
        account_step(replay, rec.q, rec.noise_multiplier, sigma=rec.sigma)
        if i % every == 0 or i == n:
            curve.append((i, to_epsilon_delta(replay, delta).epsilon))
    return curve


def membership_advantage_bound(epsilon, delta) -> float:
    """Upper bound on any adversary's membership advantage under (eps, delta)-DP."""
    return (math.exp(epsilon) - 1) / (math.exp(epsilon) + 1) + delta
