"""Desk-scale benchmark runs shared by the scripts and the acceptance suite."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .attacks import MiaConfig, run_mia
from .condenser import CondenseConfig, condense
from .datakit import (BenchmarkParams, SplitSpec, fit_feature_scaler, generate_benchmark,
                      scale_survival_times, split)
from .evalkit import auroc, concordance_index, km_sup_distance, risk_group_curves
from .models import CoxConfig, GbdtConfig, train_cox, train_gbdt
from .privacy import DpConfig, to_epsilon_delta


@dataclass
class ClassificationRun:
    n: int = 5000
    d: int = 10
    delta: float = 2.5
    ipc: int = 50
    optimizer_lr: float = 0.01
    max_iters: int = 1000
    clip_norm: float = 0.1
    sigma_base: float = 8.0
    dp_delta: float = 1e-5
    attack: bool = True
    mia: MiaConfig = field(default_factory=MiaConfig)


@dataclass
class SurvivalRun:
    n: int = 5000
    d: int = 8
    censor_frac: float = 0.3
    ipc: int = 100
    optimizer_lr: float = 0.001
    max_iters: int = 2000
    km_groups: int = 2


def prepared_splits(data, seed):
    """Split, standardize on train, and rescale survival times on train."""
    parts = split(data, SplitSpec(seed=seed))
    scaler = fit_feature_scaler(parts[0])
    parts = [p.with_features(scaler.apply(p.features)) for p in parts]
    if hasattr(parts[0], "times"):
        _, ts = scale_survival_times(parts[0].times, parts[0].events)
        parts = [p.with_times(ts.transform(p.times)) for p in parts]
    return parts


def classification_parity(seed, run: ClassificationRun | None = None) -> dict:
    """Full-data vs condensed GBDT AUROC under DP, plus a membership attack on the release."""
    run = run or ClassificationRun()
    data = generate_benchmark("two_gaussians", run.n, run.d, seed, BenchmarkParams(delta=run.delta))
    train, val, test = prepared_splits(data, seed)
    gcfg = GbdtConfig(seed=seed)
    t0 = time.perf_counter()
    ref = train_gbdt(train, val, gcfg)
    dp = DpConfig(clip_norm=run.clip_norm, sigma_base=run.sigma_base, delta=run.dp_delta,
                  noise_seed=seed)
    ccfg = CondenseConfig(ipc=run.ipc, optimizer_lr=run.optimizer_lr, max_iters=run.max_iters,
                          seed=seed)
    syn, ledger, history = condense(train, val, ref, ccfg, dp)
    down = train_gbdt(syn.as_dataset(), val, gcfg)
    out = {
        "seed": seed,
        "full_auroc": auroc(ref.predict(test.features), test.labels),
        "condensed_auroc": auroc(down.predict(test.features), test.labels),
        "epsilon": to_epsilon_delta(ledger, run.dp_delta).epsilon,
        "best_iteration": history.best_iteration,
        "stopped": history.stopped,
    }
    out["auroc_gap"] = out["full_auroc"] - out["condensed_auroc"]
    out["seconds"] = time.perf_counter() - t0
    if run.attack:
        rng = np.random.default_rng([seed, 7])
        members = train.features[rng.choice(train.n, test.n, replace=False)]
        mia = run_mia(members, test.features, syn.X, run.mia, out["epsilon"], run.dp_delta)
        out.update(mia_auroc=mia.auroc[0], mia_advantage=mia.membership_advantage[0],
                   mia_tpr_at_fpr10=mia.tpr_at_fpr10[0], advantage_bound=mia.theoretical_bound)
    return out


def survival_parity(seed, run: SurvivalRun | None = None) -> dict:
    """Full-data vs condensed Cox C-index and KM curves of risk groups."""
    run = run or SurvivalRun()
    data = generate_benchmark("weibull_survival", run.n, run.d, seed,
                              BenchmarkParams(censor_frac=run.censor_frac))
    train, val, test = prepared_splits(data, seed)
    t0 = time.perf_counter()
    ref = train_cox(train, CoxConfig())
    ccfg = CondenseConfig(ipc=run.ipc, optimizer_lr=run.optimizer_lr, max_iters=run.max_iters,
                          seed=seed)
    syn, _, history = condense(train, val, ref, ccfg)
    down = train_cox(syn.as_dataset(), CoxConfig())
    full_risk, down_risk = ref.predict(test.features), down.predict(test.features)
    # both models' strata are cut at their own medians on the test set
    full_km = risk_group_curves(full_risk, test.times, test.events, run.km_groups)
    down_km = risk_group_curves(down_risk, test.times, test.events, run.km_groups)
    out = {
        "seed": seed,
        "full_cindex": concordance_index(full_risk, test.times, test.events),
        "condensed_cindex": concordance_index(down_risk, test.times, test.events),
        "km_sup_distance": max(km_sup_distance(a, b) for a, b in zip(full_km, down_km)),
        "best_iteration": history.best_iteration,
        "stopped": history.stopped,
        "seconds": time.perf_counter() - t0,
    }
    out["cindex_gap"] = out["full_cindex"] - out["condensed_cindex"]
    return out
