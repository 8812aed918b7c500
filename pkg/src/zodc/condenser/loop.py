"""The condensation loop: sample, score, differentiate, (privatise), step, validate."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import privacy
from ..datakit import SurvivalDataset
from ..evalkit import MetricError, auroc, concordance_index
from ..models import (ConvergenceError, CoxModel, GbdtModel, LogisticModel, ModelError,
                      train_cox, train_gbdt, train_logistic)
from ..rng import REAL_BATCH, keyed_rng
from .gradients import estimate_output_jacobian, zero_order_gradient
from .losses import LossBreakdown, composite_from_predictions, loss_output_gradient
from .optim import NumericalError, OptimizerState, optimizer_step
from .synthetic import SyntheticDataset, init_synthetic_classification, init_synthetic_survival

log = logging.getLogger(__name__)

TASK_OF_MODEL = {"binary_classification": "classification", "cox_risk": "cox", "aft_log_time": "aft"}


class CondenseError(RuntimeError):
    pass


@dataclass
class CondenseConfig:
    ipc: int = 50
    class_ratio: tuple[float, float] = (1.0, 1.0)
    rho: float = 0.1
    alpha_eps: float = 1e-12
    fd_step_range: tuple[float, float] = (0.025, 2.0)
    optimizer_lr: float = 0.001
    max_iters: int = 2000
    eval_every: int = 50
    patience: int = 5
    k_strata: int = 4
    n_bins: int = 10
    max_resample: int = 10
    seed: int = 0

    def __post_init__(self):
        self.fd_step_range = tuple(float(v) for v in self.fd_step_range)
        self.class_ratio = tuple(float(v) for v in self.class_ratio)
        lo, hi = self.fd_step_range
        if not 0 < self.rho < 1:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if not 0 < lo < hi:
            raise ValueError(f"fd_step_range must satisfy 0 < lo < hi, got {self.fd_step_range}")
        if self.ipc < 1:
            raise ValueError("ipc must be >= 1")
        if self.k_strata < 2:
            raise ValueError("k_strata must be >= 2")
        if self.eval_every < 1 or self.patience < 1 or self.max_iters < 0:
            raise ValueError("eval_every and patience must be >= 1, max_iters >= 0")


def task_of(model) -> str:
    return TASK_OF_MODEL[model.task]


def default_trainer(model):
    """A fresh model of the reference's class, trained on a synthetic dataset."""
    if isinstance(model, GbdtModel):
        cfg = model.config
        return lambda data: train_gbdt(data, None, cfg)
    if isinstance(model, CoxModel):
        return lambda data: train_cox(data, model.config)
    if isinstance(model, LogisticModel):
        return lambda data: train_logistic(data, model.l2_strength)
    raise CondenseError(f"no default downstream trainer for {type(model).__name__}")


def validation_metric(task, predictor, val) -> float:
    pred = predictor.predict(val.features)
    if task == "classification":
        return auroc(pred, val.labels)
    risk = -pred if task == "aft" else pred
    return concordance_index(risk, val.times, val.events)


def sample_real_batch(real, syn: SyntheticDataset, rng, max_resample=10):
    """Draw real rows mirroring the synthetic class (or event/censor) composition."""
    strata_syn = syn.events if syn.is_survival else syn.labels
    strata_real = real.events if isinstance(real, SurvivalDataset) else real.labels
    for _ in range(max_resample):
        parts = []
        for value in (0.0, 1.0):
            want = int(np.sum(strata_syn == value))
            pool = np.flatnonzero(strata_real == value)
            if want == 0:
                continue
            if pool.size == 0:
                if syn.is_survival and value == 0.0:
                    # no censored real rows: mirror with events instead
                    pool = np.flatnonzero(strata_real == 1.0)
                else:
                    raise CondenseError(f"real data has no rows with outcome class {value:g}")
            parts.append(rng.choice(pool, size=want, replace=want > pool.size))
        idx = np.concatenate(parts)
        batch = real.take(idx)
        kinds = np.unique(batch.events if syn.is_survival else batch.labels)
        if syn.is_survival or kinds.size == 2:
            return batch
    raise CondenseError(f"degenerate real batch after {max_resample} draws")


def _outcome(data):
    return (data.times, data.events) if isinstance(data, SurvivalDataset) else (data.labels,)


@dataclass
class CondenseHistory:
    steps: list = field(default_factory=list)
    evals: list = field(default_factory=list)
    best_iteration: int = 0
    best_metric: float = float("-inf")
    stopped: str = "max_iters"

    def to_dict(self):
        return asdict(self)


def evaluate_step(model, task, X_syn, syn: SyntheticDataset, batch, config: CondenseConfig):
    """Loss breakdown and d loss / d predictions at the current synthetic inputs."""
    pred_syn = model.predict(X_syn)
    pred_real = model.predict(batch.features)
    breakdown = composite_from_predictions(task, pred_syn, syn.outcome, pred_real, _outcome(batch),
                                           config.rho, config.alpha_eps, config.k_strata)
    dl_df = loss_output_gradient(task, pred_syn, syn.outcome, pred_real, _outcome(batch),
                                 breakdown.alpha, config.k_strata)
    return breakdown, dl_df


def composite_loss(model, X_syn, syn: SyntheticDataset, real_batch, config: CondenseConfig) -> LossBreakdown:
    task = task_of(model)
    return composite_from_predictions(task, model.predict(X_syn), syn.outcome,
                                      model.predict(real_batch.features), _outcome(real_batch),
                                      config.rho, config.alpha_eps, config.k_strata)


def initial_synthetic(real_train, config: CondenseConfig) -> SyntheticDataset:
    if isinstance(real_train, SurvivalDataset):
        # ipc counts rows per event status
        return init_synthetic_survival(2 * config.ipc, real_train.d, real_train.times,
                                       real_train.events, config.n_bins, config.seed,
                                       real_train.feature_names)
    return init_synthetic_classification(config.ipc, real_train.d, config.class_ratio, config.seed,
                                         real_train.feature_names)


def condense(real_train, real_val, model, config: CondenseConfig | None = None,
             dp: privacy.DpConfig | None = None, trainer=None, init: SyntheticDataset | None = None):
    """Optimise a synthetic dataset against a fixed black-box ``model``.

    Returns (best synthetic snapshot, ledger accounted up to that snapshot or
    None without ``dp``, history).
    """
    config = config or CondenseConfig()
    task = task_of(model)
    if (task == "classification") == isinstance(real_train, SurvivalDataset):
        raise CondenseError(f"model task {model.task!r} does not match the dataset kind")
    if model.n_features != real_train.d:
        raise CondenseError("model and data disagree on the feature count")
    trainer = trainer or default_trainer(model)

    syn = init if init is not None else initial_synthetic(real_train, config)
    X = syn.X.copy()
    state = OptimizerState.zeros_like(X, lr=config.optimizer_lr)
    ledger = privacy.DpLedger(dp.rdp_orders) if dp is not None else None
    q = syn.m / real_train.n
    history = CondenseHistory()

    def validate(iteration, X_now):
        try:
            downstream = trainer(syn.with_X(X_now).as_dataset())
            metric = validation_metric(task, downstream, real_val)
        except (ConvergenceError, ModelError, MetricError) as exc:
            log.info("validation at iteration %d failed: %s", iteration, exc)
            metric = float("-inf")
        history.evals.append({"iteration": iteration, "metric": metric})
        return metric

    best_X = X.copy()
    history.best_metric = validate(0, X)
    stale = 0
    for it in range(config.max_iters):
        rng = keyed_rng(REAL_BATCH, config.seed, it)
        batch = sample_real_batch(real_train, syn, rng, config.max_resample)
        try:
            breakdown, dl_df = evaluate_step(model, task, X, syn, batch, config)
            if not np.isfinite(breakdown.total):
                raise NumericalError(f"non-finite loss at iteration {it}")
            J = estimate_output_jacobian(model, X, config.fd_step_range, config.seed, it)
            G = zero_order_gradient(J, dl_df)
            record = breakdown.to_dict()
            record["iteration"] = it
            if dp is not None:
                G_clip = privacy.clip_per_example(G, dp.clip_norm)
                sigmas, sigma_step = privacy.select_sigma(
                    np.linalg.norm(G_clip, axis=1), dp.clip_norm, G.shape[1], dp)
                G = privacy.noise_gradient(G_clip, sigmas, dp.clip_norm, dp.noise_seed, it)
                # sigma values are already multiples of C, so they are the noise multipliers
                privacy.account_step(ledger, q, sigma_step, sigma=sigma_step)
                record.update(q=q, sigma_step=sigma_step)
            X, state = optimizer_step(state, X, G)
        except NumericalError as exc:
            log.warning("aborting: %s", exc)
            history.stopped = f"numerical: {exc}"
            break
        history.steps.append(record)

        if (it + 1) % config.eval_every == 0:
            metric = validate(it + 1, X)
            if metric > history.best_metric:
                history.best_metric, history.best_iteration, best_X, stale = metric, it + 1, X.copy(), 0
            else:
                stale += 1
                if stale >= config.patience:
                    history.stopped = "early_stopping"
                    break

    best = syn.with_X(best_X)
    final_ledger = ledger.truncated(history.best_iteration) if ledger is not None else None
    return best, final_ledger, history
