"""Zero-order dataset condensation against a black-box reference model."""

from .gradients import estimate_output_jacobian, fd_steps, zero_order_gradient
from .loop import (CondenseConfig, CondenseError, CondenseHistory, composite_loss, condense,
                   default_trainer, evaluate_step, sample_real_batch, task_of)
from .losses import (LossBreakdown, LossError, adaptive_alpha, composite_from_predictions,
                     loss_aft, loss_cox, loss_match_classification, loss_match_survival,
                     loss_output_gradient, loss_pred, survival_strata)
from .optim import NumericalError, OptimizerState, optimizer_step
from .synthetic import (SyntheticDataset, class_counts, init_synthetic_classification,
                        init_synthetic_survival)

__all__ = [
    "CondenseConfig", "CondenseError", "CondenseHistory", "LossBreakdown", "LossError",
    "NumericalError", "OptimizerState", "SyntheticDataset", "adaptive_alpha", "class_counts",
    "composite_from_predictions", "composite_loss", "condense", "default_trainer", "estimate_output_jacobian",
    "evaluate_step", "fd_steps", "init_synthetic_classification", "init_synthetic_survival",
    "loss_aft", "loss_cox", "loss_match_classification", "loss_match_survival",
    "loss_output_gradient", "loss_pred", "optimizer_step", "sample_real_batch",
    "survival_strata", "task_of", "zero_order_gradient",
]
