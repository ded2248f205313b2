"""
Epoch loop shared by backbone pretraining, fine-tuning and prefix training.

Parameters are plain arrays keyed by name; a batch loss function turns trainable tensors
and one batch into a scalar loss. The loop applies the linear schedule, optional gradient
clipping and the configured update rule, evaluates a validation loss after every epoch and
keeps the best-validation checkpoint.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from personapkt.compute import FloatArray, Graph, Tensor, backward
from personapkt.exceptions import DataError, NumericError
from personapkt.models.config import PersonaTrainConfig
from personapkt.models.report import EpochLog
from personapkt.models.types import OptimizerRule
from personapkt.optim import (
    LinearSchedule,
    OptimizerState,
    Params,
    clip_grad_norm,
    optimizer_step,
    schedule_rate,
)

logger = logging.getLogger(__name__)

BatchLoss = Callable[[Mapping[str, Tensor], Sequence[Any]], Tensor]
"""Scalar loss of one batch given trainable tensors."""


@dataclass(frozen=True)
class FitOptions:
    """Settings of one ``fit`` run."""

    lr: float
    max_epochs: int
    steps_per_epoch: int
    optimizer: OptimizerRule = OptimizerRule.ADAMW
    weight_decay: float = 0.0
    warmup_steps: int = 0
    max_grad_norm: float | None = None
    patience: int | None = None
    """Non-improving epochs tolerated before stopping; None disables early stopping."""
    label: str = "fit"
    """Prefix of the per-epoch log lines."""

    @classmethod
    def from_config(
        cls, config: PersonaTrainConfig, steps_per_epoch: int, label: str = "fit"
    ) -> FitOptions:
        """Options of a prefix-training config."""
        return cls(
            lr=config.lr,
            max_epochs=config.max_epochs,
            steps_per_epoch=steps_per_epoch,
            optimizer=config.optimizer,
            weight_decay=config.weight_decay,
            warmup_steps=config.warmup_steps,
            max_grad_norm=config.max_grad_norm,
            patience=config.patience,
            label=label,
        )


@dataclass
class FitResult:
    """Outcome of ``fit``."""

    params: Params
    """Best-validation parameters (final parameters without a validation loss)."""
    history: list[EpochLog] = field(default_factory=list)
    best_epoch: int = 0
    """Epoch of ``params``; 0 means the initialization."""
    steps: int = 0


def loss_and_grad(
    batch_loss: BatchLoss, params: Mapping[str, FloatArray], batch: Sequence[Any]
) -> tuple[float, Params]:
    """Evaluate ``batch_loss`` and its gradient with respect to every parameter."""
    with Graph() as graph:
        tensors = {
            name: Tensor(value, requires_grad=True, name=name) for name, value in params.items()
        }
        loss = batch_loss(tensors, batch)
    return loss.item(), backward(graph, loss, tensors)


def fit(
    params: Mapping[str, FloatArray],
    batch_loss: BatchLoss,
    epoch_batches: Callable[[int], Iterable[Sequence[Any]]],
    options: FitOptions,
    valid_loss: Callable[[Mapping[str, FloatArray]], float] | None = None,
    on_epoch: Callable[[int, Params], None] | None = None,
) -> FitResult:
    """
    Train ``params`` for up to ``options.max_epochs`` epochs.

    Args:
        params: Initial values; not modified.
        batch_loss: Loss of one batch.
        epoch_batches: Batches of a 1-based epoch number.
        options: Rates, update rule and stopping settings.
        valid_loss: Validation loss of a parameter set; enables checkpoint selection.
        on_epoch: Called with the epoch number and the current parameters after each epoch.

    Raises:
        NumericError: On a non-finite loss or gradient, carrying the global step index.
    """
    current: Params = {name: np.array(value, dtype=np.float64) for name, value in params.items()}
    result = FitResult(params={name: value.copy() for name, value in current.items()})
    if options.max_epochs == 0:
        return result
    total = options.max_epochs * options.steps_per_epoch
    schedule = LinearSchedule(options.lr, total, min(options.warmup_steps, total))
    state = OptimizerState(rule=options.optimizer, lr=options.lr, weight_decay=options.weight_decay)
    best_valid = valid_loss(current) if valid_loss is not None else None
    if best_valid is not None:
        logger.info("%s: initial valid loss %.4f", options.label, best_valid)
    bad_epochs = 0
    step = 0
    for epoch in range(1, options.max_epochs + 1):
        losses: list[float] = []
        rate = 0.0
        for batch in epoch_batches(epoch):
            rate = schedule_rate(schedule, step)
            try:
                value, grads = loss_and_grad(batch_loss, current, batch)
                grads = clip_grad_norm(grads, options.max_grad_norm)
                current, state = optimizer_step(state, current, grads, rate)
            except NumericError as err:
                if err.step is not None:
                    raise
                raise NumericError(f"{options.label}: {err}", step=step) from err
            losses.append(value)
            step += 1
            logger.debug("%s: step %d loss %.4f lr %.3g", options.label, step, value, rate)
        if not losses:
            raise DataError(f"{options.label}: epoch {epoch} produced no training batches")
        train_loss = float(np.mean(losses))
        valid = valid_loss(current) if valid_loss is not None else None
        result.history.append(
            EpochLog(epoch=epoch, train_loss=train_loss, valid_loss=valid, lr=rate)
        )
        logger.info(
            "%s: epoch %d train loss %.4f valid loss %s",
            options.label,
            epoch,
            train_loss,
            "n/a" if valid is None else f"{valid:.4f}",
        )
        if on_epoch is not None:
            on_epoch(epoch, current)
        if valid is None or best_valid is None:
            result.params = current
            result.best_epoch = epoch
            continue
        if valid < best_valid:
            best_valid = valid
            result.params = {name: value.copy() for name, value in current.items()}
            result.best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if options.patience is not None and bad_epochs > options.patience:
                logger.info("%s: early stop after epoch %d", options.label, epoch)
                break
    result.steps = step
    return result
