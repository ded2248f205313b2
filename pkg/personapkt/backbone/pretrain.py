"""
Training the backbone from scratch, and the persona-agnostic fine-tuning baseline.

Both train every backbone weight with AdamW under the linear schedule. Pretraining scores
every token of a flattened dialogue; fine-tuning scores speaker-2 responses only.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping, Sequence

import numpy as np

from personapkt.compute import Tensor, ops
from personapkt.exceptions import DataError
from personapkt.models.config import BackboneConfig, PretrainConfig
from personapkt.models.corpus import Turn
from personapkt.models.types import OptimizerRule
from personapkt.training import FitOptions, fit

from .prefix import PrefixParams
from .tokenizer import DialogueSample, Tokenizer
from .transformer import BackboneModel, init_weights, lm_loss

logger = logging.getLogger(__name__)


def _shuffled_batches(count: int, batch_size: int, seed: int, epoch: int) -> list[list[int]]:
    order = np.random.default_rng([seed, epoch]).permutation(count).tolist()
    return [order[i : i + batch_size] for i in range(0, count, batch_size)]


def _train_weights(
    model: BackboneModel,
    samples: Sequence[DialogueSample],
    config: PretrainConfig,
    label: str,
) -> BackboneModel:
    def batch_loss(tensors: Mapping[str, Tensor], batch: Sequence[int]) -> Tensor:
        return ops.mean([lm_loss(model, None, samples[i], weights=tensors) for i in batch])

    def epoch_batches(epoch: int) -> list[list[int]]:
        return _shuffled_batches(len(samples), config.batch_size, config.seed, epoch)

    options = FitOptions(
        lr=config.lr,
        max_epochs=config.epochs,
        steps_per_epoch=math.ceil(len(samples) / config.batch_size),
        optimizer=OptimizerRule.ADAMW,
        weight_decay=config.weight_decay,
        warmup_steps=config.warmup_steps,
        max_grad_norm=config.max_grad_norm,
        label=label,
    )
    result = fit(model.trainable_copy(), batch_loss, epoch_batches, options)
    return BackboneModel(model.config, result.params, model.tokenizer)


def pretrain_backbone(
    dialogues: Sequence[Sequence[Turn]],
    tokenizer: Tokenizer,
    config: BackboneConfig,
    train: PretrainConfig,
) -> BackboneModel:
    """
    Train a backbone from a seeded initialization on whole dialogues.

    With ``train.epochs == 0`` the initialization is returned.

    Raises:
        DataError: If ``dialogues`` is empty.
        NumericError: If the loss diverges, with the step index.
    """
    if not dialogues:
        raise DataError("pretraining corpus is empty")
    init = BackboneModel(config, init_weights(config, train.seed, train.init_std), tokenizer)
    samples = [tokenizer.dialogue_sample(d, config.max_context) for d in dialogues]
    logger.info(
        "Pretraining %d-layer backbone (%d floats) on %d dialogues for %d epochs",
        config.n_layers,
        init.param_count,
        len(samples),
        train.epochs,
    )
    return _train_weights(init, samples, train, "pretrain")


def finetune_backbone(
    model: BackboneModel, samples: Sequence[DialogueSample], train: PretrainConfig
) -> BackboneModel:
    """Full-model fine-tuning on response samples; ``model`` itself is not changed."""
    if not samples:
        raise DataError("fine-tuning needs at least one sample")
    logger.info("Fine-tuning backbone on %d response samples", len(samples))
    return _train_weights(model, samples, train, "finetune")


def heldout_loss(
    model: BackboneModel,
    samples: Sequence[DialogueSample],
    prefix: PrefixParams | Tensor | None = None,
) -> float:
    """Mean per-sample loss of ``samples``."""
    if not samples:
        raise DataError("no held-out samples")
    return float(np.mean([lm_loss(model, prefix, s).item() for s in samples]))
