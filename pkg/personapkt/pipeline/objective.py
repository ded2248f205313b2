"""Response-generation samples and the prefix training objective."""

from __future__ import annotations

from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from personapkt.backbone import BackboneModel, DialogueSample, PrefixParams, lm_loss
from personapkt.backbone.prefix import reparam_activations
from personapkt.compute import FloatArray, Tensor, ops
from personapkt.data import responses
from personapkt.models.corpus import Persona, Turn
from personapkt.models.report import EpochLog


@dataclass
class TrainedPrefix:
    """A trained prefix with its training log."""

    prefix: PrefixParams
    history: list[EpochLog] = field(default_factory=list)
    persona_draws: dict[str, int] = field(default_factory=dict)
    """Dialogues drawn per persona (mixing strategies only)."""


def response_samples(
    backbone: BackboneModel, dialogue: Sequence[Turn], prefix_len: int
) -> list[DialogueSample]:
    """One sample per speaker-2 turn, its history as context."""
    budget = backbone.context_budget(prefix_len)
    return [
        backbone.tokenizer.response_sample(history, response, budget)
        for history, response in responses(dialogue)
    ]


def persona_samples(
    backbone: BackboneModel, persona: Persona, indices: Iterable[int], prefix_len: int
) -> dict[int, list[DialogueSample]]:
    """Samples of the selected dialogues, dropping dialogues without a speaker-2 response."""
    out: dict[int, list[DialogueSample]] = {}
    for index in indices:
        samples = response_samples(backbone, persona.dialogues[index], prefix_len)
        if samples:
            out[index] = samples
    return out


def prefix_loss(
    backbone: BackboneModel, reparam: Mapping[str, Tensor], samples: Sequence[DialogueSample]
) -> Tensor:
    """Mean loss of ``samples`` under the prefix produced by ``reparam``."""
    activations = reparam_activations(reparam, backbone.config.n_layers, backbone.config.d_model)
    return ops.mean([lm_loss(backbone, activations, s) for s in samples])


def prefix_batch_loss(
    backbone: BackboneModel,
) -> Callable[[Mapping[str, Tensor], Sequence[Sequence[DialogueSample]]], Tensor]:
    """Batch loss over groups of samples (one group per dialogue), for ``fit``."""

    def batch_loss(
        reparam: Mapping[str, Tensor], batch: Sequence[Sequence[DialogueSample]]
    ) -> Tensor:
        return prefix_loss(backbone, reparam, [s for group in batch for s in group])

    return batch_loss


def evaluation_loss(
    backbone: BackboneModel, reparam: Mapping[str, FloatArray], samples: Sequence[DialogueSample]
) -> float:
    """Mean loss without recording gradients."""
    tensors = {name: Tensor(value) for name, value in reparam.items()}
    activations = reparam_activations(tensors, backbone.config.n_layers, backbone.config.d_model)
    return float(np.mean([lm_loss(backbone, activations, s).item() for s in samples]))
