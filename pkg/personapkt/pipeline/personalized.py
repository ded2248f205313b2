"""Personalized-prefix training: one persona at a time, or a whole part concurrently."""

from __future__ import annotations

import asyncio
import hashlib
import logging
import math
from collections.abc import Callable, Sequence

import numpy as np

from personapkt.backbone import BackboneModel, DialogueSample, PrefixParams
from personapkt.data import PersonaDataset
from personapkt.exceptions import DataError
from personapkt.models.config import PersonaTrainConfig, PrefixConfig
from personapkt.models.corpus import DialogueSplit, Persona
from personapkt.optim import Params
from personapkt.training import FitOptions, fit

from .objective import TrainedPrefix, evaluation_loss, persona_samples, prefix_batch_loss
from .store import SOURCE_KEY, PrefixStore, training_metadata

logger = logging.getLogger(__name__)

EpochCallback = Callable[[int, PrefixParams], None]


def persona_seed(seed: int, persona_id: str) -> list[int]:
    """Entropy for a persona's random initialization, stable across runs and processes."""
    digest = hashlib.sha256(persona_id.encode("utf-8")).digest()
    return [seed, int.from_bytes(digest[:8], "little")]


def train_personalized(
    backbone: BackboneModel,
    init: PrefixParams | None,
    persona: Persona,
    split: DialogueSplit,
    config: PersonaTrainConfig,
    prefix_config: PrefixConfig,
    on_epoch: EpochCallback | None = None,
) -> TrainedPrefix:
    """
    Train a prefix on the dialogues of ``persona`` only.

    Args:
        backbone: Frozen backbone.
        init: Source prefix to start from (it must carry its reparametrization state), or
            None for a random initialization seeded with ``config.seed`` and the persona id.
        persona: The target persona; no other persona's data is reachable from here.
        split: Its train/valid/test dialogue indices.
        config: Rates, epochs and early-stopping patience.
        prefix_config: Shape of a random initialization.
        on_epoch: Receives the current prefix after every epoch.

    Returns:
        The best-validation checkpoint. Without validation responses the prefix after
        ``config.max_epochs`` epochs is returned and a warning is logged.
    """
    if init is None:
        seed = persona_seed(config.seed, persona.persona_id)
        init = PrefixParams.random(backbone.config, prefix_config, seed, backbone.digest)
    elif init.reparam is None:
        raise DataError(
            "initial prefix has no reparametrization state; store it with training state"
        )
    train = persona_samples(backbone, persona, split.train, init.prefix_len)
    if not train:
        raise DataError(f"persona {persona.persona_id!r} has no training responses")
    held_out = persona_samples(backbone, persona, split.valid, init.prefix_len)
    valid = [s for group in held_out.values() for s in group]
    groups = [train[index] for index in sorted(train)]
    steps = math.ceil(len(groups) / config.batch_size)

    def epoch_batches(epoch: int) -> list[list[list[DialogueSample]]]:
        order = np.random.default_rng([config.seed, epoch]).permutation(len(groups)).tolist()
        size = config.batch_size
        return [[groups[i] for i in order[k : k + size]] for k in range(0, len(groups), size)]

    if not valid:
        logger.warning(
            "Persona %s has no validation responses; training %d epochs without early stopping",
            persona.persona_id,
            config.max_epochs,
        )
    start: PrefixParams = init

    def report(epoch: int, params: Params) -> None:
        if on_epoch is not None:
            on_epoch(epoch, start.with_reparam(params))

    result = fit(
        init.trainable(),
        prefix_batch_loss(backbone),
        epoch_batches,
        FitOptions.from_config(config, steps, f"persona/{persona.persona_id}"),
        (lambda params: evaluation_loss(backbone, params, valid)) if valid else None,
        report if on_epoch is not None else None,
    )
    prefix = PrefixParams.from_reparam(result.params, init.n_layers, backbone.digest)
    return TrainedPrefix(prefix, result.history)


async def train_personas(  # noqa: PLR0913
    backbone: BackboneModel,
    init: PrefixParams | None,
    dataset: PersonaDataset,
    personas: Sequence[Persona],
    config: PersonaTrainConfig,
    prefix_config: PrefixConfig,
    store: PrefixStore,
    strategy: str,
    jobs: int = 1,
) -> dict[str, PrefixParams]:
    """
    Train and store a personalized prefix for every persona, ``jobs`` at a time.

    Each job sees only its own persona and writes only its own store key; the shared
    backbone and ``init`` are read-only.

    Raises:
        DataError: If a persona id collides with the source prefix key.
    """
    if any(p.persona_id == SOURCE_KEY for p in personas):
        raise DataError(
            f"persona id {SOURCE_KEY!r} is reserved for the source prefix; rename the persona"
        )
    semaphore = asyncio.Semaphore(max(1, jobs))
    settings = config.to_dict()

    async def one(persona: Persona) -> tuple[str, PrefixParams]:
        async with semaphore:
            split = dataset.split(persona.persona_id)
            trained = await asyncio.to_thread(
                train_personalized, backbone, init, persona, split, config, prefix_config
            )
            metadata = training_metadata(
                strategy, backbone.param_count, trained, settings, config.seed
            )
            await asyncio.to_thread(
                store.store, persona.persona_id, trained.prefix, metadata, trained.history
            )
            return persona.persona_id, trained.prefix

    results = await asyncio.gather(*(one(p) for p in personas))
    logger.info("Trained %d personalized prefixes (%s)", len(results), strategy)
    return dict(sorted(results))
