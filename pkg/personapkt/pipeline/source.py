"""
Source-prefix training over Part A.

Three strategies share the prefix objective: ``base`` shuffles all Part A training
dialogues persona-agnostically, ``temperature`` draws personas with temperature-scaled
probabilities, and ``ppreptile`` runs first-order meta-learning restricted to the prefix
parameters (a few inner optimizer steps per sampled persona, then an outer move toward the
mean of the inner results).
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from collections.abc import Iterator, Mapping, Sequence

import numpy as np

from personapkt.backbone import BackboneModel, DialogueSample, PrefixParams
from personapkt.compute import FloatArray
from personapkt.data import DialogueRef, PersonaDataset, sample_batches, temperature_mix
from personapkt.exceptions import DataError, NumericError, ShapeError
from personapkt.models.config import (
    MetaTrainConfig,
    PrefixConfig,
    SourceStrategy,
    SourceTrainConfig,
)
from personapkt.models.report import EpochLog
from personapkt.models.types import OptimizerRule, Part, StrategyKind
from personapkt.optim import OptimizerState, Params, optimizer_step
from personapkt.training import FitOptions, fit, loss_and_grad

from .objective import (
    TrainedPrefix,
    evaluation_loss,
    persona_samples,
    prefix_batch_loss,
)

logger = logging.getLogger(__name__)

PartSamples = dict[str, dict[int, list[DialogueSample]]]
"""persona_id -> dialogue index -> samples."""


def _part_samples(
    backbone: BackboneModel, dataset: PersonaDataset, which: str, prefix_len: int
) -> PartSamples:
    out: PartSamples = {}
    for persona in dataset.members(Part.A):
        indices = getattr(dataset.split(persona.persona_id), which)
        out[persona.persona_id] = persona_samples(backbone, persona, indices, prefix_len)
    return out


def _flatten(samples: PartSamples) -> list[DialogueSample]:
    return [s for pid in samples for group in samples[pid].values() for s in group]


def _initial_prefix(
    backbone: BackboneModel, prefix_config: PrefixConfig, seed: int, init: PrefixParams | None
) -> PrefixParams:
    if init is not None:
        return init
    return PrefixParams.random(backbone.config, prefix_config, seed, backbone.digest)


def _fit_source(
    backbone: BackboneModel,
    dataset: PersonaDataset,
    config: SourceTrainConfig,
    prefix: PrefixParams,
    batches: Iterator[list[DialogueRef]] | None,
    label: str,
) -> tuple[PrefixParams, list[EpochLog], Counter[str]]:
    train = _part_samples(backbone, dataset, "train", prefix.prefix_len)
    refs = [(pid, index) for pid in train for index in train[pid]]
    if not refs:
        raise DataError("Part A has no training responses")
    valid = _flatten(_part_samples(backbone, dataset, "valid", prefix.prefix_len))
    steps = math.ceil(len(refs) / config.batch_size)
    draws: Counter[str] = Counter()

    def epoch_batches(epoch: int) -> list[list[list[DialogueSample]]]:
        if batches is None:
            order = np.random.default_rng([config.seed, epoch]).permutation(len(refs)).tolist()
            size = config.batch_size
            chosen = [[refs[i] for i in order[k : k + size]] for k in range(0, len(refs), size)]
        else:
            chosen = [next(batches) for _ in range(steps)]
        for batch in chosen:
            draws.update(pid for pid, _ in batch)
        return [[train[pid][index] for pid, index in batch] for batch in chosen]

    if not valid:
        logger.warning("%s: Part A has no validation responses, training a fixed budget", label)
    result = fit(
        prefix.trainable(),
        prefix_batch_loss(backbone),
        epoch_batches,
        FitOptions.from_config(config, steps, label),
        (lambda params: evaluation_loss(backbone, params, valid)) if valid else None,
    )
    return prefix.with_reparam(result.params), result.history, draws


def train_source_base(
    backbone: BackboneModel,
    dataset: PersonaDataset,
    config: SourceTrainConfig,
    prefix_config: PrefixConfig,
    init: PrefixParams | None = None,
) -> TrainedPrefix:
    """Train the source prefix on a persona-agnostic shuffle of all Part A training dialogues."""
    prefix = _initial_prefix(backbone, prefix_config, config.seed, init)
    trained, history, draws = _fit_source(backbone, dataset, config, prefix, None, "source/base")
    return TrainedPrefix(trained, history, dict(sorted(draws.items())))


def train_source_temperature(
    backbone: BackboneModel,
    dataset: PersonaDataset,
    config: SourceTrainConfig,
    prefix_config: PrefixConfig,
    temperature: float = 10.0,
    init: PrefixParams | None = None,
) -> TrainedPrefix:
    """
    Train the source prefix on temperature-mixed batches.

    Personas are drawn with ``temperature_mix`` over their training-dialogue counts, then
    one of the drawn persona's dialogues uniformly. An epoch has as many batches as the
    base strategy.
    """
    prefix = _initial_prefix(backbone, prefix_config, config.seed, init)
    pools: dict[str, list[int]] = {}
    for persona in dataset.members(Part.A):
        indices = persona_samples(
            backbone, persona, dataset.split(persona.persona_id).train, prefix.prefix_len
        )
        if indices:
            pools[persona.persona_id] = sorted(indices)
    if not pools:
        raise DataError("Part A has no training responses")
    probabilities = temperature_mix([len(v) for v in pools.values()], temperature)
    logger.info(
        "Temperature %.3g mixing over %d personas: max p %.4f, min p %.4f",
        temperature,
        len(pools),
        float(probabilities.max()),
        float(probabilities.min()),
    )
    stream = sample_batches(pools, probabilities, config.batch_size, config.seed)
    trained, history, draws = _fit_source(
        backbone, dataset, config, prefix, stream, "source/temperature"
    )
    return TrainedPrefix(trained, history, dict(sorted(draws.items())))


def _inner_loop(
    backbone: BackboneModel,
    theta: Mapping[str, FloatArray],
    pool: Sequence[Sequence[DialogueSample]],
    alpha: float,
    k_inner: int,
    b_in: int,
    rng: np.random.Generator,
    rule: OptimizerRule,
) -> tuple[Params, float | None]:
    if not pool:
        raise DataError("inner loop needs at least one training dialogue")
    weights: Params = {name: np.array(value, dtype=np.float64) for name, value in theta.items()}
    state = OptimizerState(rule=rule, lr=alpha, weight_decay=0.0)
    batch_loss = prefix_batch_loss(backbone)
    first: float | None = None
    for _ in range(k_inner):
        picks = sorted(rng.choice(len(pool), size=min(b_in, len(pool)), replace=False).tolist())
        value, grads = loss_and_grad(batch_loss, weights, [pool[i] for i in picks])
        weights, state = optimizer_step(state, weights, grads, alpha)
        if first is None:
            first = value
    return weights, first


def ppreptile_inner(
    backbone: BackboneModel,
    theta: Mapping[str, FloatArray],
    pool: Sequence[Sequence[DialogueSample]],
    alpha: float,
    k_inner: int,
    b_in: int,
    rng: np.random.Generator,
    rule: OptimizerRule = OptimizerRule.SGD,
) -> Params:
    """
    Adapt a copy of the prefix parameters ``theta`` to one persona.

    Runs ``k_inner`` optimizer steps at rate ``alpha``; each step uses ``b_in`` of the
    persona's training dialogues (``pool`` holds one sample group per dialogue) drawn
    without replacement. Only prefix parameters move; ``theta`` is not modified. AdamW
    starts from a fresh state.
    """
    weights, _ = _inner_loop(backbone, theta, pool, alpha, k_inner, b_in, rng, rule)
    return weights


def ppreptile_outer(
    theta: Mapping[str, FloatArray], adapted: Sequence[Mapping[str, FloatArray]], beta: float
) -> Params:
    """Return ``theta + beta * mean_i(W_i - theta)``."""
    if not adapted:
        raise ValueError("outer update needs at least one adapted parameter set")
    out: Params = {}
    for name, value in theta.items():
        displacement = np.zeros_like(value)
        for index, weights in enumerate(adapted):
            w = weights.get(name)
            if w is None or w.shape != value.shape:
                shape = None if w is None else w.shape
                raise ShapeError(
                    f"adapted set {index}: parameter {name} has shape {shape}, "
                    f"expected {value.shape}"
                )
            displacement += w - value
        out[name] = value + beta * (displacement / len(adapted))
    return out


def train_source_ppreptile(
    backbone: BackboneModel,
    dataset: PersonaDataset,
    meta: MetaTrainConfig,
    prefix_config: PrefixConfig,
    init: PrefixParams | None = None,
) -> TrainedPrefix:
    """
    Meta-train the source prefix.

    Every iteration samples ``meta.n`` Part A personas uniformly without replacement,
    adapts the prefix to each with ``ppreptile_inner`` and applies ``ppreptile_outer``.
    Sampled personas without training responses are skipped with a warning.
    """
    prefix = _initial_prefix(backbone, prefix_config, meta.seed, init)
    personas = dataset.members(Part.A)
    if len(personas) < meta.n:
        raise DataError(
            f"PPReptile samples {meta.n} personas per iteration, Part A has {len(personas)}"
        )
    train = _part_samples(backbone, dataset, "train", prefix.prefix_len)
    valid = _flatten(_part_samples(backbone, dataset, "valid", prefix.prefix_len))
    rng = np.random.default_rng(meta.seed)
    theta = prefix.trainable()
    history: list[EpochLog] = []
    draws: Counter[str] = Counter()
    for iteration in range(1, meta.iterations + 1):
        chosen = rng.choice(len(personas), size=meta.n, replace=False).tolist()
        adapted: list[Params] = []
        losses: list[float] = []
        for index in chosen:
            persona_id = personas[index].persona_id
            pool = list(train[persona_id].values())
            if not pool:
                logger.warning("Skipping persona %s: no training responses", persona_id)
                continue
            draws[persona_id] += 1
            try:
                weights, first = _inner_loop(
                    backbone,
                    theta,
                    pool,
                    meta.alpha,
                    meta.k_inner,
                    meta.b_in,
                    rng,
                    meta.inner_optimizer,
                )
            except NumericError as err:
                message = f"PPReptile inner loop for {persona_id}: {err}"
                raise NumericError(message, step=iteration) from err
            adapted.append(weights)
            if first is not None:
                losses.append(first)
        if not adapted:
            continue
        theta = ppreptile_outer(theta, adapted, meta.beta)
        valid_loss = None
        if meta.eval_every and valid and iteration % meta.eval_every == 0:
            valid_loss = evaluation_loss(backbone, theta, valid)
        train_loss = float(np.mean(losses)) if losses else None
        history.append(
            EpochLog(epoch=iteration, train_loss=train_loss, valid_loss=valid_loss, lr=meta.beta)
        )
        logger.log(
            logging.INFO if valid_loss is not None else logging.DEBUG,
            "source/ppreptile: iteration %d inner loss %s valid loss %s",
            iteration,
            "n/a" if train_loss is None else f"{train_loss:.4f}",
            "n/a" if valid_loss is None else f"{valid_loss:.4f}",
        )
    logger.info("source/ppreptile: %d iterations done", meta.iterations)
    return TrainedPrefix(prefix.with_reparam(theta), history, dict(sorted(draws.items())))


def train_source(
    backbone: BackboneModel,
    dataset: PersonaDataset,
    strategy: SourceStrategy,
    config: SourceTrainConfig,
    prefix_config: PrefixConfig,
) -> TrainedPrefix:
    """Dispatch on ``strategy.kind``."""
    if strategy.kind is StrategyKind.TEMPERATURE and strategy.temperature is not None:
        return train_source_temperature(
            backbone, dataset, config, prefix_config, strategy.temperature
        )
    if strategy.kind is StrategyKind.PPREPTILE and strategy.meta is not None:
        return train_source_ppreptile(backbone, dataset, strategy.meta, prefix_config)
    return train_source_base(backbone, dataset, config, prefix_config)
