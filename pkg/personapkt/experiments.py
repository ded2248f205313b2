"""
End-to-end comparison of the prefix settings on a synthetic corpus.

``reproduce`` runs, per seed: corpus generation and splitting, backbone pretraining, the
persona-agnostic fine-tuning baseline, random-init prefix tuning, the three source
strategies with their personalized prefixes, and evaluation of every setting on Parts B
and C. The summary averages the reports over seeds and evaluates the directional checks
by majority.
"""

from __future__ import annotations

import asyncio
import dataclasses
import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from personapkt.backbone import (
    BackboneModel,
    DialogueSample,
    PrefixParams,
    Tokenizer,
    beam_decode,
    finetune_backbone,
    pretrain_backbone,
    save_backbone,
)
from personapkt.data import (
    PersonaDataset,
    build_manifest,
    generate_synthetic,
    responses,
    save_corpus,
    save_manifest,
)
from personapkt.evaluation import ConsistencyJudge, KeywordJudge, c_score, evaluate_setting
from personapkt.exceptions import DataError
from personapkt.models.config import (
    ExperimentConfig,
    PersonaTrainConfig,
    PrefixConfig,
    SourceStrategy,
)
from personapkt.models.corpus import DialogueSplit, Persona, Turn
from personapkt.models.report import EvalReport
from personapkt.models.types import Part, StrategyKind
from personapkt.pipeline import (
    SOURCE_KEY,
    PrefixStore,
    response_samples,
    train_personalized,
    train_personas,
    train_source,
    training_metadata,
)

logger = logging.getLogger(__name__)

FINE_TUNING = "Fine-tuning"
RANDOM_INIT = "Rand init + Prefix-tuning"
STRATEGY_SETTINGS = {
    StrategyKind.BASE: "PersonaPKT (base)",
    StrategyKind.TEMPERATURE: "PersonaPKT (temperature)",
    StrategyKind.PPREPTILE: "PersonaPKT (PPReptile)",
}
SETTINGS = (FINE_TUNING, RANDOM_INIT, *STRATEGY_SETTINGS.values())
EVAL_PARTS = (Part.B, Part.C)


def corpus_texts(dataset: PersonaDataset) -> Iterable[str]:
    """Every turn of every dialogue."""
    for persona in dataset:
        for dialogue in persona.dialogues:
            for turn in dialogue:
                yield turn.text


def corpus_tokenizer(dataset: PersonaDataset) -> Tokenizer:
    """Vocabulary over the whole corpus."""
    return Tokenizer.build(corpus_texts(dataset))


def pretraining_dialogues(dataset: PersonaDataset) -> list[list[Turn]]:
    """Part A training dialogues."""
    return [
        persona.dialogues[index]
        for persona in dataset.members(Part.A)
        for index in dataset.split(persona.persona_id).train
    ]


def finetune_samples(backbone: BackboneModel, dataset: PersonaDataset) -> list[DialogueSample]:
    """Response samples of the Part A training dialogues, without prefix positions."""
    return [
        sample
        for dialogue in pretraining_dialogues(dataset)
        for sample in response_samples(backbone, dialogue, 0)
    ]


def adaptation_curve(  # noqa: PLR0913
    backbone: BackboneModel,
    init: PrefixParams | None,
    persona: Persona,
    split: DialogueSplit,
    config: PersonaTrainConfig,
    prefix_config: PrefixConfig,
    judge: ConsistencyJudge,
    *,
    beam: int = 5,
    max_len: int = 16,
) -> list[float]:
    """
    Mean C score on the persona's test responses after every training epoch.

    Element ``i`` belongs to epoch ``i + 1``; the curve ends where training stops.

    Raises:
        DataError: If the persona has no test responses.
    """
    histories = [h for index in split.test for h, _ in responses(persona.dialogues[index])]
    if not histories:
        raise DataError(f"persona {persona.persona_id!r} has no test responses")
    curve: list[float] = []

    def record(epoch: int, prefix: PrefixParams) -> None:
        scores = [
            c_score(beam_decode(backbone, prefix, h, beam, max_len), persona.description, judge)
            for h in histories
        ]
        curve.append(float(np.mean(scores)))
        logger.debug("Curve of %s: epoch %d C %.3f", persona.persona_id, epoch, curve[-1])

    train_personalized(backbone, init, persona, split, config, prefix_config, on_epoch=record)
    return curve


def epochs_to_threshold(curve: Sequence[float], threshold: float) -> int | None:
    """First 1-based epoch whose value reaches ``threshold``."""
    for epoch, value in enumerate(curve, start=1):
        if value >= threshold:
            return epoch
    return None


@dataclass
class SeedRun:
    """Reports and directional outcomes of one seed."""

    seed: int
    reports: list[EvalReport] = field(default_factory=list)
    checks: dict[str, bool] = field(default_factory=dict)
    curve_wins: list[bool] = field(default_factory=list)
    """Per compared persona: PPReptile reached the threshold no later than base."""

    def report(self, setting: str, part: Part) -> EvalReport:
        """Report of one setting on one part."""
        for report in self.reports:
            if report.setting == setting and report.part is part:
                return report
        raise DataError(f"seed {self.seed}: no report for {setting} on part {part.value}")


@dataclass
class ReproduceSummary:
    """All seed runs of ``reproduce``."""

    runs: list[SeedRun]

    def _mean(self, setting: str, part: Part, metric: str) -> float | None:
        values = [getattr(r.report(setting, part).metrics, metric) for r in self.runs]
        present = [v for v in values if v is not None]
        return float(np.mean(present)) if present else None

    def checks(self) -> dict[str, bool]:
        """Majority verdict of every directional check."""
        names = sorted({name for run in self.runs for name in run.checks})
        out = {}
        for name in names:
            votes = [run.checks[name] for run in self.runs if name in run.checks]
            out[name] = sum(votes) * 2 > len(votes)
        wins = [w for run in self.runs for w in run.curve_wins]
        if wins:
            out["ppreptile_adapts_no_slower"] = sum(wins) * 2 > len(wins)
        return out

    def table(self) -> str:
        """Plain-text table: one row per setting, metric columns per part."""
        metrics = ("f1_1", "f1_2", "f1_lcs", "c_mean")
        header = ["Setting"]
        for part in EVAL_PARTS:
            header += [f"{part.value} 1-gram F1", f"{part.value} 2-gram F1"]
            header += [f"{part.value} LCS F1", f"{part.value} C"]
        header.append("Trainable params")
        rows = [header]
        for setting in SETTINGS:
            row = [setting]
            for part in EVAL_PARTS:
                for metric in metrics:
                    value = self._mean(setting, part, metric)
                    row.append("-" if value is None else f"{value:.4f}")
            row.append(self._params(setting))
            rows.append(row)
        widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths, strict=True)) for r in rows]
        return "\n".join(line.rstrip() for line in lines)

    def _params(self, setting: str) -> str:
        params = self.runs[0].report(setting, Part.B).params
        share = f"{100 * params.ratio:.3g}%"
        if setting in (FINE_TUNING, RANDOM_INIT):
            return f"N * {share}"
        return f"(N+1) * {share}"


def _strategy(kind: StrategyKind, config: ExperimentConfig, seed: int) -> SourceStrategy:
    if kind is StrategyKind.TEMPERATURE:
        return SourceStrategy(kind, temperature=config.temperature)
    if kind is StrategyKind.PPREPTILE:
        return SourceStrategy(kind, meta=dataclasses.replace(config.meta, seed=seed))
    return SourceStrategy(kind)


def _better(left: float | None, right: float | None, *, strict: bool = True) -> bool:
    if left is None or right is None:
        return False
    return left > right if strict else left >= right


def run_seed(workdir: Path, seed: int, config: ExperimentConfig) -> SeedRun:  # noqa: PLR0915
    """Run every setting for one seed; artifacts go to ``workdir/seed-<seed>``."""
    out = workdir / f"seed-{seed}"
    out.mkdir(parents=True, exist_ok=True)
    spec = dataclasses.replace(config.synthetic, seed=seed)
    dataset = generate_synthetic(spec)
    manifest = build_manifest(dataset, n_regular_target=spec.personas_b, seed=seed)
    dataset = dataset.with_manifest(manifest)
    save_corpus(dataset, out / "corpus.jsonl")
    save_manifest(manifest, out / "corpus.split.json")

    tokenizer = corpus_tokenizer(dataset)
    backbone = pretrain_backbone(
        pretraining_dialogues(dataset),
        tokenizer,
        config.backbone(len(tokenizer)),
        dataclasses.replace(config.pretrain, seed=seed),
    )
    save_backbone(backbone, out / "backbone.pktb")
    finetuned = finetune_backbone(
        backbone,
        finetune_samples(backbone, dataset),
        dataclasses.replace(config.finetune, seed=seed),
    )
    judge = KeywordJudge(spec.slots)
    persona_config = dataclasses.replace(config.persona, seed=seed)
    targets = [p for part in EVAL_PARTS for p in dataset.members(part)]
    run = SeedRun(seed)

    def evaluate(
        model: BackboneModel, prefixes: dict[str, PrefixParams] | None, setting: str
    ) -> None:
        for part in EVAL_PARTS:
            run.reports.append(
                evaluate_setting(
                    model,
                    prefixes,
                    dataset,
                    part,
                    judge,
                    setting,
                    beam=config.beam,
                    max_len=config.max_len,
                    jobs=config.jobs,
                    seed=seed,
                )
            )

    evaluate(finetuned, None, FINE_TUNING)
    random_store = PrefixStore(out / "store-random", backbone.digest)
    prefixes = asyncio.run(
        train_personas(
            backbone,
            None,
            dataset,
            targets,
            persona_config,
            config.prefix,
            random_store,
            "personalized/random",
            config.jobs,
        )
    )
    evaluate(backbone, prefixes, RANDOM_INIT)

    sources: dict[StrategyKind, PrefixParams] = {}
    for kind, setting in STRATEGY_SETTINGS.items():
        source_config = dataclasses.replace(config.source, seed=seed)
        trained = train_source(
            backbone, dataset, _strategy(kind, config, seed), source_config, config.prefix
        )
        store = PrefixStore(out / f"store-{kind.value}", backbone.digest)
        metadata = training_metadata(
            kind.value, backbone.param_count, trained, source_config.to_dict(), seed
        )
        store.store(SOURCE_KEY, trained.prefix, metadata, trained.history)
        sources[kind] = trained.prefix
        prefixes = asyncio.run(
            train_personas(
                backbone,
                trained.prefix,
                dataset,
                targets,
                persona_config,
                config.prefix,
                store,
                f"personalized/{kind.value}",
                config.jobs,
            )
        )
        evaluate(backbone, prefixes, setting)

    base = STRATEGY_SETTINGS[StrategyKind.BASE]
    temperature = STRATEGY_SETTINGS[StrategyKind.TEMPERATURE]
    run.checks = {
        "c_base_above_finetuning_B": _better(
            run.report(base, Part.B).metrics.c_mean, run.report(FINE_TUNING, Part.B).metrics.c_mean
        ),
        "f1_source_init_above_random_init_B": _better(
            run.report(base, Part.B).metrics.f1_1, run.report(RANDOM_INIT, Part.B).metrics.f1_1
        ),
        "f1_temperature_at_least_base_C": _better(
            run.report(temperature, Part.C).metrics.f1_1,
            run.report(base, Part.C).metrics.f1_1,
            strict=False,
        ),
    }

    curve_config = dataclasses.replace(persona_config, patience=persona_config.max_epochs)
    compared = sorted(dataset.members(Part.B), key=lambda p: p.persona_id)[: config.curve_personas]
    for persona in compared:
        split = dataset.split(persona.persona_id)
        if not any(True for i in split.test for _ in responses(persona.dialogues[i])):
            continue
        reached: dict[StrategyKind, float] = {}
        for kind in (StrategyKind.BASE, StrategyKind.PPREPTILE):
            curve = adaptation_curve(
                backbone,
                sources[kind],
                persona,
                split,
                curve_config,
                config.prefix,
                judge,
                beam=config.beam,
                max_len=config.max_len,
            )
            epoch = epochs_to_threshold(curve, config.curve_threshold)
            reached[kind] = math.inf if epoch is None else epoch
        run.curve_wins.append(reached[StrategyKind.PPREPTILE] <= reached[StrategyKind.BASE])

    (out / "reports.jsonl").write_bytes(b"".join(r.to_jsonb() + b"\n" for r in run.reports))
    logger.info("Seed %d done: %s", seed, run.checks)
    return run


def reproduce(workdir: Path, seeds: Sequence[int], config: ExperimentConfig) -> ReproduceSummary:
    """Run every seed and summarize."""
    if not seeds:
        raise DataError("reproduce needs at least one seed")
    workdir.mkdir(parents=True, exist_ok=True)
    return ReproduceSummary([run_seed(workdir, seed, config) for seed in seeds])
