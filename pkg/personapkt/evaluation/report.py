"""Trainable-parameter accounting and automatic evaluation of one setting on one part."""

from __future__ import annotations

import logging
from collections.abc import Callable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from personapkt.backbone import BackboneModel, PrefixParams, beam_decode, deployed_count
from personapkt.data import PersonaDataset, responses
from personapkt.models.corpus import Persona, Turn
from personapkt.models.report import EvalMetrics, EvalReport, ParamsReport
from personapkt.models.types import Part

from .judge import ConsistencyJudge, c_score
from .metrics import lcs_f1, ngram_f1

logger = logging.getLogger(__name__)

Responder = Callable[[PrefixParams | None, Sequence[Turn]], str]
"""Produces the next speaker-2 turn for a history under a prefix."""


def param_accounting(
    n_layers: int,
    d_model: int,
    prefix_len: int,
    backbone_params: int,
    n_personas: int | None = None,
) -> ParamsReport:
    """
    Deployed floats of one prefix and their share of the backbone.

    With ``n_personas`` the store total ``(n_personas + 1) * deployed`` (personalized
    prefixes plus the source prefix) is included.

    Raises:
        ValueError: If a dimension or the backbone size is not positive, or L is negative.
    """
    if n_layers <= 0 or d_model <= 0 or backbone_params <= 0:
        raise ValueError(
            f"n_layers, d_model and backbone_params must be positive, "
            f"got {n_layers}, {d_model}, {backbone_params}"
        )
    if prefix_len < 0:
        raise ValueError(f"prefix_len must be non-negative, got {prefix_len}")
    deployed = deployed_count(n_layers, prefix_len, d_model)
    store_total = None if n_personas is None else (n_personas + 1) * deployed
    return ParamsReport(
        deployed=deployed,
        backbone=backbone_params,
        ratio=deployed / backbone_params,
        store_total=store_total,
    )


@dataclass(frozen=True)
class _Scored:
    dialogue: int
    turn: int
    f1_1: float
    f1_2: float
    f1_lcs: float
    c: int


def _score_persona(
    persona: Persona,
    test: Sequence[int],
    prefix: PrefixParams | None,
    respond: Responder,
    judge: ConsistencyJudge,
) -> list[_Scored]:
    out: list[_Scored] = []
    for index in sorted(test):
        for history, target in responses(persona.dialogues[index]):
            hypothesis = respond(prefix, history)
            out.append(
                _Scored(
                    dialogue=index,
                    turn=len(history),
                    f1_1=ngram_f1(hypothesis, target.text, 1),
                    f1_2=ngram_f1(hypothesis, target.text, 2),
                    f1_lcs=lcs_f1(hypothesis, target.text),
                    c=c_score(hypothesis, persona.description, judge),
                )
            )
    logger.debug("Scored %d responses of persona %s", len(out), persona.persona_id)
    return out


def evaluate_setting(  # noqa: PLR0913
    backbone: BackboneModel,
    prefixes: Mapping[str, PrefixParams] | None,
    dataset: PersonaDataset,
    part: Part,
    judge: ConsistencyJudge,
    setting: str,
    *,
    beam: int = 5,
    max_len: int = 24,
    jobs: int = 1,
    seed: int | None = None,
    responder: Responder | None = None,
) -> EvalReport:
    """
    Decode every speaker-2 test response of ``part`` and score it.

    Args:
        backbone: Frozen backbone (fine-tuned for full-model settings).
        prefixes: Prefix per persona id, or None for a no-prefix setting.
        dataset: Corpus with its split manifest attached.
        part: Part whose test dialogues are evaluated.
        judge: Consistency judge for the C score.
        setting: Name recorded in the report.
        beam: Beam width.
        max_len: Maximum response length in tokens.
        jobs: Personas decoded in parallel.
        seed: Recorded in the report.
        responder: Replaces beam decoding (used to evaluate fixed outputs).

    Returns:
        Means of the per-response metrics. Personas without a prefix are skipped and
        counted; with nothing evaluated every metric is None.
    """
    members = sorted(dataset.members(part), key=lambda p: p.persona_id)
    respond: Responder = responder or (
        lambda prefix, history: beam_decode(backbone, prefix, history, beam, max_len)
    )
    jobs_list: list[tuple[Persona, PrefixParams | None]] = []
    skipped = 0
    for persona in members:
        prefix = None
        if prefixes is not None:
            prefix = prefixes.get(persona.persona_id)
            if prefix is None:
                logger.warning(
                    "%s: no prefix for persona %s, skipping", setting, persona.persona_id
                )
                skipped += 1
                continue
        jobs_list.append((persona, prefix))

    def run(item: tuple[Persona, PrefixParams | None]) -> list[_Scored]:
        persona, prefix = item
        return _score_persona(
            persona, dataset.split(persona.persona_id).test, prefix, respond, judge
        )

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        per_persona = list(pool.map(run, jobs_list))
    scored = [s for group in per_persona for s in group]

    if scored:
        metrics = EvalMetrics(
            f1_1=float(np.mean([s.f1_1 for s in scored])),
            f1_2=float(np.mean([s.f1_2 for s in scored])),
            f1_lcs=float(np.mean([s.f1_lcs for s in scored])),
            c_mean=float(np.mean([s.c for s in scored])),
        )
    else:
        metrics = EvalMetrics(f1_1=None, f1_2=None, f1_lcs=None, c_mean=None)

    config = backbone.config
    if prefixes is None:
        count = backbone.param_count
        params = ParamsReport(deployed=count, backbone=count, ratio=1.0)
    else:
        prefix_len = next((p.prefix_len for _, p in jobs_list if p is not None), 0)
        params = param_accounting(config.n_layers, config.d_model, prefix_len, backbone.param_count)
    logger.info(
        "%s on part %s: %d responses, %d personas skipped, C %s",
        setting,
        part.value,
        len(scored),
        skipped,
        "n/a" if metrics.c_mean is None else f"{metrics.c_mean:.4f}",
    )
    return EvalReport(
        setting=setting,
        part=part,
        metrics=metrics,
        params=params,
        samples=len(scored),
        skipped_personas=skipped,
        seed=seed,
    )
