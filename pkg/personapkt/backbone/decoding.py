"""Beam-search and greedy decoding of a speaker-2 response."""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from personapkt.compute import FloatArray
from personapkt.exceptions import ContextOverflowError
from personapkt.models.corpus import Turn

from .prefix import PrefixParams
from .tokenizer import EOU
from .transformer import BackboneModel, next_token_logprobs

ScoreFn = Callable[[Sequence[int]], FloatArray]
"""Maps the token ids so far to next-token log-probabilities."""


@dataclass(frozen=True)
class Hypothesis:
    """A decoded continuation and its cumulative log-probability."""

    tokens: tuple[int, ...]
    score: float

    @property
    def normalized_score(self) -> float:
        """Cumulative log-probability divided by the token count."""
        return self.score / max(1, len(self.tokens))


def beam_search(
    score_fn: ScoreFn,
    context: Sequence[int],
    beam: int,
    max_len: int,
    eos_id: int,
) -> Hypothesis:
    """
    Best continuation of ``context`` by length-normalized log-probability.

    Every step keeps at most ``beam`` live hypotheses, ranked by cumulative log-probability
    (ties broken by token ids). Hypotheses ending in ``eos_id`` are finished; the search
    stops once ``beam`` hypotheses are finished, nothing is live or ``max_len`` tokens were
    generated. Unfinished survivors compete when nothing finished. Candidates with a
    log-probability of minus infinity are never extended.
    """
    if beam < 1:
        raise ValueError(f"beam must be >= 1, got {beam}")
    live = [Hypothesis((), 0.0)]
    finished: list[Hypothesis] = []
    for _ in range(max_len):
        if not live or len(finished) >= beam:
            break
        candidates: list[Hypothesis] = []
        for hyp in live:
            logprobs = score_fn([*context, *hyp.tokens])
            order = np.argsort(-logprobs, kind="stable")[:beam]
            for token in order.tolist():
                value = float(logprobs[token])
                if np.isfinite(value):
                    candidates.append(Hypothesis((*hyp.tokens, token), hyp.score + value))
        candidates.sort(key=lambda h: (-h.score, h.tokens))
        live = []
        for hyp in candidates[: beam - len(finished)]:
            if hyp.tokens[-1] == eos_id:
                finished.append(hyp)
            else:
                live.append(hyp)
    pool = finished or live
    if not pool:
        return Hypothesis((), 0.0)
    best = pool[0]
    for hyp in pool[1:]:
        if hyp.normalized_score > best.normalized_score:
            best = hyp
    return best


def greedy_search(
    score_fn: ScoreFn, context: Sequence[int], max_len: int, eos_id: int
) -> Hypothesis:
    """Pick the most likely token at every step (lowest id on ties)."""
    tokens: list[int] = []
    score = 0.0
    for _ in range(max_len):
        logprobs = score_fn([*context, *tokens])
        token = int(np.argmax(logprobs))
        if not np.isfinite(logprobs[token]):
            break
        tokens.append(token)
        score += float(logprobs[token])
        if token == eos_id:
            break
    return Hypothesis(tuple(tokens), score)


def _response_scorer(model: BackboneModel, prefix: PrefixParams | None) -> ScoreFn:
    tokenizer = model.tokenizer
    eos = tokenizer.id(EOU)
    banned = sorted(tokenizer.special_ids - {eos})

    def score(ids: Sequence[int]) -> FloatArray:
        logprobs = next_token_logprobs(model, prefix, ids)
        logprobs[banned] = -np.inf
        return logprobs

    return score


def _fit_context(
    model: BackboneModel, prefix: PrefixParams | None, ids: list[int], max_len: int
) -> list[int]:
    prefix_len = prefix.prefix_len if prefix is not None else 0
    budget = model.context_budget(prefix_len)
    keep = budget - max_len + 1
    if keep < 1:
        raise ContextOverflowError(
            f"cannot decode {max_len} tokens within max_context {model.config.max_context} "
            f"with {prefix_len} prefix positions"
        )
    return ids[-keep:]


def _decode(
    model: BackboneModel,
    prefix: PrefixParams | None,
    history: Sequence[Turn],
    max_len: int,
    beam: int | None,
) -> str:
    context = _fit_context(model, prefix, model.tokenizer.encode_history(history), max_len)
    score = _response_scorer(model, prefix)
    eos = model.tokenizer.id(EOU)
    if beam is None:
        hyp = greedy_search(score, context, max_len, eos)
    else:
        hyp = beam_search(score, context, beam, max_len, eos)
    return model.tokenizer.decode(hyp.tokens, skip_special=True)


def beam_decode(
    model: BackboneModel,
    prefix: PrefixParams | None,
    history: Sequence[Turn],
    beam: int = 5,
    max_len: int = 24,
) -> str:
    """Decode the next speaker-2 response to ``history`` with beam search."""
    return _decode(model, prefix, history, max_len, beam)


def greedy_decode(
    model: BackboneModel,
    prefix: PrefixParams | None,
    history: Sequence[Turn],
    max_len: int = 24,
) -> str:
    """Decode the next speaker-2 response to ``history`` greedily."""
    return _decode(model, prefix, history, max_len, None)
