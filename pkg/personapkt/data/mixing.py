"""Temperature-scaled persona mixing and seeded batch sampling."""

from __future__ import annotations

from collections.abc import Iterator, Mapping, Sequence

import numpy as np

from personapkt.compute import FloatArray
from personapkt.exceptions import DataError

DialogueRef = tuple[str, int]
"""(persona_id, dialogue index)."""


def temperature_mix(counts: Sequence[int], temperature: float) -> FloatArray:
    """
    Sampling probabilities from per-persona dialogue counts.

    Each share ``n_i / sum(n)`` is raised to ``1/T`` and the results renormalized, so
    ``T = 1`` is proportional sampling and large ``T`` approaches uniform.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if not counts:
        raise DataError("temperature_mix needs at least one count")
    arr = np.asarray(counts, dtype=np.float64)
    if (arr <= 0).any():
        zero = int(np.argmax(arr <= 0))
        raise DataError(
            f"count at position {zero} is {counts[zero]}; filter personas without "
            "training dialogues first"
        )
    shares = arr / arr.sum()
    weights = shares ** (1.0 / temperature)
    return weights / weights.sum()


def sample_batches(
    dialogues: Mapping[str, Sequence[int]],
    probabilities: Sequence[float] | FloatArray,
    batch_size: int,
    seed: int,
) -> Iterator[list[DialogueRef]]:
    """
    Endless stream of dialogue batches.

    Every draw first picks a persona with the given probabilities (keys of ``dialogues``
    in iteration order) and then one of its dialogues uniformly.
    """
    persona_ids = list(dialogues)
    probs = np.asarray(probabilities, dtype=np.float64)
    if probs.shape != (len(persona_ids),):
        raise ValueError(f"{probs.size} probabilities for {len(persona_ids)} personas")
    if (probs < 0).any() or abs(probs.sum() - 1.0) > 1e-9:
        raise ValueError("probabilities must be non-negative and sum to 1")
    for persona_id in persona_ids:
        if not dialogues[persona_id]:
            raise DataError(f"persona {persona_id!r} has no dialogues to sample")
    rng = np.random.default_rng(seed)
    while True:
        picks = rng.choice(len(persona_ids), size=batch_size, p=probs)
        batch: list[DialogueRef] = []
        for pick in picks.tolist():
            pool = dialogues[persona_ids[pick]]
            batch.append((persona_ids[pick], int(pool[int(rng.integers(len(pool)))])))
        yield batch
