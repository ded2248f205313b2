"""
Synthetic persona corpus with verifiable traits.

Every persona owns one value per trait slot. Its description names each value in a
``my favorite <slot> is <value>`` sentence and its speaker-2 turns reveal the values when
the partner asks, so persona consistency can be judged by keyword matching.
"""

from __future__ import annotations

import itertools
import logging
import re
from collections.abc import Iterable

import numpy as np

from personapkt.exceptions import DataError
from personapkt.models.config import SyntheticSpec
from personapkt.models.corpus import Persona, Turn

from .corpus import PersonaDataset

logger = logging.getLogger(__name__)

_GREETINGS = ("hi how are you today ?", "hello there ! how is your day going ?")
_GREETING_REPLIES = ("i am doing well thank you .", "pretty good thanks for asking .")
_SMALL_TALK = ("that is nice to hear .", "cool ! tell me more .")
_ANSWERS = (
    "my favorite {slot} is {value} .",
    "i really like {value} . it is my favorite {slot} .",
)
_DESCRIPTION = re.compile(r"my favorite (\w+) is (\w+)\s*\.?")


def description_sentence(slot: str, value: str) -> str:
    """The description sentence naming one trait."""
    return f"my favorite {slot} is {value}"


def trait_slots(personas: Iterable[Persona]) -> dict[str, list[str]]:
    """
    Recover the slot vocabularies from ``my favorite <slot> is <value>`` descriptions.

    Sentences of any other shape are skipped, so the result is empty for corpora without
    single-word traits.

    Raises:
        DataError: If one value is named under two slots.
    """
    values: dict[str, set[str]] = {}
    slot_of: dict[str, str] = {}
    for persona in personas:
        for sentence in persona.description:
            match = _DESCRIPTION.fullmatch(sentence.strip().lower())
            if match is None:
                continue
            slot, value = match.group(1), match.group(2)
            if slot_of.setdefault(value, slot) != slot:
                raise DataError(
                    f"value {value!r} is named under slots {slot_of[value]!r} and {slot!r}"
                )
            values.setdefault(slot, set()).add(value)
    return {slot: sorted(names) for slot, names in sorted(values.items())}


def generate_synthetic(spec: SyntheticSpec) -> PersonaDataset:
    """
    Generate a corpus from ``spec``.

    Personas ``0 .. personas_a + personas_b - 1`` are regular (dialogue counts drawn from
    ``regular_dialogues``); the last ``personas_c`` are few-shot with
    ``few_shot_dialogues`` each. Distinct personas never share all trait values.

    Raises:
        DataError: If more personas are requested than distinct trait combinations exist.
    """
    slots = list(spec.slots)
    combinations = list(itertools.product(*(spec.slots[s] for s in slots)))
    if spec.total_personas > len(combinations):
        raise DataError(
            f"{spec.total_personas} personas requested but only {len(combinations)} distinct "
            "trait combinations exist"
        )
    rng = np.random.default_rng(spec.seed)
    picks = rng.choice(len(combinations), size=spec.total_personas, replace=False).tolist()
    n_regular = spec.personas_a + spec.personas_b
    personas: list[Persona] = []
    for index, pick in enumerate(picks):
        traits = dict(zip(slots, combinations[pick], strict=True))
        if index < n_regular:
            low, high = spec.regular_dialogues
            count = int(rng.integers(low, high + 1))
        else:
            count = spec.few_shot_dialogues
        dialogues = [_dialogue(traits, spec, rng) for _ in range(count)]
        personas.append(
            Persona(
                persona_id=f"persona-{index:04d}",
                description=[description_sentence(s, v) for s, v in traits.items()],
                dialogues=dialogues,
            )
        )
    logger.info(
        "Generated %d synthetic personas (%d regular, %d few-shot)",
        len(personas),
        n_regular,
        spec.personas_c,
    )
    return PersonaDataset(personas)


def _dialogue(traits: dict[str, str], spec: SyntheticSpec, rng: np.random.Generator) -> list[Turn]:
    low, high = spec.turns
    n_turns = int(rng.integers(low, high + 1))
    n_turns += n_turns % 2
    slots = list(traits)
    turns: list[Turn] = []
    for exchange in range(n_turns // 2):
        kind = "greet" if exchange == 0 and rng.random() < 0.5 else "ask"
        if kind == "greet":
            turns.append(Turn(1, str(rng.choice(_GREETINGS))))
            turns.append(Turn(2, str(rng.choice(_GREETING_REPLIES))))
            continue
        slot = slots[int(rng.integers(len(slots)))]
        if rng.random() < 0.5:
            question = f"what is your favorite {slot} ?"
        else:
            mine = str(rng.choice(spec.slots[slot]))
            question = f"{description_sentence(slot, mine)} . what is yours ?"
        if exchange > 0 and rng.random() < 0.3:
            question = f"{rng.choice(_SMALL_TALK)} {question}"
        turns.append(Turn(1, question))
        template = str(rng.choice(_ANSWERS))
        turns.append(Turn(2, template.format(slot=slot, value=traits[slot])))
    return turns
