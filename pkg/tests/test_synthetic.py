from __future__ import annotations

from pathlib import Path

import pytest

from personapkt.data import convert_personachat, generate_synthetic
from personapkt.data.synthetic import description_sentence, trait_slots
from personapkt.evaluation import KeywordJudge, c_score
from personapkt.exceptions import DataError, NotFoundError
from personapkt.models.config import SyntheticSpec
from personapkt.models.corpus import Persona

SPEC = SyntheticSpec(personas_a=5, personas_b=3, personas_c=2, seed=11)


def test_generation_counts_and_shapes() -> None:
    dataset = generate_synthetic(SPEC)
    assert len(dataset) == 10
    low, high = SPEC.regular_dialogues
    for index, persona in enumerate(dataset):
        if index < 8:
            assert low <= persona.n_dialogues <= high
        else:
            assert persona.n_dialogues == SPEC.few_shot_dialogues
        assert len(persona.description) == len(SPEC.slots)
        for dialogue in persona.dialogues:
            assert dialogue[0].speaker == 1
            assert len(dialogue) % 2 == 0


def test_generation_is_seeded() -> None:
    assert generate_synthetic(SPEC).personas == generate_synthetic(SPEC).personas
    other = generate_synthetic(SyntheticSpec(personas_a=5, personas_b=3, personas_c=2, seed=12))
    assert other.personas != generate_synthetic(SPEC).personas


def test_personas_have_distinct_traits() -> None:
    dataset = generate_synthetic(SPEC)
    descriptions = {frozenset(p.description) for p in dataset}
    assert len(descriptions) == len(dataset)


def test_speaker_two_never_contradicts_own_traits() -> None:
    dataset = generate_synthetic(SPEC)
    judge = KeywordJudge(SPEC.slots)
    for persona in dataset:
        for dialogue in persona.dialogues:
            for turn in dialogue:
                if turn.speaker == 2:
                    assert c_score(turn.text, persona.description, judge) >= 0


def test_too_many_personas() -> None:
    spec = SyntheticSpec(slots={"color": ["red", "blue"]}, personas_a=2, personas_b=1, personas_c=0)
    with pytest.raises(DataError, match="only 2 distinct"):
        generate_synthetic(spec)


def test_spec_validation() -> None:
    with pytest.raises(ValueError, match="unique single word"):
        SyntheticSpec(slots={"color": ["red"], "food": ["red"]})
    with pytest.raises(ValueError, match="turns"):
        SyntheticSpec(turns=(1, 4))


def test_description_sentence() -> None:
    assert description_sentence("pet", "cat") == "my favorite pet is cat"


PERSONACHAT = """\
1 your persona: i like cats.
2 your persona: i am a nurse.
3 hi there\thello ! i just got home from the hospital .\t\tcand a|cand b
4 what do you do ?\ti am a nurse .
1 your persona: i like cats.
2 your persona: i am a nurse.
3 do you have pets ?\tyes , two cats .
1 your persona: i love hiking.
2 hello\thi ! i was out hiking .
"""


def test_convert_personachat_groups_by_description(tmp_path: Path) -> None:
    path = tmp_path / "train_self_original.txt"
    path.write_text(PERSONACHAT, encoding="utf-8")

    dataset = convert_personachat([path])

    assert len(dataset) == 2
    nurse, hiker = dataset.personas
    assert nurse.description == ["i like cats.", "i am a nurse."]
    assert nurse.n_dialogues == 2
    assert [t.speaker for t in nurse.dialogues[0]] == [1, 2, 1, 2]
    assert nurse.dialogues[0][1].text == "hello ! i just got home from the hospital ."
    assert hiker.n_dialogues == 1


def test_convert_personachat_errors(tmp_path: Path) -> None:
    bad = tmp_path / "bad.txt"
    bad.write_text("1 your persona: x.\nnot numbered\n", encoding="utf-8")
    with pytest.raises(DataError, match="bad.txt:2"):
        convert_personachat([bad])
    with pytest.raises(NotFoundError):
        convert_personachat([tmp_path / "missing.txt"])


def test_trait_slots_are_read_back_from_descriptions() -> None:
    dataset = generate_synthetic(SPEC)
    slots = trait_slots(dataset)
    assert set(slots) == set(SPEC.slots)
    for slot, values in slots.items():
        assert set(values) <= set(SPEC.slots[slot])
    first = dataset.personas[0]
    assert all(s.split()[-1] in slots[s.split()[2]] for s in first.description)


def test_trait_slots_reject_ambiguous_values() -> None:
    personas = [
        Persona("p1", ["my favorite color is olive"]),
        Persona("p2", ["My favorite food is olive ."]),
    ]
    with pytest.raises(DataError, match="'olive' is named under slots 'color' and 'food'"):
        trait_slots(personas)
    assert trait_slots([Persona("p3", ["i live in a big city"])]) == {}
