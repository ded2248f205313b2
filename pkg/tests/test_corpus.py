from __future__ import annotations

from pathlib import Path

import pytest

from personapkt.data import (
    PersonaDataset,
    build_manifest,
    dataset_statistics,
    load_corpus,
    load_manifest,
    partition_personas,
    responses,
    save_corpus,
    save_manifest,
    split_counts,
    split_dialogues,
)
from personapkt.exceptions import DataError, NotFoundError
from personapkt.models.corpus import DialogueSplit, Persona, SplitManifest, Turn
from personapkt.models.types import Part

DIALOGUE = [Turn(1, "hi"), Turn(2, "hello"), Turn(1, "how are you ?"), Turn(2, "fine .")]


def _persona(persona_id: str, n_dialogues: int) -> Persona:
    return Persona(
        persona_id=persona_id, description=["i am here"], dialogues=[DIALOGUE] * n_dialogues
    )


def test_split_counts_ten_dialogues() -> None:
    assert split_counts(10) == (8, 1, 1)


@pytest.mark.parametrize("d", range(1, 21))
def test_split_counts_partition(d: int) -> None:
    train, valid, test = split_counts(d)
    assert train + valid + test == d
    assert min(train, valid, test) >= 0
    if d >= 3:
        assert valid >= 1
        assert test >= 1
        assert train >= 1


@pytest.mark.parametrize("d", [1, 2, 3, 7, 10, 20])
def test_split_dialogues_partitions_indices(d: int) -> None:
    split = split_dialogues(d, seed=4)
    assert sorted(split.all_indices()) == list(range(d))
    assert (len(split.train), len(split.valid), len(split.test)) == split_counts(d)
    assert split == split_dialogues(d, seed=4)


def test_partition_census_matches_published_shape() -> None:
    personas = [_persona(f"r{i:04d}", 6 + i % 5) for i in range(1054)]
    personas += [_persona(f"f{i:04d}", 1 + i % 5) for i in range(239)]
    parts = partition_personas(
        PersonaDataset(personas), few_shot_threshold=6, n_source=754, n_regular_target=300
    )
    counts = {part: sum(1 for p in parts.values() if p is part) for part in Part}
    assert counts == {Part.A: 754, Part.B: 300, Part.C: 239}
    assert all(parts[f"f{i:04d}"] is Part.C for i in range(239))


def test_partition_is_seeded() -> None:
    dataset = PersonaDataset([_persona(f"p{i}", 7) for i in range(20)])
    assert partition_personas(dataset, n_regular_target=5, seed=1) == partition_personas(
        dataset, n_regular_target=5, seed=1
    )
    assert partition_personas(dataset, n_regular_target=5, seed=1) != partition_personas(
        dataset, n_regular_target=5, seed=2
    )


def test_partition_needs_enough_regular_personas() -> None:
    dataset = PersonaDataset([_persona("a", 7), _persona("b", 7), _persona("c", 2)])
    with pytest.raises(DataError, match="need 3 regular personas"):
        partition_personas(dataset, n_source=2, n_regular_target=1)


def test_corpus_and_manifest_roundtrip(tmp_path: Path, synthetic_dataset: PersonaDataset) -> None:
    corpus_path = tmp_path / "corpus.jsonl"
    manifest_path = tmp_path / "corpus.split.json"
    save_corpus(synthetic_dataset, corpus_path)
    manifest = SplitManifest(
        part=synthetic_dataset.parts, splits=synthetic_dataset.splits, seed=0, few_shot_threshold=6
    )
    save_manifest(manifest, manifest_path)

    loaded = load_corpus(corpus_path).with_manifest(load_manifest(manifest_path))

    assert loaded.personas == synthetic_dataset.personas
    assert loaded.parts == synthetic_dataset.parts
    assert loaded.splits == synthetic_dataset.splits


def test_load_corpus_names_bad_line(tmp_path: Path) -> None:
    path = tmp_path / "bad.jsonl"
    good = _persona("ok", 1).to_jsonb()
    bad = (
        b'{"persona_id": "x", "dialogues": '
        b'[[{"speaker": 1, "text": "a"}, {"speaker": 1, "text": "b"}]]}'
    )
    path.write_bytes(good + b"\n" + bad + b"\n")
    with pytest.raises(DataError, match=r"bad.jsonl:2:"):
        load_corpus(path)


def test_missing_files(tmp_path: Path) -> None:
    with pytest.raises(NotFoundError, match="corpus file not found"):
        load_corpus(tmp_path / "nope.jsonl")
    with pytest.raises(NotFoundError, match="split manifest not found"):
        load_manifest(tmp_path / "nope.json")


def test_duplicate_persona_ids() -> None:
    with pytest.raises(DataError, match="duplicate persona_id 'a'"):
        PersonaDataset([_persona("a", 1), _persona("a", 2)])


def test_manifest_must_describe_corpus() -> None:
    dataset = PersonaDataset([_persona("a", 3)])
    wrong = SplitManifest(
        part={"a": Part.A},
        splits={"a": DialogueSplit(train=[0], valid=[1], test=[5])},
        seed=0,
        few_shot_threshold=6,
    )
    with pytest.raises(DataError, match="does not partition its 3 dialogues"):
        dataset.with_manifest(wrong)


def test_build_manifest_and_statistics(synthetic_dataset: PersonaDataset) -> None:
    manifest = build_manifest(synthetic_dataset, n_regular_target=2, seed=0)
    assert manifest.part == synthetic_dataset.parts
    rows = {row.part: row for row in dataset_statistics(synthetic_dataset)}
    assert (rows[Part.A].personas, rows[Part.B].personas, rows[Part.C].personas) == (4, 2, 2)
    total = sum(p.n_dialogues for p in synthetic_dataset)
    assert sum(r.train + r.valid + r.test for r in rows.values()) == total


def test_responses_pair_each_speaker_two_turn_with_its_history() -> None:
    pairs = list(responses(DIALOGUE))
    assert [target.text for _, target in pairs] == ["hello", "fine ."]
    assert [len(history) for history, _ in pairs] == [1, 3]


def test_persona_rejects_short_or_non_alternating_dialogues() -> None:
    with pytest.raises(ValueError, match="need >= 2"):
        Persona(persona_id="x", dialogues=[[Turn(1, "hi")]])
    with pytest.raises(ValueError, match="speaker must be 1 or 2"):
        Turn(3, "hi")
