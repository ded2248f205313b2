from __future__ import annotations

import asyncio
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pytest

from personapkt.backbone import BackboneModel, PrefixParams
from personapkt.data import PersonaDataset
from personapkt.exceptions import DataError
from personapkt.models.config import (
    PersonaTrainConfig,
    PrefixConfig,
    SourceStrategy,
    SourceTrainConfig,
)
from personapkt.models.corpus import DialogueSplit, Persona
from personapkt.models.types import Part
from personapkt.pipeline import (
    SOURCE_KEY,
    PrefixStore,
    train_personalized,
    train_personas,
    train_source,
)
from personapkt.pipeline.objective import evaluation_loss, persona_samples
from personapkt.pipeline.personalized import persona_seed


def test_training_keeps_best_validation_checkpoint(
    backbone: BackboneModel, synthetic_dataset: PersonaDataset, prefix_config: PrefixConfig
) -> None:
    persona = synthetic_dataset.members(Part.B)[0]
    split = synthetic_dataset.split(persona.persona_id)
    init = PrefixParams.random(
        backbone.config, prefix_config, seed=5, backbone_digest=backbone.digest
    )
    epochs: list[int] = []

    trained = train_personalized(
        backbone,
        init,
        persona,
        split,
        PersonaTrainConfig(lr=1e-2, max_epochs=3, patience=3),
        prefix_config,
        on_epoch=lambda epoch, prefix: epochs.append(epoch),
    )

    assert epochs == [1, 2, 3]
    assert trained.prefix.backbone_digest == backbone.digest
    held_out = persona_samples(backbone, persona, split.valid, prefix_config.prefix_len)
    valid = [s for group in held_out.values() for s in group]
    assert init.reparam is not None and trained.prefix.reparam is not None
    best = evaluation_loss(backbone, trained.prefix.reparam, valid)
    initial = evaluation_loss(backbone, init.reparam, valid)
    assert best <= initial
    losses = [e.valid_loss for e in trained.history if e.valid_loss is not None]
    assert best == pytest.approx(min([initial, *losses]))


def test_random_initialization_is_seeded(
    backbone: BackboneModel, synthetic_dataset: PersonaDataset, prefix_config: PrefixConfig
) -> None:
    persona = synthetic_dataset.members(Part.C)[0]
    split = synthetic_dataset.split(persona.persona_id)
    config = PersonaTrainConfig(max_epochs=1, seed=4)
    first = train_personalized(backbone, None, persona, split, config, prefix_config)
    second = train_personalized(backbone, None, persona, split, config, prefix_config)
    np.testing.assert_array_equal(first.prefix.deployed, second.prefix.deployed)
    assert persona_seed(4, persona.persona_id) == persona_seed(4, persona.persona_id)


def test_random_initialization_differs_between_personas(
    backbone: BackboneModel, synthetic_dataset: PersonaDataset, prefix_config: PrefixConfig
) -> None:
    first, second = synthetic_dataset.members(Part.C)[:2]
    config = PersonaTrainConfig(max_epochs=0, seed=4)
    prefixes = [
        train_personalized(
            backbone, None, p, synthetic_dataset.split(p.persona_id), config, prefix_config
        ).prefix
        for p in (first, second)
    ]
    assert persona_seed(4, first.persona_id) != persona_seed(4, second.persona_id)
    assert not np.array_equal(prefixes[0].deployed, prefixes[1].deployed)


def test_initial_prefix_needs_training_state(
    backbone: BackboneModel, synthetic_dataset: PersonaDataset, prefix_config: PrefixConfig
) -> None:
    persona = synthetic_dataset.members(Part.B)[0]
    source = PrefixParams.random(backbone.config, prefix_config, seed=0)
    deployed_only = PrefixParams(source.deployed, None, backbone.digest)
    with pytest.raises(DataError, match="no reparametrization state"):
        train_personalized(
            backbone,
            deployed_only,
            persona,
            synthetic_dataset.split(persona.persona_id),
            PersonaTrainConfig(max_epochs=1),
            prefix_config,
        )


@pytest.mark.parametrize("jobs", [1, 3])
def test_train_personas_stores_one_prefix_per_persona(
    tmp_path: Path,
    backbone: BackboneModel,
    synthetic_dataset: PersonaDataset,
    prefix_config: PrefixConfig,
    jobs: int,
) -> None:
    store = PrefixStore(tmp_path, backbone.digest)
    personas = synthetic_dataset.members(Part.B) + synthetic_dataset.members(Part.C)
    config = PersonaTrainConfig(max_epochs=1)

    trained = asyncio.run(
        train_personas(
            backbone,
            None,
            synthetic_dataset,
            personas,
            config,
            prefix_config,
            store,
            "personalized/random",
            jobs=jobs,
        )
    )

    ids = sorted(p.persona_id for p in personas)
    assert list(trained) == ids
    assert store.keys() == ids
    for persona_id, prefix in trained.items():
        np.testing.assert_array_equal(store.load(persona_id).deployed, prefix.deployed)
        assert store.metadata(persona_id).strategy == "personalized/random"
    assert store.total_deployed() == len(ids) * trained[ids[0]].deployed_count


def test_concurrency_does_not_change_results(
    tmp_path: Path,
    backbone: BackboneModel,
    synthetic_dataset: PersonaDataset,
    prefix_config: PrefixConfig,
) -> None:
    personas = synthetic_dataset.members(Part.B)
    config = PersonaTrainConfig(max_epochs=1)
    results = []
    for jobs in (1, 2):
        store = PrefixStore(tmp_path / str(jobs), backbone.digest)
        results.append(
            asyncio.run(
                train_personas(
                    backbone,
                    None,
                    synthetic_dataset,
                    personas,
                    config,
                    prefix_config,
                    store,
                    "personalized/random",
                    jobs=jobs,
                )
            )
        )
    for persona_id, prefix in results[0].items():
        np.testing.assert_array_equal(results[1][persona_id].deployed, prefix.deployed)


@dataclass
class RecordingDataset(PersonaDataset):
    """Remembers every persona whose data is looked up."""

    requested: list[str] = field(default_factory=list)

    def persona(self, persona_id: str) -> Persona:
        self.requested.append(persona_id)
        return super().persona(persona_id)

    def split(self, persona_id: str) -> DialogueSplit:
        self.requested.append(persona_id)
        return super().split(persona_id)


def test_train_personas_reads_only_target_personas(
    tmp_path: Path,
    backbone: BackboneModel,
    synthetic_dataset: PersonaDataset,
    prefix_config: PrefixConfig,
) -> None:
    dataset = RecordingDataset(
        list(synthetic_dataset.personas),
        dict(synthetic_dataset.parts),
        dict(synthetic_dataset.splits),
    )
    targets = dataset.members(Part.B)

    asyncio.run(
        train_personas(
            backbone,
            None,
            dataset,
            targets,
            PersonaTrainConfig(max_epochs=1),
            prefix_config,
            PrefixStore(tmp_path, backbone.digest),
            "personalized/random",
            jobs=2,
        )
    )

    assert sorted(set(dataset.requested)) == sorted(p.persona_id for p in targets)


def test_source_key_is_not_a_persona_id(
    tmp_path: Path,
    backbone: BackboneModel,
    synthetic_dataset: PersonaDataset,
    prefix_config: PrefixConfig,
) -> None:
    clash = replace(synthetic_dataset.members(Part.B)[0], persona_id=SOURCE_KEY)
    store = PrefixStore(tmp_path, backbone.digest)
    with pytest.raises(DataError, match="reserved for the source prefix"):
        asyncio.run(
            train_personas(
                backbone,
                None,
                synthetic_dataset,
                [clash],
                PersonaTrainConfig(max_epochs=1),
                prefix_config,
                store,
                "personalized/random",
            )
        )
    assert store.keys() == []


def test_source_initialization_starts_closer_than_random(
    backbone: BackboneModel, synthetic_dataset: PersonaDataset, prefix_config: PrefixConfig
) -> None:
    source = train_source(
        backbone,
        synthetic_dataset,
        SourceStrategy(),
        SourceTrainConfig(max_epochs=3, lr=1e-2, patience=3),
        prefix_config,
    ).prefix
    config = PersonaTrainConfig(lr=1e-2, max_epochs=1, patience=1)
    for persona in synthetic_dataset.members(Part.B):
        split = synthetic_dataset.split(persona.persona_id)
        held_out = persona_samples(backbone, persona, split.valid, prefix_config.prefix_len)
        valid = [s for group in held_out.values() for s in group]
        from_source = train_personalized(backbone, source, persona, split, config, prefix_config)
        from_random = train_personalized(backbone, None, persona, split, config, prefix_config)
        assert from_source.prefix.reparam is not None and from_random.prefix.reparam is not None
        assert evaluation_loss(backbone, from_source.prefix.reparam, valid) <= evaluation_loss(
            backbone, from_random.prefix.reparam, valid
        )
