from __future__ import annotations

import threading
from pathlib import Path

import numpy as np
import pytest

from personapkt.backbone import BackboneModel, PrefixParams
from personapkt.exceptions import DataError, NotFoundError, UsageError
from personapkt.models.config import PrefixConfig
from personapkt.models.report import EpochLog
from personapkt.pipeline import (
    SOURCE_KEY,
    PrefixStore,
    TrainedPrefix,
    load_prefix,
    store_prefix,
    training_metadata,
)

HISTORY = [
    EpochLog(epoch=1, train_loss=3.0, valid_loss=2.5, lr=0.01),
    EpochLog(epoch=2, train_loss=2.0, valid_loss=2.7, lr=0.005),
]


@pytest.fixture
def prefix(backbone: BackboneModel, prefix_config: PrefixConfig) -> PrefixParams:
    return PrefixParams.random(
        backbone.config, prefix_config, seed=0, backbone_digest=backbone.digest
    )


def _metadata(backbone: BackboneModel, prefix: PrefixParams):
    trained = TrainedPrefix(prefix, HISTORY)
    return training_metadata("base", backbone.param_count, trained, {"lr": 0.01}, seed=3)


def test_store_roundtrip_keeps_deployed_floats_and_training_state(
    tmp_path: Path, backbone: BackboneModel, prefix: PrefixParams
) -> None:
    store = PrefixStore(tmp_path / "store", backbone.digest)
    written = store_prefix(store, SOURCE_KEY, prefix, _metadata(backbone, prefix), HISTORY)

    loaded = load_prefix(store, SOURCE_KEY)

    np.testing.assert_array_equal(loaded.deployed, prefix.deployed)
    assert loaded.reparam is not None
    for key, value in prefix.reparam.items():
        np.testing.assert_array_equal(loaded.reparam[key], value)
    assert store.load(SOURCE_KEY, with_reparam=False).reparam is None
    assert written.backbone_digest == backbone.digest.hex()
    assert store.metadata(SOURCE_KEY) == written
    assert store.history(SOURCE_KEY) == HISTORY
    assert SOURCE_KEY in store
    assert sorted(p.name for p in (tmp_path / "store").iterdir()) == [
        "source.json",
        "source.log.jsonl",
        "source.pktp",
        "source.reparam",
    ]


def test_metadata_records_ratio_and_best_valid_loss(
    backbone: BackboneModel, prefix: PrefixParams
) -> None:
    metadata = _metadata(backbone, prefix)
    assert metadata.strategy == "base"
    assert metadata.seed == 3
    assert metadata.metrics["deployed"] == prefix.deployed_count
    assert metadata.metrics["ratio"] == pytest.approx(prefix.deployed_count / backbone.param_count)
    assert metadata.metrics["best_valid_loss"] == 2.5


def test_rewrites_bump_the_revision(
    tmp_path: Path, backbone: BackboneModel, prefix: PrefixParams
) -> None:
    store = PrefixStore(tmp_path, backbone.digest)
    metadata = _metadata(backbone, prefix)
    assert [store.store("p1", prefix, metadata).revision for _ in range(3)] == [0, 1, 2]
    assert store.metadata("p1").revision == 2


def test_total_deployed_counts_source_and_personas(
    tmp_path: Path, backbone: BackboneModel, prefix: PrefixParams
) -> None:
    store = PrefixStore(tmp_path, backbone.digest)
    metadata = _metadata(backbone, prefix)
    for key in (SOURCE_KEY, "p1", "p2", "p3"):
        store.store(key, prefix, metadata)
    assert store.keys() == ["p1", "p2", "p3", "source"]
    assert store.total_deployed() == 4 * prefix.deployed_count


def test_unknown_and_invalid_keys(tmp_path: Path, backbone: BackboneModel) -> None:
    store = PrefixStore(tmp_path, backbone.digest)
    with pytest.raises(NotFoundError, match="no prefix stored under 'ghost'"):
        store.load("ghost")
    with pytest.raises(NotFoundError):
        store.metadata("ghost")
    with pytest.raises(UsageError, match="invalid store key"):
        store.load("../escape")
    assert "ghost" not in store


def test_prefixes_are_bound_to_their_backbone(
    tmp_path: Path, backbone: BackboneModel, prefix: PrefixParams
) -> None:
    other = PrefixStore(tmp_path, bytes(32))
    with pytest.raises(DataError, match="trained on backbone"):
        other.store("p1", prefix, _metadata(backbone, prefix))

    PrefixStore(tmp_path, backbone.digest).store("p1", prefix, _metadata(backbone, prefix))
    with pytest.raises(DataError, match="belongs to backbone"):
        other.load("p1")


def test_concurrent_writes_to_distinct_keys(
    tmp_path: Path, backbone: BackboneModel, prefix: PrefixParams
) -> None:
    store = PrefixStore(tmp_path, backbone.digest)
    metadata = _metadata(backbone, prefix)
    threads = [
        threading.Thread(target=store.store, args=(f"p{i}", prefix, metadata)) for i in range(8)
    ]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    assert store.keys() == sorted(f"p{i}" for i in range(8))
    assert all(store.metadata(f"p{i}").revision == 0 for i in range(8))
