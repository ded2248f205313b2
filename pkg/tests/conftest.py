"""Shared fixtures: a small synthetic corpus and a tiny untrained backbone."""

from __future__ import annotations

import pytest

from personapkt.backbone import BackboneModel, Tokenizer, init_weights
from personapkt.data import PersonaDataset, build_manifest, generate_synthetic
from personapkt.experiments import corpus_texts
from personapkt.models.config import BackboneConfig, PrefixConfig, SyntheticSpec

TINY_SPEC = SyntheticSpec(personas_a=4, personas_b=2, personas_c=2, turns=(4, 6), seed=3)


@pytest.fixture(scope="session")
def synthetic_dataset() -> PersonaDataset:
    """Four Part A, two Part B and two Part C personas with their splits attached."""
    dataset = generate_synthetic(TINY_SPEC)
    manifest = build_manifest(dataset, n_regular_target=2, seed=0)
    return dataset.with_manifest(manifest)


@pytest.fixture(scope="session")
def tokenizer(synthetic_dataset: PersonaDataset) -> Tokenizer:
    return Tokenizer.build(corpus_texts(synthetic_dataset))


@pytest.fixture(scope="session")
def tiny_config(tokenizer: Tokenizer) -> BackboneConfig:
    return BackboneConfig(
        vocab_size=len(tokenizer), d_model=16, n_layers=2, n_heads=2, d_ffn=32, max_context=64
    )


@pytest.fixture(scope="session")
def backbone(tiny_config: BackboneConfig, tokenizer: Tokenizer) -> BackboneModel:
    """Randomly initialized; large enough weights for non-trivial gradients."""
    return BackboneModel(tiny_config, init_weights(tiny_config, seed=1, std=0.2), tokenizer)


@pytest.fixture
def prefix_config() -> PrefixConfig:
    return PrefixConfig(prefix_len=3, k_reparam=8, init_std=0.3)
