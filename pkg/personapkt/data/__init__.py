"""Persona corpora: loading, partitioning, splitting, mixing and generation."""

__all__ = [
    "FEW_SHOT_THRESHOLD",
    "DialogueRef",
    "PartStatistics",
    "PersonaDataset",
    "build_manifest",
    "convert_personachat",
    "dataset_statistics",
    "generate_synthetic",
    "load_corpus",
    "load_manifest",
    "partition_personas",
    "responses",
    "sample_batches",
    "save_corpus",
    "save_manifest",
    "split_counts",
    "split_dialogues",
    "temperature_mix",
    "trait_slots",
]

from .corpus import (
    FEW_SHOT_THRESHOLD,
    PartStatistics,
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
from .mixing import DialogueRef, sample_batches, temperature_mix
from .personachat import convert_personachat
from .synthetic import generate_synthetic, trait_slots
