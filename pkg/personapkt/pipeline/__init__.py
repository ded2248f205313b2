"""Two-stage prefix transfer: source prefixes, personalized prefixes and the prefix store."""

__all__ = [
    "SOURCE_KEY",
    "PrefixStore",
    "TrainedPrefix",
    "evaluation_loss",
    "load_prefix",
    "persona_samples",
    "ppreptile_inner",
    "ppreptile_outer",
    "prefix_loss",
    "response_samples",
    "store_prefix",
    "train_personalized",
    "train_personas",
    "train_source",
    "train_source_base",
    "train_source_ppreptile",
    "train_source_temperature",
    "training_metadata",
]

from .objective import (
    TrainedPrefix,
    evaluation_loss,
    persona_samples,
    prefix_loss,
    response_samples,
)
from .personalized import train_personalized, train_personas
from .source import (
    ppreptile_inner,
    ppreptile_outer,
    train_source,
    train_source_base,
    train_source_ppreptile,
    train_source_temperature,
)
from .store import SOURCE_KEY, PrefixStore, load_prefix, store_prefix, training_metadata
