"""Serializable models shared by the library, the store and the command line."""

from __future__ import annotations

__all__ = [
    "BackboneConfig",
    "DialogueSplit",
    "ExperimentConfig",
    "EpochLog",
    "EvalMetrics",
    "EvalReport",
    "InitMode",
    "MetaTrainConfig",
    "MixConfig",
    "OptimizerRule",
    "ParamsReport",
    "Part",
    "Persona",
    "PersonaTrainConfig",
    "PrefixConfig",
    "PrefixMetadata",
    "PretrainConfig",
    "RunConfig",
    "SourceStrategy",
    "SourceTrainConfig",
    "SplitManifest",
    "StrategyKind",
    "SyntheticSpec",
    "Turn",
    "config",
    "corpus",
    "report",
    "types",
]

from . import config, corpus, report, types
from .config import (
    BackboneConfig,
    ExperimentConfig,
    MetaTrainConfig,
    MixConfig,
    PersonaTrainConfig,
    PrefixConfig,
    PretrainConfig,
    RunConfig,
    SourceStrategy,
    SourceTrainConfig,
    SyntheticSpec,
)
from .corpus import DialogueSplit, Persona, SplitManifest, Turn
from .report import EpochLog, EvalMetrics, EvalReport, ParamsReport, PrefixMetadata
from .types import InitMode, OptimizerRule, Part, StrategyKind
