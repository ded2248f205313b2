"""Enum types shared across personapkt."""

from enum import Enum


class Part(Enum):
    """Persona partition of the dataset."""

    A = "A"
    """Regular personas used to train the source prefix."""
    B = "B"
    """Regular personas that receive personalized prefixes."""
    C = "C"
    """Few-shot personas that receive personalized prefixes."""


class StrategyKind(Enum):
    """Source-prefix optimization strategy."""

    BASE = "base"
    """Persona-agnostic shuffle of all Part A training dialogues."""
    TEMPERATURE = "temperature"
    """Persona sampling with temperature-scaled mixing."""
    PPREPTILE = "ppreptile"
    """First-order meta-learning restricted to prefix parameters."""


class InitMode(Enum):
    """Initialization of a personalized prefix."""

    SOURCE = "source"
    """Start from the stored source prefix."""
    RANDOM = "random"
    """Start from a freshly sampled prefix."""


class OptimizerRule(Enum):
    """Parameter update rule."""

    SGD = "sgd"
    ADAMW = "adamw"
