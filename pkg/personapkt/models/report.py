"""Training logs, prefix metadata and evaluation reports."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from mashumaro.config import BaseConfig
from mashumaro.mixins.orjson import DataClassORJSONMixin

from .types import Part


@dataclass(frozen=True)
class EpochLog(DataClassORJSONMixin):
    """One line of a training-log file."""

    epoch: int
    train_loss: float | None
    """Mean training loss; None when no step was taken."""
    valid_loss: float | None
    lr: float


@dataclass(frozen=True)
class PrefixMetadata(DataClassORJSONMixin):
    """JSON sidecar stored next to every prefix file."""

    strategy: str
    """Source strategy, or ``personalized/<init>`` for personalized prefixes."""
    backbone_digest: str
    """Hex digest of the backbone the prefix was trained on."""
    config: dict[str, Any]
    seed: int
    metrics: dict[str, float]
    revision: int = 0
    """Per-key write counter; the highest revision is the live one."""


@dataclass(frozen=True)
class EvalMetrics(DataClassORJSONMixin):
    """Mean metrics over the evaluated responses; None when nothing was evaluated."""

    f1_1: float | None
    f1_2: float | None
    f1_lcs: float | None
    c_mean: float | None


@dataclass(frozen=True)
class ParamsReport(DataClassORJSONMixin):
    """Trainable-parameter accounting."""

    deployed: int
    """Deployed floats per persona (the whole backbone for full-model settings)."""
    backbone: int
    ratio: float
    """deployed / backbone."""
    store_total: int | None = None
    """Deployed floats for N personas plus the source prefix."""

    class Config(BaseConfig):
        """Config for serializing."""

        omit_none = True


@dataclass(frozen=True)
class EvalReport(DataClassORJSONMixin):
    """Automatic evaluation of one setting on one part."""

    setting: str
    part: Part
    metrics: EvalMetrics
    params: ParamsReport
    samples: int
    skipped_personas: int
    f1_aggregation: str = "sentence-mean"
    seed: int | None = None

    def __post_init__(self) -> None:
        """Validate field values."""
        if self.samples < 0 or self.skipped_personas < 0:
            raise ValueError("sample and skip counts must be non-negative")
        for name in ("f1_1", "f1_2", "f1_lcs"):
            value = getattr(self.metrics, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
