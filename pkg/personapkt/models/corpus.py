"""
Corpus models: personas with their dialogues, and the split manifest.

The corpus file is JSON lines with one ``Persona`` per line; the split manifest records
the part of every persona and its train/valid/test dialogue indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from mashumaro.mixins.orjson import DataClassORJSONMixin

from .types import Part


@dataclass(frozen=True)
class Turn(DataClassORJSONMixin):
    """One utterance of a dialogue."""

    speaker: int
    """1 for the partner, 2 for the persona-bearing agent."""
    text: str

    def __post_init__(self) -> None:
        """Validate field values."""
        if self.speaker not in (1, 2):
            raise ValueError(f"speaker must be 1 or 2, got {self.speaker}")


@dataclass(frozen=True)
class Persona(DataClassORJSONMixin):
    """A speaker identity with its description sentences and dialogues."""

    persona_id: str
    description: list[str] = field(default_factory=list)
    """Description sentences; never used as model input."""
    dialogues: list[list[Turn]] = field(default_factory=list)

    def __post_init__(self) -> None:
        """Enforce dialogue shape: at least two turns with alternating speakers."""
        if not self.persona_id:
            raise ValueError("persona_id must be non-empty")
        for index, dialogue in enumerate(self.dialogues):
            if len(dialogue) < 2:
                raise ValueError(
                    f"dialogue {index} of {self.persona_id} has {len(dialogue)} turn(s), need >= 2"
                )
            for position in range(1, len(dialogue)):
                if dialogue[position].speaker == dialogue[position - 1].speaker:
                    raise ValueError(
                        f"dialogue {index} of {self.persona_id}: speakers do not alternate "
                        f"at turn {position}"
                    )

    @property
    def n_dialogues(self) -> int:
        """Number of dialogues."""
        return len(self.dialogues)


@dataclass(frozen=True)
class DialogueSplit(DataClassORJSONMixin):
    """Train/valid/test dialogue indices of one persona."""

    train: list[int]
    valid: list[int]
    test: list[int]

    @property
    def degenerate(self) -> bool:
        """True when valid or test received no dialogue."""
        return not self.valid or not self.test

    def all_indices(self) -> list[int]:
        """Every index, in split order."""
        return [*self.train, *self.valid, *self.test]


@dataclass(frozen=True)
class SplitManifest(DataClassORJSONMixin):
    """Part assignment and per-persona splits of a corpus."""

    part: dict[str, Part]
    splits: dict[str, DialogueSplit]
    seed: int
    few_shot_threshold: int

    def __post_init__(self) -> None:
        """Validate that every persona with a part has a split."""
        missing = sorted(set(self.part) - set(self.splits))
        if missing:
            raise ValueError(f"personas without splits: {', '.join(missing[:5])}")
