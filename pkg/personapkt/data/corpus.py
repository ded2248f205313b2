"""
Persona-grouped corpus: loading, saving, part construction and dialogue splits.

Parts follow the few-shot convention: personas with fewer dialogues than the threshold
form Part C, a seeded random subset of the regular personas forms Part B and every other
regular persona goes to Part A. Inside each persona dialogues are split 8:1:1.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from personapkt.exceptions import DataError, NotFoundError
from personapkt.models.corpus import DialogueSplit, Persona, SplitManifest, Turn
from personapkt.models.types import Part

logger = logging.getLogger(__name__)

FEW_SHOT_THRESHOLD = 6
SPLIT_RATIO = (8, 1, 1)


@dataclass
class PersonaDataset:
    """Personas with their optional part assignment and dialogue splits."""

    personas: list[Persona]
    parts: dict[str, Part] = field(default_factory=dict)
    splits: dict[str, DialogueSplit] = field(default_factory=dict)

    def __post_init__(self) -> None:
        """Index personas by id and reject duplicates."""
        self._by_id: dict[str, Persona] = {}
        for persona in self.personas:
            if persona.persona_id in self._by_id:
                raise DataError(f"duplicate persona_id {persona.persona_id!r}")
            self._by_id[persona.persona_id] = persona

    def __len__(self) -> int:
        """Number of personas."""
        return len(self.personas)

    def __iter__(self) -> Iterator[Persona]:
        """Iterate personas in corpus order."""
        return iter(self.personas)

    def persona(self, persona_id: str) -> Persona:
        """Look up one persona."""
        try:
            return self._by_id[persona_id]
        except KeyError:
            raise NotFoundError(f"unknown persona {persona_id!r}") from None

    def split(self, persona_id: str) -> DialogueSplit:
        """Return the split of one persona."""
        try:
            return self.splits[persona_id]
        except KeyError:
            raise NotFoundError(f"persona {persona_id!r} has no split") from None

    def members(self, part: Part) -> list[Persona]:
        """Personas assigned to ``part``, in corpus order."""
        return [p for p in self.personas if self.parts.get(p.persona_id) is part]

    def with_manifest(self, manifest: SplitManifest) -> PersonaDataset:
        """Attach a split manifest, checking that it describes this corpus."""
        for persona_id, split in manifest.splits.items():
            persona = self.persona(persona_id)
            if sorted(split.all_indices()) != list(range(persona.n_dialogues)):
                raise DataError(
                    f"split of {persona_id!r} does not partition its "
                    f"{persona.n_dialogues} dialogues"
                )
        unknown = sorted(set(manifest.part) - set(self._by_id))
        if unknown:
            raise DataError(f"manifest names unknown personas: {', '.join(unknown[:5])}")
        return PersonaDataset(list(self.personas), dict(manifest.part), dict(manifest.splits))


def load_corpus(path: Path) -> PersonaDataset:
    """
    Read a corpus JSONL file.

    Raises:
        DataError: With the 1-based line number for malformed lines or
            non-alternating speakers.
    """
    personas: list[Persona] = []
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise NotFoundError(f"corpus file not found: {path}") from None
    for number, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            personas.append(Persona.from_json(line))
        except (LookupError, ValueError, TypeError) as err:
            raise DataError(f"{path}:{number}: invalid persona line: {err}") from err
    logger.debug("Loaded %d personas from %s", len(personas), path)
    return PersonaDataset(personas)


def save_corpus(dataset: PersonaDataset | Iterable[Persona], path: Path) -> None:
    """Write one persona per line."""
    personas = dataset.personas if isinstance(dataset, PersonaDataset) else list(dataset)
    with path.open("wb") as fh:
        for persona in personas:
            fh.write(persona.to_jsonb())
            fh.write(b"\n")


def load_manifest(path: Path) -> SplitManifest:
    """Read a split manifest."""
    try:
        return SplitManifest.from_json(path.read_bytes())
    except FileNotFoundError:
        raise NotFoundError(f"split manifest not found: {path}") from None
    except (LookupError, ValueError, TypeError) as err:
        raise DataError(f"{path}: invalid split manifest: {err}") from err


def save_manifest(manifest: SplitManifest, path: Path) -> None:
    """Write a split manifest."""
    path.write_bytes(manifest.to_jsonb())


def partition_personas(
    dataset: PersonaDataset,
    few_shot_threshold: int = FEW_SHOT_THRESHOLD,
    n_source: int | None = None,
    n_regular_target: int = 0,
    seed: int = 0,
) -> dict[str, Part]:
    """
    Assign every persona to Part A, B or C.

    Args:
        dataset: Personas to partition.
        few_shot_threshold: Personas with fewer dialogues than this go to Part C.
        n_source: Minimum number of Part A personas required (None for no minimum).
        n_regular_target: Number of regular personas drawn for Part B.
        seed: Seed for the Part B draw.

    Returns:
        Mapping of persona id to part, covering all personas.
    """
    few_shot = [p for p in dataset if p.n_dialogues < few_shot_threshold]
    regular = [p for p in dataset if p.n_dialogues >= few_shot_threshold]
    needed = n_regular_target + (n_source or 0)
    if len(regular) < needed or n_regular_target < 0:
        raise DataError(
            f"need {needed} regular personas ({n_source or 0} source + {n_regular_target} target), "
            f"corpus has {len(regular)} regular and {len(few_shot)} few-shot"
        )
    rng = np.random.default_rng(seed)
    chosen: set[int] = set()
    if n_regular_target:
        chosen = set(rng.choice(len(regular), size=n_regular_target, replace=False).tolist())
    parts: dict[str, Part] = {}
    for index, persona in enumerate(regular):
        parts[persona.persona_id] = Part.B if index in chosen else Part.A
    for persona in few_shot:
        parts[persona.persona_id] = Part.C
    logger.info(
        "Partitioned %d personas: A=%d B=%d C=%d",
        len(dataset),
        len(regular) - n_regular_target,
        n_regular_target,
        len(few_shot),
    )
    return {p.persona_id: parts[p.persona_id] for p in dataset}


def split_counts(d: int, ratio: Sequence[int] = SPLIT_RATIO) -> tuple[int, int, int]:
    """
    Train/valid/test counts for ``d`` dialogues.

    Shares are floored; leftovers go to test, then valid, while either is empty and
    ``d >= 3``, the rest to train. When ``d >= 3`` valid and test end up with at least one
    dialogue each, taken from train if needed.
    """
    total = sum(ratio)
    train, valid, test = (d * r // total for r in ratio)
    left = d - train - valid - test
    if d >= 3:
        if test == 0 and left:
            test, left = 1, left - 1
        if valid == 0 and left:
            valid, left = 1, left - 1
    train += left
    if d >= 3:
        if test == 0:
            test, train = 1, train - 1
        if valid == 0:
            valid, train = 1, train - 1
    return train, valid, test


def split_dialogues(
    persona: Persona | int, ratio: Sequence[int] = SPLIT_RATIO, seed: int = 0
) -> DialogueSplit:
    """Randomly split a persona's dialogue indices into train/valid/test."""
    d = persona if isinstance(persona, int) else persona.n_dialogues
    n_train, n_valid, _ = split_counts(d, ratio)
    order = np.random.default_rng(seed).permutation(d).tolist()
    split = DialogueSplit(
        train=sorted(order[:n_train]),
        valid=sorted(order[n_train : n_train + n_valid]),
        test=sorted(order[n_train + n_valid :]),
    )
    if split.degenerate:
        name = d if isinstance(persona, int) else persona.persona_id
        logger.warning("Degenerate split for %s: %s", name, _counts(split))
    return split


def _counts(split: DialogueSplit) -> str:
    return f"{len(split.train)}/{len(split.valid)}/{len(split.test)}"


def build_manifest(
    dataset: PersonaDataset,
    *,
    few_shot_threshold: int = FEW_SHOT_THRESHOLD,
    n_source: int | None = None,
    n_regular_target: int = 0,
    seed: int = 0,
) -> SplitManifest:
    """Partition personas and split every persona's dialogues."""
    parts = partition_personas(dataset, few_shot_threshold, n_source, n_regular_target, seed)
    splits = {
        p.persona_id: split_dialogues(p, seed=_persona_seed(seed, index))
        for index, p in enumerate(dataset)
        if p.n_dialogues > 0
    }
    parts = {pid: part for pid, part in parts.items() if pid in splits}
    return SplitManifest(
        part=parts, splits=splits, seed=seed, few_shot_threshold=few_shot_threshold
    )


def _persona_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


@dataclass(frozen=True)
class PartStatistics:
    """Persona and dialogue counts of one part."""

    part: Part
    personas: int
    train: int
    valid: int
    test: int


def dataset_statistics(dataset: PersonaDataset) -> list[PartStatistics]:
    """Per-part persona counts and train/valid/test dialogue counts."""
    rows = []
    for part in Part:
        members = dataset.members(part)
        splits = [dataset.split(p.persona_id) for p in members]
        rows.append(
            PartStatistics(
                part=part,
                personas=len(members),
                train=sum(len(s.train) for s in splits),
                valid=sum(len(s.valid) for s in splits),
                test=sum(len(s.test) for s in splits),
            )
        )
    return rows


def responses(dialogue: Sequence[Turn]) -> Iterator[tuple[list[Turn], Turn]]:
    """Yield ``(history, response)`` for every speaker-2 turn after the first turn."""
    for position in range(1, len(dialogue)):
        if dialogue[position].speaker == 2:
            yield list(dialogue[:position]), dialogue[position]
