"""
Convert PERSONA-CHAT ``*_self_original.txt`` files into the corpus JSONL schema.

Each episode starts at line number 1 with ``your persona:`` lines followed by numbered
``partner<TAB>response<TAB><TAB>candidates`` lines. The responding agent is speaker 2.
Episodes are grouped into personas by exact equality of their description-sentence sets.
"""

from __future__ import annotations

import logging
import re
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path

from personapkt.exceptions import DataError, NotFoundError
from personapkt.models.corpus import Persona, Turn

from .corpus import PersonaDataset

logger = logging.getLogger(__name__)

_LINE = re.compile(r"^(\d+) (.*)$")
_PERSONA_PREFIX = "your persona:"


@dataclass
class _Episode:
    description: list[str] = field(default_factory=list)
    turns: list[Turn] = field(default_factory=list)


def _episodes(lines: Iterable[str], source: str) -> list[_Episode]:
    episodes: list[_Episode] = []
    current: _Episode | None = None
    for number, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        match = _LINE.match(line)
        if match is None:
            raise DataError(f"{source}:{number}: expected a numbered line")
        index, body = int(match.group(1)), match.group(2)
        if index == 1 or current is None:
            current = _Episode()
            episodes.append(current)
        if body.startswith(_PERSONA_PREFIX):
            current.description.append(body[len(_PERSONA_PREFIX) :].strip())
            continue
        fields = body.split("\t")
        if len(fields) < 2:
            raise DataError(f"{source}:{number}: expected partner and response separated by a tab")
        current.turns.append(Turn(1, fields[0].strip()))
        current.turns.append(Turn(2, fields[1].strip()))
    return episodes


def convert_personachat(paths: Iterable[Path]) -> PersonaDataset:
    """Group the episodes of all ``paths`` by persona description."""
    grouped: dict[frozenset[str], tuple[list[str], list[list[Turn]]]] = {}
    for path in paths:
        try:
            text = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise NotFoundError(f"PERSONA-CHAT file not found: {path}") from None
        for episode in _episodes(text.splitlines(), str(path)):
            if len(episode.turns) < 2:
                continue
            key = frozenset(episode.description)
            description, dialogues = grouped.setdefault(key, (episode.description, []))
            dialogues.append(episode.turns)
    personas = [
        Persona(persona_id=f"pc-{index:05d}", description=description, dialogues=dialogues)
        for index, (description, dialogues) in enumerate(grouped.values())
    ]
    logger.info("Converted %d PERSONA-CHAT personas", len(personas))
    return PersonaDataset(personas)
