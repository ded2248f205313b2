"""
Persona-consistency judges and the C score.

A judge labels an (utterance, persona sentence) pair +1 (entails), 0 (independent) or
-1 (contradicts). ``c_score`` sums the labels over a persona's description sentences.
"""

from __future__ import annotations

import logging
import subprocess
import threading
from collections.abc import Iterable, Mapping, Sequence
from types import TracebackType
from typing import Protocol, Self

import orjson

from personapkt.exceptions import DataError

from .metrics import normalize_tokens

logger = logging.getLogger(__name__)

LABELS = (-1, 0, 1)


class ConsistencyJudge(Protocol):
    """Labels whether an utterance agrees with one persona sentence."""

    def __call__(self, utterance: str, persona_sentence: str) -> int:
        """Return -1, 0 or 1."""
        ...


class KeywordJudge:
    """
    Judge for corpora whose traits are single-word slot values.

    The persona sentence names a slot value; the utterance entails it when it contains
    that value and contradicts it when it contains another value of the same slot.
    """

    def __init__(self, slot_values: Mapping[str, Sequence[str]]) -> None:
        """Index the value vocabulary of every slot."""
        self._slot_of: dict[str, str] = {}
        self._values: dict[str, frozenset[str]] = {}
        for slot, values in slot_values.items():
            lowered = frozenset(v.lower() for v in values)
            self._values[slot] = lowered
            for value in lowered:
                self._slot_of[value] = slot

    def __call__(self, utterance: str, persona_sentence: str) -> int:
        """Label one pair."""
        named = [t for t in normalize_tokens(persona_sentence) if t in self._slot_of]
        if not named:
            return 0
        value = named[-1]
        tokens = set(normalize_tokens(utterance))
        if value in tokens:
            return 1
        if tokens & (self._values[self._slot_of[value]] - {value}):
            return -1
        return 0


class SubprocessJudge:
    """
    Judge backed by an external program.

    The program reads one JSON object ``{"utterance": ..., "persona_sentence": ...}`` per
    line on stdin and answers each with ``{"label": -1|0|1}`` on stdout.
    """

    def __init__(self, command: Sequence[str]) -> None:
        """Remember the command; the process starts on first use or on ``__enter__``."""
        self._command = list(command)
        self._process: subprocess.Popen[bytes] | None = None
        self._lock = threading.Lock()

    def _start(self) -> subprocess.Popen[bytes]:
        if self._process is None:
            logger.info("Starting judge process: %s", " ".join(self._command))
            try:
                self._process = subprocess.Popen(  # noqa: S603
                    self._command, stdin=subprocess.PIPE, stdout=subprocess.PIPE
                )
            except OSError as err:
                raise DataError(f"cannot start judge {self._command[0]!r}: {err}") from err
        return self._process

    def __call__(self, utterance: str, persona_sentence: str) -> int:
        """Send one request and wait for its label."""
        request = orjson.dumps({"utterance": utterance, "persona_sentence": persona_sentence})
        with self._lock:
            process = self._start()
            assert process.stdin is not None
            assert process.stdout is not None
            process.stdin.write(request + b"\n")
            process.stdin.flush()
            line = process.stdout.readline()
        if not line:
            raise DataError(f"judge {self._command[0]!r} closed its output")
        try:
            label = orjson.loads(line)["label"]
        except (orjson.JSONDecodeError, KeyError, TypeError) as err:
            raise DataError(f"judge {self._command[0]!r} sent a malformed reply: {line!r}") from err
        if label not in LABELS:
            raise DataError(f"judge {self._command[0]!r} returned label {label!r}")
        return int(label)

    def close(self) -> None:
        """Close the judge's stdin and wait for it to exit."""
        if self._process is None:
            return
        process, self._process = self._process, None
        if process.stdin is not None:
            process.stdin.close()
        process.wait()

    def __enter__(self) -> Self:
        """Start the judge process."""
        self._start()
        return self

    def __exit__(
        self,
        exc_type: type[BaseException] | None,
        exc: BaseException | None,
        tb: TracebackType | None,
    ) -> None:
        """Stop the judge process."""
        self.close()


def c_score(utterance: str, persona_sentences: Iterable[str], judge: ConsistencyJudge) -> int:
    """Sum of the judge's labels over the persona's description sentences."""
    total = 0
    for sentence in persona_sentences:
        label = judge(utterance, sentence)
        if label not in LABELS:
            raise DataError(f"judge returned label {label!r} for {sentence!r}")
        total += label
    return total
