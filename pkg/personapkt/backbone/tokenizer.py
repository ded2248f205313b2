"""Whitespace word-level tokenizer with speaker markers."""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import orjson

from personapkt.exceptions import DataError
from personapkt.models.corpus import Turn

PAD = "<pad>"
UNK = "<unk>"
BOS = "<bos>"
EOU = "<eou>"
SPEAKER_1 = "<p1>"
SPEAKER_2 = "<p2>"
SPECIAL_TOKENS = (PAD, UNK, BOS, EOU, SPEAKER_1, SPEAKER_2)


@dataclass(frozen=True)
class DialogueSample:
    """A language-modeling example: the model reads ``context`` and predicts ``target``."""

    context: tuple[int, ...]
    target: tuple[int, ...]

    @property
    def input_ids(self) -> tuple[int, ...]:
        """Tokens fed to the model (the last target token is never an input)."""
        return self.context + self.target[:-1]

    @property
    def target_positions(self) -> list[int]:
        """Positions whose next-token distribution is scored against ``target``."""
        start = len(self.context) - 1
        return list(range(start, start + len(self.target)))


class Tokenizer:
    """Maps whitespace-delimited words to ids; unknown words map to ``<unk>``."""

    def __init__(self, words: Iterable[str]) -> None:
        """Build from a word list; special tokens are always placed first."""
        vocab = list(SPECIAL_TOKENS)
        seen = set(vocab)
        for word in words:
            if word not in seen:
                seen.add(word)
                vocab.append(word)
        self._vocab = vocab
        self._ids = {word: index for index, word in enumerate(vocab)}

    @classmethod
    def build(cls, texts: Iterable[str]) -> Tokenizer:
        """Vocabulary of every word in ``texts``, sorted for reproducibility."""
        words: set[str] = set()
        for text in texts:
            words.update(text.split())
        return cls(sorted(words - set(SPECIAL_TOKENS)))

    @classmethod
    def from_json(cls, data: bytes) -> Tokenizer:
        """Load from the JSON vocabulary list written by ``to_json``."""
        vocab = orjson.loads(data)
        if not isinstance(vocab, list) or tuple(vocab[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise DataError("vocabulary must be a JSON list starting with the special tokens")
        return cls(vocab[len(SPECIAL_TOKENS) :])

    def to_json(self) -> bytes:
        """UTF-8 JSON list of the vocabulary in id order."""
        return orjson.dumps(self._vocab)

    @property
    def vocab(self) -> list[str]:
        """Words in id order."""
        return list(self._vocab)

    def __len__(self) -> int:
        """Vocabulary size."""
        return len(self._vocab)

    def id(self, word: str) -> int:
        """Id of ``word`` (``<unk>`` when absent)."""
        return self._ids.get(word, self._ids[UNK])

    @property
    def special_ids(self) -> frozenset[int]:
        """Ids of all special tokens."""
        return frozenset(self._ids[t] for t in SPECIAL_TOKENS)

    def encode(self, text: str) -> list[int]:
        """Token ids of the whitespace-separated words of ``text``."""
        return [self.id(word) for word in text.split()]

    def decode(self, ids: Sequence[int], *, skip_special: bool = False) -> str:
        """Join the words of ``ids`` with single spaces."""
        words = [self._vocab[i] for i in ids]
        if skip_special:
            words = [w for w in words if w not in SPECIAL_TOKENS]
        return " ".join(words)

    def encode_history(self, history: Sequence[Turn]) -> list[int]:
        """``<bos>`` then every turn as ``<pK> words <eou>``, then the ``<p2>`` prompt."""
        ids = [self._ids[BOS]]
        for turn in history:
            ids.extend(self.encode_turn(turn))
        ids.append(self._ids[SPEAKER_2])
        return ids

    def encode_turn(self, turn: Turn) -> list[int]:
        """One turn with its speaker marker and end-of-utterance token."""
        marker = SPEAKER_1 if turn.speaker == 1 else SPEAKER_2
        return [self._ids[marker], *self.encode(turn.text), self._ids[EOU]]

    def response_sample(
        self, history: Sequence[Turn], response: Turn, budget: int
    ) -> DialogueSample:
        """
        Sample predicting ``response`` after ``history``.

        ``budget`` is the number of input positions available; the context is truncated
        from the left (and the target from the right) to fit.
        """
        context = self.encode_history(history)
        target = [*self.encode(response.text), self._ids[EOU]]
        return truncate(context, target, budget)

    def dialogue_sample(self, dialogue: Sequence[Turn], budget: int) -> DialogueSample:
        """Whole-dialogue sample for pretraining: context ``<bos>``, every turn as target."""
        target: list[int] = []
        for turn in dialogue:
            target.extend(self.encode_turn(turn))
        return truncate([self._ids[BOS]], target, budget)


def truncate(context: Sequence[int], target: Sequence[int], budget: int) -> DialogueSample:
    """Fit ``len(context) + len(target) - 1`` into ``budget`` positions."""
    if budget < 1:
        raise DataError(f"no input positions left (budget {budget})")
    if not context or not target:
        raise DataError("a sample needs a non-empty context and target")
    target = list(target[:budget])
    keep = max(1, budget - len(target) + 1)
    return DialogueSample(tuple(context[-keep:]), tuple(target))
