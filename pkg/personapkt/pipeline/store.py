"""
Directory of stored prefixes for one backbone.

Every key owns up to four files: ``<key>.pktp`` (deployed activations), ``<key>.reparam``
(training state), ``<key>.json`` (``PrefixMetadata`` sidecar) and ``<key>.log.jsonl``
(one ``EpochLog`` per line). The key ``source`` is reserved for the source prefix; every
other key is a persona id.
"""

from __future__ import annotations

import dataclasses
import logging
import re
import threading
from collections.abc import Iterable, Mapping
from pathlib import Path
from typing import Any

from personapkt.backbone import PrefixParams
from personapkt.backbone.checkpoint import (
    decode_prefix,
    decode_reparam,
    encode_prefix,
    encode_reparam,
    write_bytes_atomic,
)
from personapkt.exceptions import DataError, NotFoundError, UsageError
from personapkt.models.report import EpochLog, PrefixMetadata

from .objective import TrainedPrefix

logger = logging.getLogger(__name__)

SOURCE_KEY = "source"

_KEY_PATTERN = re.compile(r"[A-Za-z0-9._-]+")


class PrefixStore:
    """
    Prefixes keyed by persona id, all bound to one backbone digest.

    Writes to the same key are serialized; each write bumps the key's ``revision`` so the
    latest writer is visible in the sidecar. Distinct keys can be written concurrently.
    """

    def __init__(self, root: Path, backbone_digest: bytes) -> None:
        """Open (and create if needed) the store directory."""
        self._root = root
        self._digest = backbone_digest
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        root.mkdir(parents=True, exist_ok=True)

    @property
    def root(self) -> Path:
        """Store directory."""
        return self._root

    @property
    def backbone_digest(self) -> bytes:
        """Digest every stored prefix must carry."""
        return self._digest

    def _lock(self, key: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(key, threading.Lock())

    def _path(self, key: str, suffix: str) -> Path:
        if not _KEY_PATTERN.fullmatch(key) or key.startswith("."):
            raise UsageError(f"invalid store key {key!r}")
        return self._root / f"{key}{suffix}"

    def __contains__(self, key: object) -> bool:
        """Whether a prefix is stored under ``key``."""
        return isinstance(key, str) and self._path(key, ".pktp").is_file()

    def keys(self) -> list[str]:
        """Stored keys in sorted order."""
        return sorted(p.name.removesuffix(".pktp") for p in self._root.glob("*.pktp"))

    def store(
        self,
        key: str,
        prefix: PrefixParams,
        metadata: PrefixMetadata,
        history: Iterable[EpochLog] = (),
    ) -> PrefixMetadata:
        """
        Write ``prefix`` under ``key``, replacing any earlier entry.

        Returns:
            The sidecar as written, with the backbone digest and revision filled in.

        Raises:
            DataError: If the prefix belongs to another backbone.
        """
        if prefix.backbone_digest != self._digest:
            raise DataError(
                f"prefix for {key!r} was trained on backbone {prefix.backbone_digest.hex()[:12]}, "
                f"store holds backbone {self._digest.hex()[:12]}"
            )
        with self._lock(key):
            revision = 0
            if key in self:
                revision = self.metadata(key).revision + 1
            written = dataclasses.replace(
                metadata, backbone_digest=self._digest.hex(), revision=revision
            )
            write_bytes_atomic(self._path(key, ".pktp"), encode_prefix(prefix))
            reparam_path = self._path(key, ".reparam")
            if prefix.reparam is not None:
                write_bytes_atomic(reparam_path, encode_reparam(prefix.reparam))
            else:
                reparam_path.unlink(missing_ok=True)
            log = b"".join(entry.to_jsonb() + b"\n" for entry in history)
            write_bytes_atomic(self._path(key, ".log.jsonl"), log)
            write_bytes_atomic(self._path(key, ".json"), written.to_jsonb())
        logger.debug("Stored prefix %s revision %d", key, revision)
        return written

    def load(self, key: str, *, with_reparam: bool = True) -> PrefixParams:
        """
        Read the prefix stored under ``key``.

        The deployed floats come from the prefix file unchanged; the training state is
        attached when present and ``with_reparam`` is set.

        Raises:
            NotFoundError: If nothing is stored under ``key``.
            DataError: If the file is malformed or belongs to another backbone.
        """
        path = self._path(key, ".pktp")
        with self._lock(key):
            try:
                data = path.read_bytes()
            except FileNotFoundError:
                raise NotFoundError(f"no prefix stored under {key!r} in {self._root}") from None
            prefix = decode_prefix(data, path)
            reparam_path = self._path(key, ".reparam")
            reparam = None
            if with_reparam and reparam_path.is_file():
                reparam = decode_reparam(reparam_path.read_bytes(), reparam_path)
        if prefix.backbone_digest != self._digest:
            owner = prefix.backbone_digest.hex()[:12]
            raise DataError(f"{path}: prefix belongs to backbone {owner}")
        return PrefixParams(prefix.deployed, reparam, prefix.backbone_digest)

    def metadata(self, key: str) -> PrefixMetadata:
        """Sidecar of ``key``."""
        path = self._path(key, ".json")
        try:
            return PrefixMetadata.from_json(path.read_bytes())
        except FileNotFoundError:
            raise NotFoundError(f"no metadata stored under {key!r} in {self._root}") from None

    def history(self, key: str) -> list[EpochLog]:
        """Training log of ``key``."""
        path = self._path(key, ".log.jsonl")
        try:
            lines = path.read_bytes().splitlines()
        except FileNotFoundError:
            raise NotFoundError(f"no training log stored under {key!r}") from None
        return [EpochLog.from_json(line) for line in lines if line.strip()]

    def total_deployed(self) -> int:
        """Deployed floats over every stored prefix."""
        total = 0
        for key in self.keys():
            path = self._path(key, ".pktp")
            total += decode_prefix(path.read_bytes(), path).deployed_count
        return total


def store_prefix(
    store: PrefixStore,
    key: str,
    prefix: PrefixParams,
    metadata: PrefixMetadata,
    history: Iterable[EpochLog] = (),
) -> PrefixMetadata:
    """Write ``prefix`` into ``store``; see ``PrefixStore.store``."""
    return store.store(key, prefix, metadata, history)


def load_prefix(store: PrefixStore, key: str) -> PrefixParams:
    """Read a prefix from ``store``; see ``PrefixStore.load``."""
    return store.load(key)


def training_metadata(
    strategy: str,
    backbone_params: int,
    trained: TrainedPrefix,
    config: Mapping[str, Any],
    seed: int,
) -> PrefixMetadata:
    """
    Sidecar of a finished training run.

    Metrics hold the best validation loss (when one was computed), the deployed float
    count and its ratio to the backbone size.
    """
    deployed = trained.prefix.deployed_count
    metrics = {"deployed": float(deployed), "ratio": deployed / backbone_params}
    valid = [e.valid_loss for e in trained.history if e.valid_loss is not None]
    if valid:
        metrics["best_valid_loss"] = min(valid)
    logger.info(
        "%s prefix: %d deployed floats, %.4f%% of the backbone",
        strategy,
        deployed,
        100 * metrics["ratio"],
    )
    return PrefixMetadata(
        strategy=strategy, backbone_digest="", config=dict(config), seed=seed, metrics=metrics
    )
