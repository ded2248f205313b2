"""
Binary checkpoint formats.

Backbone (``PKTB``): magic, u32 version, six u32 config fields (vocab_size, d_model,
n_layers, n_heads, d_ffn, max_context), 32-byte digest, then every weight as little-endian
float64 in ``weight_specs`` order. The vocabulary is stored next to it as
``<path>.vocab.json``.

Prefix (``PKTP``): magic, u32 version, 32-byte backbone digest, u32 n_layers, L and d_model,
then the deployed activations as little-endian float64 ordered [layer][k, v][position][dim].

Reparametrization state (``PKTR``): magic, u32 version, u32 array count, then per array in
``REPARAM_KEYS`` order its u32 rank, u32 dims and little-endian float64 values.

All integers are little-endian; files are written to a temporary sibling and renamed.
"""

from __future__ import annotations

import logging
import os
import struct
from collections.abc import Mapping
from pathlib import Path

import numpy as np

from personapkt.compute import FloatArray
from personapkt.exceptions import DataError, NotFoundError

from .prefix import REPARAM_KEYS, PrefixParams
from .tokenizer import Tokenizer
from .transformer import BackboneModel, pack_config, unpack_config, weight_bytes, weight_specs

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
DIGEST_SIZE = 32
BACKBONE_MAGIC = b"PKTB"
PREFIX_MAGIC = b"PKTP"
REPARAM_MAGIC = b"PKTR"

_U32 = struct.Struct("<I")
_PREFIX_DIMS = struct.Struct("<3I")
_BACKBONE_HEADER = 4 + _U32.size + 24 + DIGEST_SIZE
PREFIX_HEADER_SIZE = 4 + _U32.size + DIGEST_SIZE + _PREFIX_DIMS.size


def vocab_path(path: Path) -> Path:
    """Location of the vocabulary written next to a backbone checkpoint."""
    return path.with_name(path.name + ".vocab.json")


def write_bytes_atomic(path: Path, data: bytes) -> None:
    """Write ``data`` through a temporary sibling file."""
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _read(path: Path, what: str) -> bytes:
    try:
        return path.read_bytes()
    except FileNotFoundError:
        raise NotFoundError(f"{what} not found: {path}") from None


def _check_magic(data: bytes, magic: bytes, path: Path) -> None:
    if data[:4] != magic:
        raise DataError(f"{path}: not a {magic.decode()} file (magic {data[:4]!r})")
    if len(data) < 8:
        raise DataError(f"{path}: truncated header")
    (version,) = _U32.unpack_from(data, 4)
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format version {version}")


def _floats(data: bytes, offset: int, count: int, path: Path) -> FloatArray:
    end = offset + 8 * count
    if len(data) < end:
        raise DataError(f"{path}: expected {count} floats, file is truncated")
    return np.frombuffer(data, dtype="<f8", count=count, offset=offset).astype(np.float64)


def save_backbone(model: BackboneModel, path: Path) -> None:
    """Write the checkpoint and its vocabulary."""
    header = BACKBONE_MAGIC + _U32.pack(FORMAT_VERSION) + pack_config(model.config) + model.digest
    write_bytes_atomic(path, header + weight_bytes(model.config, model.weights))
    write_bytes_atomic(vocab_path(path), model.tokenizer.to_json())
    logger.info(
        "Saved backbone %s (%d floats) to %s", model.digest.hex()[:12], model.param_count, path
    )


def load_backbone(path: Path) -> BackboneModel:
    """
    Read a checkpoint written by ``save_backbone``.

    Raises:
        NotFoundError: If the checkpoint or its vocabulary is missing.
        DataError: On a bad header, wrong size or a digest that does not match the content.
    """
    data = _read(path, "backbone checkpoint")
    _check_magic(data, BACKBONE_MAGIC, path)
    if len(data) < _BACKBONE_HEADER:
        raise DataError(f"{path}: truncated header")
    try:
        config = unpack_config(data[8:32])
    except ValueError as err:
        raise DataError(f"{path}: invalid config header: {err}") from err
    stored_digest = data[32 : 32 + DIGEST_SIZE]
    tokenizer = Tokenizer.from_json(_read(vocab_path(path), "backbone vocabulary"))
    offset = _BACKBONE_HEADER
    weights: dict[str, FloatArray] = {}
    for name, shape in weight_specs(config):
        count = int(np.prod(shape))
        weights[name] = _floats(data, offset, count, path).reshape(shape)
        offset += 8 * count
    if offset != len(data):
        raise DataError(f"{path}: {len(data) - offset} trailing bytes after the weights")
    model = BackboneModel(config, weights, tokenizer)
    if model.digest != stored_digest:
        raise DataError(f"{path}: digest mismatch; checkpoint or vocabulary was modified")
    return model


def encode_prefix(prefix: PrefixParams) -> bytes:
    """Serialize the deployed activations of ``prefix``."""
    if len(prefix.backbone_digest) != DIGEST_SIZE:
        raise DataError("prefix carries no backbone digest; it cannot be serialized")
    dims = _PREFIX_DIMS.pack(prefix.n_layers, prefix.prefix_len, prefix.d_model)
    body = np.ascontiguousarray(prefix.deployed, dtype="<f8").tobytes()
    return PREFIX_MAGIC + _U32.pack(FORMAT_VERSION) + prefix.backbone_digest + dims + body


def decode_prefix(data: bytes, path: Path) -> PrefixParams:
    """Parse a prefix file; the result carries no reparametrization state."""
    _check_magic(data, PREFIX_MAGIC, path)
    if len(data) < PREFIX_HEADER_SIZE:
        raise DataError(f"{path}: truncated header")
    digest = data[8 : 8 + DIGEST_SIZE]
    n_layers, prefix_len, d_model = _PREFIX_DIMS.unpack_from(data, 8 + DIGEST_SIZE)
    count = 2 * n_layers * prefix_len * d_model
    if len(data) != PREFIX_HEADER_SIZE + 8 * count:
        raise DataError(
            f"{path}: {len(data) - PREFIX_HEADER_SIZE} payload bytes for {count} floats"
        )
    deployed = _floats(data, PREFIX_HEADER_SIZE, count, path)
    deployed = deployed.reshape(n_layers, 2, prefix_len, d_model)
    return PrefixParams(deployed, None, digest)


def encode_reparam(reparam: Mapping[str, FloatArray]) -> bytes:
    """Serialize a reparametrization state."""
    parts = [REPARAM_MAGIC, _U32.pack(FORMAT_VERSION), _U32.pack(len(REPARAM_KEYS))]
    for key in REPARAM_KEYS:
        array = np.ascontiguousarray(reparam[key], dtype="<f8")
        parts.append(_U32.pack(array.ndim))
        parts.extend(_U32.pack(dim) for dim in array.shape)
        parts.append(array.tobytes())
    return b"".join(parts)


def decode_reparam(data: bytes, path: Path) -> dict[str, FloatArray]:
    """Parse a reparametrization state written by ``encode_reparam``."""
    _check_magic(data, REPARAM_MAGIC, path)
    try:
        (count,) = _U32.unpack_from(data, 8)
        if count != len(REPARAM_KEYS):
            raise DataError(f"{path}: expected {len(REPARAM_KEYS)} arrays, found {count}")
        offset = 12
        state: dict[str, FloatArray] = {}
        for key in REPARAM_KEYS:
            (ndim,) = _U32.unpack_from(data, offset)
            shape = struct.unpack_from(f"<{ndim}I", data, offset + 4)
            offset += 4 + 4 * ndim
            size = int(np.prod(shape))
            state[key] = _floats(data, offset, size, path).reshape(shape)
            offset += 8 * size
    except struct.error as err:
        raise DataError(f"{path}: truncated reparametrization state") from err
    if offset != len(data):
        raise DataError(f"{path}: {len(data) - offset} trailing bytes")
    return state
