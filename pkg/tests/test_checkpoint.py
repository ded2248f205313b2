from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from personapkt.backbone import BackboneModel, PrefixParams, load_backbone, save_backbone
from personapkt.backbone.checkpoint import (
    PREFIX_HEADER_SIZE,
    decode_prefix,
    decode_reparam,
    encode_prefix,
    encode_reparam,
    vocab_path,
    write_bytes_atomic,
)
from personapkt.exceptions import DataError, NotFoundError
from personapkt.models.config import PrefixConfig


def test_backbone_checkpoint_preserves_digest(tmp_path: Path, backbone: BackboneModel) -> None:
    path = tmp_path / "backbone.pktb"
    save_backbone(backbone, path)

    loaded = load_backbone(path)

    assert vocab_path(path).exists()
    assert loaded.digest == backbone.digest
    assert loaded.config == backbone.config
    for name, weight in backbone.weights.items():
        np.testing.assert_array_equal(loaded.weights[name], weight)


def test_tampered_backbone_is_rejected(tmp_path: Path, backbone: BackboneModel) -> None:
    path = tmp_path / "backbone.pktb"
    save_backbone(backbone, path)
    data = bytearray(path.read_bytes())
    data[-1] ^= 0x01
    path.write_bytes(bytes(data))
    with pytest.raises(DataError, match="digest mismatch"):
        load_backbone(path)


def test_backbone_file_errors(tmp_path: Path, backbone: BackboneModel) -> None:
    with pytest.raises(NotFoundError, match="backbone checkpoint not found"):
        load_backbone(tmp_path / "missing.pktb")

    path = tmp_path / "backbone.pktb"
    save_backbone(backbone, path)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(DataError, match="truncated"):
        load_backbone(path)

    path.write_bytes(b"NOPE" + bytes(100))
    with pytest.raises(DataError, match="not a PKTB file"):
        load_backbone(path)

    save_backbone(backbone, path)
    vocab_path(path).unlink()
    with pytest.raises(NotFoundError, match="vocabulary"):
        load_backbone(path)


def test_prefix_file_layout(backbone: BackboneModel, prefix_config: PrefixConfig) -> None:
    prefix = PrefixParams.random(
        backbone.config, prefix_config, seed=0, backbone_digest=backbone.digest
    )
    data = encode_prefix(prefix)

    assert data[:4] == b"PKTP"
    assert data[8:40] == backbone.digest
    assert len(data) == PREFIX_HEADER_SIZE + 8 * prefix.deployed_count

    decoded = decode_prefix(data, Path("p.pktp"))
    np.testing.assert_array_equal(decoded.deployed, prefix.deployed)
    assert decoded.backbone_digest == backbone.digest
    assert decoded.reparam is None


def test_prefix_needs_digest_and_exact_size(
    backbone: BackboneModel, prefix_config: PrefixConfig
) -> None:
    anonymous = PrefixParams.random(backbone.config, prefix_config, seed=0)
    with pytest.raises(DataError, match="no backbone digest"):
        encode_prefix(anonymous)

    prefix = PrefixParams.random(
        backbone.config, prefix_config, seed=0, backbone_digest=backbone.digest
    )
    with pytest.raises(DataError, match="payload bytes"):
        decode_prefix(encode_prefix(prefix) + b"\x00", Path("p.pktp"))


def test_reparam_state_restores_training(
    backbone: BackboneModel, prefix_config: PrefixConfig
) -> None:
    prefix = PrefixParams.random(backbone.config, prefix_config, seed=0)
    assert prefix.reparam is not None
    state = decode_reparam(encode_reparam(prefix.reparam), Path("p.reparam"))
    rebuilt = PrefixParams.from_reparam(state, backbone.config.n_layers)
    np.testing.assert_array_equal(rebuilt.deployed, prefix.deployed)

    with pytest.raises(DataError, match="truncated"):
        decode_reparam(encode_reparam(prefix.reparam)[:20], Path("p.reparam"))


def test_atomic_write_leaves_no_temporary(tmp_path: Path) -> None:
    path = tmp_path / "out.bin"
    write_bytes_atomic(path, b"one")
    write_bytes_atomic(path, b"two")
    assert path.read_bytes() == b"two"
    assert [p.name for p in tmp_path.iterdir()] == ["out.bin"]
