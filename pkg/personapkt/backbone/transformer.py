"""
Decoder-only transformer with prefix-conditioned attention.

At every layer the attention keys and values are the prefix's rows for that layer followed
by the sequence's own rows. Real tokens attend to every prefix position and to themselves
and earlier tokens. Positions of the prefix carry no position embedding.
"""

from __future__ import annotations

import hashlib
import math
import struct
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from personapkt.compute import FloatArray, Tensor, ops
from personapkt.exceptions import ContextOverflowError, DataError, ShapeError
from personapkt.models.config import BackboneConfig

from .prefix import PrefixParams
from .tokenizer import DialogueSample, Tokenizer

MASK_VALUE = -1e9
_CONFIG_HEADER = struct.Struct("<6I")


def weight_specs(config: BackboneConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Names and shapes of all weights in checkpoint order."""
    d, f = config.d_model, config.d_ffn
    specs: list[tuple[str, tuple[int, ...]]] = [
        ("wte", (config.vocab_size, d)),
        ("wpe", (config.max_context, d)),
    ]
    for layer in range(config.n_layers):
        p = f"layers.{layer}"
        specs += [
            (f"{p}.ln1.gamma", (d,)),
            (f"{p}.ln1.beta", (d,)),
            (f"{p}.attn.wq", (d, d)),
            (f"{p}.attn.bq", (d,)),
            (f"{p}.attn.wk", (d, d)),
            (f"{p}.attn.bk", (d,)),
            (f"{p}.attn.wv", (d, d)),
            (f"{p}.attn.bv", (d,)),
            (f"{p}.attn.wo", (d, d)),
            (f"{p}.attn.bo", (d,)),
            (f"{p}.ln2.gamma", (d,)),
            (f"{p}.ln2.beta", (d,)),
            (f"{p}.mlp.w1", (d, f)),
            (f"{p}.mlp.b1", (f,)),
            (f"{p}.mlp.w2", (f, d)),
            (f"{p}.mlp.b2", (d,)),
        ]
    specs += [("lnf.gamma", (d,)), ("lnf.beta", (d,))]
    return specs


def pack_config(config: BackboneConfig) -> bytes:
    """The six config fields as unsigned 32-bit little-endian integers."""
    return _CONFIG_HEADER.pack(
        config.vocab_size,
        config.d_model,
        config.n_layers,
        config.n_heads,
        config.d_ffn,
        config.max_context,
    )


def unpack_config(data: bytes) -> BackboneConfig:
    """Inverse of ``pack_config``."""
    vocab_size, d_model, n_layers, n_heads, d_ffn, max_context = _CONFIG_HEADER.unpack(data)
    return BackboneConfig(
        vocab_size=vocab_size,
        d_model=d_model,
        n_layers=n_layers,
        n_heads=n_heads,
        d_ffn=d_ffn,
        max_context=max_context,
    )


def weight_bytes(config: BackboneConfig, weights: Mapping[str, FloatArray]) -> bytes:
    """All weights as 64-bit little-endian floats in checkpoint order."""
    return b"".join(
        np.ascontiguousarray(weights[name], dtype="<f8").tobytes()
        for name, _ in weight_specs(config)
    )


def compute_digest(
    config: BackboneConfig, vocab_json: bytes, weights: Mapping[str, FloatArray]
) -> bytes:
    """SHA-256 over the packed config, the vocabulary JSON and the weight bytes."""
    digest = hashlib.sha256()
    digest.update(pack_config(config))
    digest.update(vocab_json)
    digest.update(weight_bytes(config, weights))
    return digest.digest()


@dataclass(frozen=True, eq=False)
class BackboneModel:
    """Frozen backbone weights with their architecture and vocabulary."""

    config: BackboneConfig
    weights: dict[str, FloatArray]
    """Read-only arrays keyed by ``weight_specs`` names."""
    tokenizer: Tokenizer
    digest: bytes = field(init=False)
    """Identity of this concrete backbone."""

    def __post_init__(self) -> None:
        """Validate shapes, freeze the arrays and compute the digest."""
        if len(self.tokenizer) != self.config.vocab_size:
            raise DataError(
                f"vocabulary has {len(self.tokenizer)} words, config says {self.config.vocab_size}"
            )
        frozen: dict[str, FloatArray] = {}
        for name, shape in weight_specs(self.config):
            if name not in self.weights:
                raise DataError(f"backbone weight {name} is missing")
            array = np.array(self.weights[name], dtype=np.float64)
            if array.shape != shape:
                raise ShapeError(
                    f"backbone weight {name} has shape {array.shape}, expected {shape}"
                )
            array.setflags(write=False)
            frozen[name] = array
        object.__setattr__(self, "weights", frozen)
        object.__setattr__(
            self, "digest", compute_digest(self.config, self.tokenizer.to_json(), frozen)
        )

    @property
    def param_count(self) -> int:
        """Total number of backbone floats."""
        return sum(int(w.size) for w in self.weights.values())

    def tensors(self) -> dict[str, Tensor]:
        """Constant (non-trainable) tensor views of the weights."""
        return {name: Tensor(w, name=name) for name, w in self.weights.items()}

    def trainable_copy(self) -> dict[str, FloatArray]:
        """Writeable copies of all weights, for full-model training."""
        return {name: w.copy() for name, w in self.weights.items()}

    def context_budget(self, prefix_len: int) -> int:
        """Input positions left after reserving ``prefix_len`` prefix positions."""
        return self.config.max_context - prefix_len


def init_weights(config: BackboneConfig, seed: int, std: float = 0.02) -> dict[str, FloatArray]:
    """Normal(0, std) matrices and embeddings, unit layer-norm gains, zero biases."""
    rng = np.random.default_rng(seed)
    weights: dict[str, FloatArray] = {}
    for name, shape in weight_specs(config):
        if name.endswith(".gamma"):
            weights[name] = np.ones(shape)
        elif len(shape) == 1:
            weights[name] = np.zeros(shape)
        else:
            weights[name] = rng.normal(0.0, std, shape)
    return weights


def _causal_mask(length: int, prefix_len: int) -> FloatArray:
    mask = np.zeros((length, prefix_len + length))
    mask[:, prefix_len:] = np.triu(np.full((length, length), MASK_VALUE), k=1)
    return mask


def _split_heads(x: Tensor, n_heads: int) -> Tensor:
    length, width = x.shape
    return ops.transpose(ops.reshape(x, (length, n_heads, width // n_heads)), (1, 0, 2))


def _attention(
    config: BackboneConfig,
    w: Mapping[str, Tensor],
    layer: int,
    h: Tensor,
    prefix_kv: Tensor,
    mask: FloatArray,
    captured: list[FloatArray] | None,
) -> Tensor:
    p = f"layers.{layer}.attn"
    length = h.shape[0]
    q = ops.add(ops.matmul(h, w[f"{p}.wq"]), w[f"{p}.bq"])
    k = ops.add(ops.matmul(h, w[f"{p}.wk"]), w[f"{p}.bk"])
    v = ops.add(ops.matmul(h, w[f"{p}.wv"]), w[f"{p}.bv"])
    k = ops.concat([ops.index(prefix_kv, (layer, 0)), k], axis=0)
    v = ops.concat([ops.index(prefix_kv, (layer, 1)), v], axis=0)
    heads = config.n_heads
    qh, kh, vh = _split_heads(q, heads), _split_heads(k, heads), _split_heads(v, heads)
    scores = ops.matmul(qh, ops.transpose(kh, (0, 2, 1)))
    scores = ops.scale(scores, 1.0 / math.sqrt(config.head_dim))
    weights = ops.softmax(ops.add(scores, Tensor(mask)))
    if captured is not None:
        captured.append(weights.data.copy())
    mixed = ops.transpose(ops.matmul(weights, vh), (1, 0, 2))
    merged = ops.reshape(mixed, (length, config.d_model))
    return ops.add(ops.matmul(merged, w[f"{p}.wo"]), w[f"{p}.bo"])


def _mlp(w: Mapping[str, Tensor], layer: int, h: Tensor) -> Tensor:
    p = f"layers.{layer}.mlp"
    hidden = ops.gelu(ops.add(ops.matmul(h, w[f"{p}.w1"]), w[f"{p}.b1"]))
    return ops.add(ops.matmul(hidden, w[f"{p}.w2"]), w[f"{p}.b2"])


def transformer_logits(
    config: BackboneConfig,
    weights: Mapping[str, Tensor],
    ids: Sequence[int],
    prefix_kv: Tensor | None = None,
    captured: list[FloatArray] | None = None,
) -> Tensor:
    """
    Next-token logits of shape (len(ids), vocab_size).

    Args:
        config: Architecture.
        weights: Backbone weights as tensors (constant or trainable).
        ids: Input token ids.
        prefix_kv: Prefix activations (n_layers, 2, L, d_model); None behaves as L = 0.
        captured: When given, receives the attention weights (heads, T, L + T) of each layer.

    Raises:
        ContextOverflowError: If the input does not fit after reserving L positions.
    """
    if prefix_kv is None:
        prefix_kv = Tensor(np.zeros((config.n_layers, 2, 0, config.d_model)))
    expected = (config.n_layers, 2, prefix_kv.shape[2], config.d_model)
    if prefix_kv.shape != expected:
        raise ShapeError(f"prefix activations have shape {prefix_kv.shape}, expected {expected}")
    prefix_len = prefix_kv.shape[2]
    length = len(ids)
    if length == 0:
        raise DataError("cannot run the model on an empty input")
    if length > config.max_context - prefix_len:
        raise ContextOverflowError(
            f"input of {length} tokens does not fit max_context {config.max_context} "
            f"with {prefix_len} prefix positions"
        )
    mask = _causal_mask(length, prefix_len)
    x = ops.add(ops.embedding(weights["wte"], ids), ops.index(weights["wpe"], slice(0, length)))
    for layer in range(config.n_layers):
        p = f"layers.{layer}"
        h = ops.layer_norm(x, weights[f"{p}.ln1.gamma"], weights[f"{p}.ln1.beta"])
        x = ops.add(x, _attention(config, weights, layer, h, prefix_kv, mask, captured))
        h = ops.layer_norm(x, weights[f"{p}.ln2.gamma"], weights[f"{p}.ln2.beta"])
        x = ops.add(x, _mlp(weights, layer, h))
    x = ops.layer_norm(x, weights["lnf.gamma"], weights["lnf.beta"])
    return ops.matmul(x, ops.transpose(weights["wte"], (1, 0)))


@dataclass(frozen=True, eq=False)
class ForwardResult:
    """Output of ``forward_lm``."""

    probs: FloatArray
    """Next-token distributions, shape (T, vocab_size)."""
    attention: list[FloatArray]
    """Per-layer attention weights (heads, T, L + T); empty unless requested."""


def _prefix_tensor(prefix: PrefixParams | Tensor | None) -> Tensor | None:
    if prefix is None or isinstance(prefix, Tensor):
        return prefix
    return Tensor(prefix.deployed)


def forward_lm(
    model: BackboneModel,
    prefix: PrefixParams | None,
    ids: Sequence[int],
    *,
    return_attention: bool = False,
) -> ForwardResult:
    """Per-position next-token distributions of ``ids`` under ``prefix``."""
    captured: list[FloatArray] | None = [] if return_attention else None
    logits = transformer_logits(
        model.config, model.tensors(), ids, _prefix_tensor(prefix), captured
    )
    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return ForwardResult(exp / exp.sum(axis=-1, keepdims=True), captured or [])


def next_token_logprobs(
    model: BackboneModel, prefix: PrefixParams | None, ids: Sequence[int]
) -> FloatArray:
    """Log-probabilities of the token following ``ids``."""
    logits = transformer_logits(model.config, model.tensors(), ids, _prefix_tensor(prefix)).data[-1]
    shifted = logits - logits.max()
    return shifted - np.log(np.exp(shifted).sum())


def lm_loss(
    model: BackboneModel,
    prefix: PrefixParams | Tensor | None,
    sample: DialogueSample,
    *,
    weights: Mapping[str, Tensor] | None = None,
) -> Tensor:
    """
    Mean token cross-entropy over the target positions of ``sample``.

    ``prefix`` may be a deployed prefix or a differentiable activation tensor. ``weights``
    replaces the frozen backbone weights, which full-model training uses.
    """
    if not sample.target:
        raise DataError("sample has an empty target response")
    logits = transformer_logits(
        model.config,
        model.tensors() if weights is None else weights,
        sample.input_ids,
        _prefix_tensor(prefix),
    )
    return ops.cross_entropy(logits, sample.target, sample.target_positions)
