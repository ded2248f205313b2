"""
Persona prefixes: per-layer key/value activations prepended to attention.

During training a prefix is reparametrized as ``P = MLP(P')`` with a one-hidden-layer
tanh MLP; only the resulting activations ``P`` of shape (n_layers, 2, L, d_model) are
deployed. The MLP and ``P'`` are kept as training state so a stored prefix can warm-start
further training.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from personapkt.compute import FloatArray, Tensor, ops
from personapkt.exceptions import ShapeError
from personapkt.models.config import BackboneConfig, PrefixConfig

REPARAM_KEYS = ("embedding", "w1", "b1", "w2", "b2")


def deployed_count(n_layers: int, prefix_len: int, d_model: int) -> int:
    """Deployed floats of one prefix: 2 * n_layers * L * d_model."""
    return 2 * n_layers * prefix_len * d_model


def reparam_activations(params: Mapping[str, Tensor], n_layers: int, d_model: int) -> Tensor:
    """Differentiable ``P = tanh(P' W1 + b1) W2 + b2`` laid out as (n_layers, 2, L, d)."""
    hidden = ops.tanh(ops.add(ops.matmul(params["embedding"], params["w1"]), params["b1"]))
    flat = ops.add(ops.matmul(hidden, params["w2"]), params["b2"])
    prefix_len = params["embedding"].shape[0]
    per_position = ops.reshape(flat, (prefix_len, n_layers, 2, d_model))
    return ops.transpose(per_position, (1, 2, 0, 3))


@dataclass(frozen=True, eq=False)
class PrefixParams:
    """A persona vector: deployed activations plus optional reparametrization state."""

    deployed: FloatArray
    """Key/value activations ordered [layer][key, value][position][dim]."""
    reparam: dict[str, FloatArray] | None = None
    """``embedding`` (L x d), ``w1``/``b1`` (d x k, k), ``w2``/``b2`` (k x 2*n_layers*d)."""
    backbone_digest: bytes = b""
    """Digest of the backbone this prefix belongs to (empty when unknown)."""

    def __post_init__(self) -> None:
        """Validate shapes."""
        if self.deployed.ndim != 4 or self.deployed.shape[1] != 2:
            raise ShapeError(
                "deployed prefix must have shape (n_layers, 2, L, d_model), "
                f"got {self.deployed.shape}"
            )
        if self.reparam is not None:
            missing = [k for k in REPARAM_KEYS if k not in self.reparam]
            if missing:
                raise ShapeError(f"reparametrization state lacks {', '.join(missing)}")
            expected = (self.prefix_len, self.d_model)
            if self.reparam["embedding"].shape != expected:
                raise ShapeError(
                    f"prefix embedding shape {self.reparam['embedding'].shape} != {expected}"
                )

    @property
    def n_layers(self) -> int:
        """Backbone layers covered."""
        return int(self.deployed.shape[0])

    @property
    def prefix_len(self) -> int:
        """Number of virtual tokens L."""
        return int(self.deployed.shape[2])

    @property
    def d_model(self) -> int:
        """Model width."""
        return int(self.deployed.shape[3])

    @property
    def deployed_count(self) -> int:
        """Number of deployed floats."""
        return int(self.deployed.size)

    @classmethod
    def empty(cls, config: BackboneConfig) -> PrefixParams:
        """A prefix with L = 0."""
        return cls(np.zeros((config.n_layers, 2, 0, config.d_model)))

    @classmethod
    def from_reparam(
        cls, reparam: Mapping[str, FloatArray], n_layers: int, backbone_digest: bytes = b""
    ) -> PrefixParams:
        """Materialize the deployed activations of a reparametrization state."""
        state = {k: np.array(reparam[k], dtype=np.float64) for k in REPARAM_KEYS}
        d_model = state["embedding"].shape[1]
        tensors = {k: Tensor(v) for k, v in state.items()}
        deployed = reparam_activations(tensors, n_layers, d_model).data
        return cls(np.ascontiguousarray(deployed), state, backbone_digest)

    @classmethod
    def random(
        cls,
        backbone: BackboneConfig,
        config: PrefixConfig,
        seed: int | Sequence[int],
        backbone_digest: bytes = b"",
    ) -> PrefixParams:
        """
        Zero-mean normal initialization of ``P'`` and MLP weights; zero biases.

        ``seed`` is anything ``numpy.random.default_rng`` accepts as entropy.
        """
        rng = np.random.default_rng(seed)
        d, k = backbone.d_model, config.k_reparam
        out = 2 * backbone.n_layers * d
        state = {
            "embedding": rng.normal(0.0, config.init_std, (config.prefix_len, d)),
            "w1": rng.normal(0.0, config.init_std, (d, k)),
            "b1": np.zeros(k),
            "w2": rng.normal(0.0, config.init_std, (k, out)),
            "b2": np.zeros(out),
        }
        return cls.from_reparam(state, backbone.n_layers, backbone_digest)

    def trainable(self) -> dict[str, FloatArray]:
        """Copy of the reparametrization state (the parameters that receive updates)."""
        if self.reparam is None:
            raise ShapeError("prefix has no reparametrization state; it cannot be trained")
        return {k: v.copy() for k, v in self.reparam.items()}

    def with_reparam(self, reparam: Mapping[str, FloatArray]) -> PrefixParams:
        """New prefix from updated training state, keeping the backbone digest."""
        return PrefixParams.from_reparam(reparam, self.n_layers, self.backbone_digest)
