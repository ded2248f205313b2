from __future__ import annotations

from collections.abc import Callable

import numpy as np
import pytest

from personapkt.backbone import BackboneModel, PrefixParams, lm_loss
from personapkt.backbone.prefix import reparam_activations
from personapkt.compute import Graph, Tensor, backward, grad_check, ops
from personapkt.exceptions import NumericError, ShapeError
from personapkt.models.config import PrefixConfig
from personapkt.pipeline import prefix_loss, response_samples

RNG = np.random.default_rng(42)
X = RNG.normal(size=(3, 4))
W = RNG.normal(size=(4, 5))
B = RNG.normal(size=(2, 4, 3))
GAIN = RNG.normal(size=(4,))
SHIFT = RNG.normal(size=(4,))
WEIGHTS_34 = Tensor(RNG.normal(size=(3, 4)))


def _weighted_sum(t: Tensor, weights: Tensor = WEIGHTS_34) -> Tensor:
    return ops.total(ops.mul(t, weights))


CASES: dict[str, Callable[[dict[str, Tensor]], Tensor]] = {
    "matmul": lambda p: ops.total(ops.tanh(ops.matmul(p["x"], p["w"]))),
    "batched_matmul": lambda p: ops.total(
        ops.tanh(ops.matmul(ops.reshape(ops.concat([p["x"], p["x"]], 0), (2, 3, 4)), p["b"]))
    ),
    "broadcast_add": lambda p: _weighted_sum(ops.tanh(ops.add(p["x"], p["gain"]))),
    "gelu": lambda p: _weighted_sum(ops.gelu(p["x"])),
    "softmax": lambda p: _weighted_sum(ops.softmax(p["x"])),
    "log_softmax": lambda p: _weighted_sum(ops.log_softmax(p["x"])),
    "layer_norm": lambda p: _weighted_sum(ops.layer_norm(p["x"], p["gain"], p["shift"])),
    "transpose": lambda p: ops.total(ops.tanh(ops.matmul(ops.transpose(p["x"], (1, 0)), p["x"]))),
    "index": lambda p: ops.total(ops.tanh(ops.index(p["x"], (slice(0, 2), 1)))),
    "embedding": lambda p: ops.total(ops.tanh(ops.embedding(p["w"], [0, 2, 2, 3]))),
    "cross_entropy": lambda p: ops.cross_entropy(ops.matmul(p["x"], p["w"]), [1, 4], [0, 2]),
    "mean": lambda p: ops.mean([ops.total(ops.tanh(p["x"])), ops.total(ops.gelu(p["x"]))]),
}


@pytest.mark.parametrize("name", sorted(CASES))
def test_op_gradients_match_finite_differences(name: str) -> None:
    params = {
        "x": Tensor(X.copy()),
        "w": Tensor(W.copy()),
        "b": Tensor(B.copy()),
        "gain": Tensor(GAIN.copy()),
        "shift": Tensor(SHIFT.copy()),
    }
    case = CASES[name]
    assert grad_check(lambda: case(params), params) < 1e-6


def test_prefix_gradients_match_finite_differences(
    backbone: BackboneModel, synthetic_dataset, prefix_config: PrefixConfig
) -> None:
    persona = synthetic_dataset.personas[0]
    samples = response_samples(backbone, persona.dialogues[0], prefix_config.prefix_len)[:2]
    prefix = PrefixParams.random(backbone.config, prefix_config, seed=5)
    params = {name: Tensor(value) for name, value in prefix.trainable().items()}

    worst = grad_check(lambda: prefix_loss(backbone, params, samples), params, max_entries=12)

    assert worst < 1e-4


def test_unrecorded_operations_outside_graph() -> None:
    x = Tensor(X, requires_grad=True)
    with Graph() as graph:
        y = ops.total(ops.tanh(x))
    z = ops.total(ops.tanh(x))
    assert len(graph.nodes) == 2
    assert z.item() == y.item()


def test_parameters_without_dependency_get_zero_gradient() -> None:
    x = Tensor(X, requires_grad=True)
    unused = Tensor(W, requires_grad=True)
    with Graph() as graph:
        loss = ops.total(ops.mul(x, x))
    grads = backward(graph, loss, {"x": x, "unused": unused})
    np.testing.assert_allclose(grads["x"], 2 * X)
    assert not grads["unused"].any()


def test_gradients_accumulate_over_shared_inputs() -> None:
    x = Tensor(np.array([[1.0, 2.0]]), requires_grad=True)
    with Graph() as graph:
        loss = ops.total(ops.add(x, ops.scale(x, 3.0)))
    grads = backward(graph, loss, {"x": x})
    np.testing.assert_array_equal(grads["x"], [[4.0, 4.0]])


def test_shape_errors_name_both_shapes() -> None:
    with pytest.raises(ShapeError, match=r"\(3, 4\) and \(3, 4\)"):
        ops.matmul(Tensor(X), Tensor(X))
    with pytest.raises(ShapeError, match=r"\(3, 4\) and \(4, 5\)"):
        ops.add(Tensor(X), Tensor(W))


def test_non_finite_results_raise() -> None:
    with pytest.raises(NumericError, match="mul"):
        ops.mul(Tensor([1e200]), Tensor([1e200]))


def test_backward_needs_scalar() -> None:
    x = Tensor(X, requires_grad=True)
    with Graph() as graph:
        y = ops.tanh(x)
    with pytest.raises(ShapeError, match="scalar"):
        backward(graph, y, {"x": x})


def test_softmax_rows_sum_to_one() -> None:
    rows = ops.softmax(Tensor(RNG.normal(size=(5, 7)) * 30)).data.sum(axis=-1)
    np.testing.assert_allclose(rows, 1.0, atol=1e-12)


def test_grad_check_rejects_bad_step() -> None:
    params = {"x": Tensor(X.copy())}
    with pytest.raises(ValueError, match="h must be positive"):
        grad_check(lambda: ops.total(params["x"]), params, h=0.0)


def test_grad_check_restores_gradient_flags() -> None:
    frozen = Tensor(X.copy())
    tracked = Tensor(W.copy(), requires_grad=True)
    params = {"x": frozen, "w": tracked}

    grad_check(lambda: ops.total(ops.tanh(ops.matmul(params["x"], params["w"]))), params)

    assert frozen.requires_grad is False
    assert tracked.requires_grad is True
    np.testing.assert_array_equal(frozen.data, X)


def test_grad_check_restores_flags_after_failure() -> None:
    x = Tensor([1e200])
    params = {"x": x}
    with pytest.raises(NumericError):
        grad_check(lambda: ops.total(ops.mul(params["x"], Tensor([1e200]))), params)
    assert x.requires_grad is False


def test_backward_is_deterministic_and_resets_slots() -> None:
    x = Tensor(X.copy(), requires_grad=True)
    w = Tensor(W.copy(), requires_grad=True)
    params = {"x": x, "w": w}
    with Graph() as graph:
        loss = ops.total(ops.gelu(ops.matmul(x, w)))

    first = backward(graph, loss, params)
    second = backward(graph, loss, params)
    graph.zero_grad()
    assert not graph.grads
    third = backward(graph, loss, params)

    for name in params:
        np.testing.assert_array_equal(first[name], second[name])
        np.testing.assert_array_equal(first[name], third[name])


def test_only_prefix_parameters_receive_gradients(
    backbone: BackboneModel, synthetic_dataset, prefix_config: PrefixConfig
) -> None:
    persona = synthetic_dataset.personas[0]
    samples = response_samples(backbone, persona.dialogues[0], prefix_config.prefix_len)[:2]
    prefix = PrefixParams.random(backbone.config, prefix_config, seed=5)
    reparam = {
        name: Tensor(value, requires_grad=True) for name, value in prefix.trainable().items()
    }
    weights = backbone.tensors()
    config = backbone.config

    with Graph() as graph:
        activations = reparam_activations(reparam, config.n_layers, config.d_model)
        loss = ops.mean([lm_loss(backbone, activations, s, weights=weights) for s in samples])
    grads = backward(graph, loss, {**weights, **reparam})

    for name in weights:
        assert not grads[name].any(), name
    assert all(grads[name].any() for name in ("embedding", "w1", "w2"))
