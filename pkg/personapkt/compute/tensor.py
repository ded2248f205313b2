"""
Tensors and the recording graph for reverse-mode differentiation.

A Graph is a tape: while it is active (``with Graph() as g:``) every operation whose
inputs include a tensor with ``requires_grad`` appends a node in execution order, so
the recording order is already a topological order. Outside an active graph operations
are evaluated eagerly and nothing is recorded.
"""

from __future__ import annotations

import contextvars
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass
from types import TracebackType

import numpy as np
from numpy.typing import ArrayLike, NDArray

from personapkt.exceptions import ShapeError

FloatArray = NDArray[np.float64]

BackwardFn = Callable[[FloatArray], Sequence[FloatArray | None]]
"""Maps the output gradient to one gradient (or None) per parent."""

_ACTIVE_GRAPH: contextvars.ContextVar[Graph | None] = contextvars.ContextVar(
    "personapkt_active_graph", default=None
)


class Tensor:
    """A float64 array with an optional place in the active graph."""

    __slots__ = ("data", "name", "requires_grad")

    data: FloatArray
    """Row-major values."""
    requires_grad: bool
    """True for parameters being differentiated and for values derived from them."""
    name: str
    """Optional label used in error messages."""

    def __init__(self, data: ArrayLike, *, requires_grad: bool = False, name: str = "") -> None:
        """Wrap ``data`` as float64 without copying when it already is."""
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        """Dimension sizes."""
        return tuple(self.data.shape)

    @property
    def size(self) -> int:
        """Number of elements."""
        return int(self.data.size)

    def item(self) -> float:
        """Return the value of a single-element tensor."""
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        """Short description with shape and gradient flag."""
        label = f" {self.name}" if self.name else ""
        return f"<Tensor{label} shape={self.shape} requires_grad={self.requires_grad}>"


@dataclass(slots=True)
class Node:
    """One recorded operation."""

    op: str
    output: Tensor
    parents: tuple[Tensor, ...]
    backward: BackwardFn


class Graph:
    """Ordered record of operations with per-node gradient slots."""

    nodes: list[Node]
    """Recorded operations in execution order."""
    grads: dict[int, FloatArray]
    """Gradient slots keyed by tensor identity; empty before a backward pass."""

    def __init__(self) -> None:
        """Create an empty graph."""
        self.nodes = []
        self.grads = {}
        self._token: contextvars.Token[Graph | None] | None = None

    def __enter__(self) -> Graph:
        """Make this graph the active recorder for the current context."""
        self._token = _ACTIVE_GRAPH.set(self)
        return self

    def __exit__(
        self,
        exc_type: type[BaseException] | None,
        exc: BaseException | None,
        tb: TracebackType | None,
    ) -> None:
        """Stop recording."""
        if self._token is not None:
            _ACTIVE_GRAPH.reset(self._token)
            self._token = None

    def record(self, node: Node) -> None:
        """Append a node; called by operations only."""
        self.nodes.append(node)

    def zero_grad(self) -> None:
        """Reset every gradient slot."""
        self.grads.clear()

    def grad(self, tensor: Tensor) -> FloatArray:
        """Return the gradient slot of ``tensor`` (zeros when nothing reached it)."""
        slot = self.grads.get(id(tensor))
        if slot is None:
            return np.zeros_like(tensor.data)
        return slot


def active_graph() -> Graph | None:
    """Return the graph recording in the current context, if any."""
    return _ACTIVE_GRAPH.get()


def backward(
    graph: Graph,
    loss: Tensor,
    params: Mapping[str, Tensor],
    *,
    accumulate: bool = False,
) -> dict[str, FloatArray]:
    """
    Propagate gradients from a scalar ``loss`` back through ``graph``.

    Args:
        graph: The graph the loss was recorded on.
        loss: Single-element tensor.
        params: Named tensors whose gradients are returned.
        accumulate: Keep existing gradient slots instead of zeroing them first.

    Returns:
        A fresh gradient array per parameter name; parameters the loss does not depend
        on get exact zeros.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not accumulate:
        graph.zero_grad()
    seed = np.ones_like(loss.data)
    key = id(loss)
    graph.grads[key] = seed if key not in graph.grads else graph.grads[key] + seed

    for node in reversed(graph.nodes):
        out_grad = graph.grads.get(id(node.output))
        if out_grad is None:
            continue
        parent_grads = node.backward(out_grad)
        for parent, parent_grad in zip(node.parents, parent_grads, strict=True):
            if parent_grad is None or not parent.requires_grad:
                continue
            if parent_grad.shape != parent.data.shape:
                raise ShapeError(
                    f"{node.op} produced gradient of shape {parent_grad.shape} "
                    f"for operand of shape {parent.shape}"
                )
            pid = id(parent)
            existing = graph.grads.get(pid)
            graph.grads[pid] = parent_grad if existing is None else existing + parent_grad

    return {name: graph.grad(tensor).copy() for name, tensor in params.items()}
