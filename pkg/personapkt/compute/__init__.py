"""Dense float64 arrays with reverse-mode gradients."""

__all__ = [
    "FloatArray",
    "Graph",
    "Node",
    "Tensor",
    "active_graph",
    "backward",
    "grad_check",
    "ops",
]

from . import ops
from .gradcheck import grad_check
from .tensor import FloatArray, Graph, Node, Tensor, active_graph, backward
