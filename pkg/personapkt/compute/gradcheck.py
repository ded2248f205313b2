"""Central finite-difference check of analytic gradients."""

from __future__ import annotations

import logging
from collections.abc import Callable, Mapping

import numpy as np

from personapkt.exceptions import NumericError

from .tensor import Graph, Tensor, backward

logger = logging.getLogger(__name__)


def grad_check(
    f: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    h: float = 1e-5,
    *,
    max_entries: int | None = None,
    seed: int = 0,
) -> float:
    """
    Compare analytic gradients of a scalar function against central differences.

    Args:
        f: Builds the scalar loss from the current values of ``params``.
        params: Parameters to perturb; values and ``requires_grad`` flags are restored.
        h: Finite-difference step.
        max_entries: Check at most this many randomly chosen entries per parameter.
        seed: Seed for entry selection.

    Returns:
        max over checked entries of |analytic - numeric| / max(1, |analytic|).

    Raises:
        ValueError: If ``h`` is not positive.
        NumericError: If the loss is non-finite at a perturbed point.
    """
    if h <= 0:
        raise ValueError(f"h must be positive, got {h}")
    saved = {name: (tensor.requires_grad, tensor.data) for name, tensor in params.items()}
    try:
        for tensor in params.values():
            tensor.requires_grad = True
            if not tensor.data.flags.c_contiguous or not tensor.data.flags.writeable:
                tensor.data = np.array(tensor.data, order="C")
        worst = _max_error(f, params, h, max_entries, seed)
    finally:
        for name, (requires_grad, data) in saved.items():
            params[name].requires_grad = requires_grad
            params[name].data = data
    logger.debug("grad_check max relative error %.3e", worst)
    return worst


def _max_error(
    f: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    h: float,
    max_entries: int | None,
    seed: int,
) -> float:
    with Graph() as graph:
        loss = f()
    analytic = backward(graph, loss, params)

    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, tensor in params.items():
        flat = tensor.data.reshape(-1)
        entries = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            entries = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        grad_flat = analytic[name].reshape(-1)
        for i in entries:
            original = flat[i]
            try:
                flat[i] = original + h
                plus = _evaluate(f, name, int(i))
                flat[i] = original - h
                minus = _evaluate(f, name, int(i))
            finally:
                flat[i] = original
            numeric = (plus - minus) / (2.0 * h)
            err = abs(grad_flat[i] - numeric) / max(1.0, abs(grad_flat[i]))
            worst = max(worst, float(err))
    return worst


def _evaluate(f: Callable[[], Tensor], name: str, entry: int) -> float:
    try:
        value = f().item()
    except NumericError as err:
        raise NumericError(f"non-finite loss perturbing {name}[{entry}]: {err}") from err
    if not np.isfinite(value):
        raise NumericError(f"non-finite loss perturbing {name}[{entry}]")
    return value
