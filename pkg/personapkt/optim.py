"""Parameter update rules and the linear learning-rate schedule."""

from __future__ import annotations

import dataclasses
import math
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from personapkt.compute import FloatArray
from personapkt.exceptions import NumericError, ShapeError
from personapkt.models.types import OptimizerRule

Params = dict[str, FloatArray]


def _check(params: Mapping[str, FloatArray], grads: Mapping[str, FloatArray]) -> None:
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            raise ShapeError(f"missing gradient for parameter {name}")
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match {name} shape {p.shape}")
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {name}")


def sgd_step(
    params: Mapping[str, FloatArray], grads: Mapping[str, FloatArray], lr: float
) -> Params:
    """Return ``p - lr * g`` for every parameter."""
    _check(params, grads)
    return {name: p - lr * grads[name] for name, p in params.items()}


@dataclass
class OptimizerState:
    """Running state of one optimizer owned by a single training job."""

    rule: OptimizerRule = OptimizerRule.ADAMW
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    """Number of updates applied so far."""
    m: dict[str, FloatArray] = field(default_factory=dict)
    """First-moment accumulators (AdamW only)."""
    v: dict[str, FloatArray] = field(default_factory=dict)
    """Second-moment accumulators (AdamW only)."""


def adamw_step(
    state: OptimizerState,
    params: Mapping[str, FloatArray],
    grads: Mapping[str, FloatArray],
    lr: float | None = None,
) -> tuple[Params, OptimizerState]:
    """
    Apply one AdamW update with decoupled weight decay.

    Args:
        state: Current optimizer state; not modified.
        params: Current parameter values.
        grads: Gradients with the same names and shapes.
        lr: Rate for this step; defaults to ``state.lr``.

    Returns:
        The updated parameters and the successor state.
    """
    _check(params, grads)
    rate = state.lr if lr is None else lr
    t = state.step + 1
    correction1 = 1.0 - state.beta1**t
    correction2 = 1.0 - state.beta2**t
    new_params: Params = {}
    new_m: dict[str, FloatArray] = {}
    new_v: dict[str, FloatArray] = {}
    for name, p in params.items():
        g = grads[name]
        m_prev = state.m.get(name)
        v_prev = state.v.get(name)
        if m_prev is not None and m_prev.shape != p.shape:
            raise ShapeError(f"moment shape {m_prev.shape} does not match {name} shape {p.shape}")
        m = state.beta1 * (m_prev if m_prev is not None else 0.0) + (1.0 - state.beta1) * g
        v = state.beta2 * (v_prev if v_prev is not None else 0.0) + (1.0 - state.beta2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        decayed = p * (1.0 - rate * state.weight_decay)
        new_params[name] = decayed - rate * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[name] = m
        new_v[name] = v
    return new_params, dataclasses.replace(state, step=t, m=new_m, v=new_v)


def optimizer_step(
    state: OptimizerState,
    params: Mapping[str, FloatArray],
    grads: Mapping[str, FloatArray],
    lr: float,
) -> tuple[Params, OptimizerState]:
    """Dispatch to the rule named by ``state``."""
    if state.rule is OptimizerRule.SGD:
        return sgd_step(params, grads, lr), dataclasses.replace(state, step=state.step + 1)
    return adamw_step(state, params, grads, lr)


def clip_grad_norm(grads: Mapping[str, FloatArray], max_norm: float | None) -> Params:
    """Scale gradients so their global L2 norm is at most ``max_norm`` (None disables)."""
    if max_norm is None:
        return dict(grads)
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if norm <= max_norm or norm == 0.0:
        return dict(grads)
    factor = max_norm / norm
    return {name: g * factor for name, g in grads.items()}


@dataclass(frozen=True)
class LinearSchedule:
    """Linear warmup from 0 to ``base`` followed by linear decay to 0 at ``total``."""

    base: float
    total: int
    warmup: int = 0

    def __post_init__(self) -> None:
        """Validate field values."""
        if self.base < 0:
            raise ValueError(f"base rate must be non-negative, got {self.base}")
        if self.total < 0 or self.warmup < 0 or self.warmup > self.total:
            raise ValueError(
                f"need 0 <= warmup <= total, got warmup={self.warmup}, total={self.total}"
            )


def schedule_rate(s: LinearSchedule, step: int) -> float:
    """Learning rate at ``step``; steps at or past ``total`` get 0."""
    if step >= s.total or step < 0:
        return 0.0
    if step < s.warmup:
        return s.base * step / s.warmup
    return s.base * (s.total - step) / (s.total - s.warmup)
