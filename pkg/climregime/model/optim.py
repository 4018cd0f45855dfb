"""AdamW with decoupled weight decay, plus learning-rate and EMA schedules."""

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from ..exceptions import ConfigError

ParamDict = Dict[str, np.ndarray]


@dataclass
class AdamState:
    m: ParamDict = field(default_factory=dict)
    v: ParamDict = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros_like(cls, params: ParamDict) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            step=0,
        )


def adamw_step(
    params: ParamDict,
    grads: ParamDict,
    state: AdamState,
    lr: float,
    weight_decay: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    decay_keys: Optional[Iterable[str]] = None,
) -> Tuple[ParamDict, AdamState]:
    """
    One AdamW update with bias-corrected moments.

    Args:
        params: Current parameters by name
        grads: Gradients with the same names and shapes
        state: Moment estimates and step count (zeros at step 0)
        lr: Learning rate
        weight_decay: Decoupled decay coefficient
        decay_keys: Names that receive weight decay; all of them when None

    Returns:
        Tuple of (new parameters, new state); inputs are left untouched
    """
    if set(params) != set(grads):
        raise ConfigError(f"Parameter/gradient names differ: {sorted(set(params) ^ set(grads))}")
    decayed = set(params) if decay_keys is None else set(decay_keys)

    step = state.step + 1
    new_params: ParamDict = {}
    new_m: ParamDict = {}
    new_v: ParamDict = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ConfigError(f"Gradient shape {g.shape} does not match {name} {p.shape}")
        m = beta1 * state.m.get(name, np.zeros_like(p)) + (1.0 - beta1) * g
        v = beta2 * state.v.get(name, np.zeros_like(p)) + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**step)
        v_hat = v / (1.0 - beta2**step)
        decay = lr * weight_decay if name in decayed else 0.0
        new_params[name] = p * (1.0 - decay) - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(m=new_m, v=new_v, step=step)


def cosine_lr(epoch: int, total_epochs: int, base_lr: float, final_lr: float) -> float:
    """Cosine decay from ``base_lr`` at epoch 0 to ``final_lr`` at the last epoch."""
    if not 0 <= epoch < max(total_epochs, 1):
        raise ConfigError(f"epoch {epoch} outside [0, {total_epochs})")
    if total_epochs <= 1:
        return base_lr
    progress = epoch / (total_epochs - 1)
    return final_lr + 0.5 * (base_lr - final_lr) * (1.0 + math.cos(math.pi * progress))


def ema_momentum_at(
    step: int, total_steps: int, start: float, end: float, schedule: str = "constant"
) -> float:
    """EMA momentum for ``step``; the cosine schedule rises from ``start`` to ``end``."""
    if schedule == "constant" or total_steps <= 0:
        return start
    if schedule != "cosine":
        raise ConfigError(f"Unknown EMA schedule {schedule!r}")
    t = min(step, total_steps) / total_steps
    return end - (end - start) * (1.0 + math.cos(math.pi * t)) / 2.0
