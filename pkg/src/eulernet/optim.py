"""Ranger: rectified Adam inner steps wrapped in lookahead slow weights."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import NonFiniteError, Tensor


@dataclass(frozen=True)
class RangerConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lookahead_k: int = 5  # 0 disables lookahead
    lookahead_alpha: float = 0.5

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0 < self.lookahead_alpha <= 1:
            raise ValueError("lookahead_alpha must lie in (0, 1]")
        if self.lookahead_k < 0:
            raise ValueError("lookahead_k must be >= 0")


@dataclass
class RangerState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    slow: dict[str, np.ndarray] = field(default_factory=dict)


def radam_scale(step: int, cfg: RangerConfig) -> tuple[float, bool]:
    """Step-size multiplier for the bias-corrected first moment and whether
    the variance rectification is active (otherwise plain momentum)."""
    b1, b2 = cfg.beta1, cfg.beta2
    rho_inf = 2.0 / (1.0 - b2) - 1.0
    b2t = b2 ** step
    rho_t = rho_inf - 2.0 * step * b2t / (1.0 - b2t)
    if rho_t >= 5.0:
        r = math.sqrt((1 - b2t) * (rho_t - 4) * (rho_t - 2) * rho_inf / ((rho_inf - 4) * (rho_inf - 2) * rho_t))
        return cfg.lr * r / (1 - b1 ** step), True
    return cfg.lr / (1 - b1 ** step), False


def ranger_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: RangerState,
                cfg: RangerConfig) -> RangerState:
    """Update ``params`` in place from ``grads`` (same keys). Missing grads count as zero."""
    for name, g in grads.items():
        if g is not None and not np.isfinite(g).all():
            raise NonFiniteError(f"gradient of {name} contains NaN or Inf; step aborted")
    if cfg.lookahead_k:
        for name, p in params.items():
            if name not in state.slow:
                state.slow[name] = p.data.astype(np.float64)
    state.step += 1
    scale, rectified = radam_scale(state.step, cfg)
    for name, p in params.items():
        g = grads.get(name)
        g = np.zeros(p.shape) if g is None else np.asarray(g, dtype=np.float64)
        if name not in state.m:
            state.m[name] = np.zeros(p.shape)
            state.v[name] = np.zeros(p.shape)
        m = state.m[name] = cfg.beta1 * state.m[name] + (1 - cfg.beta1) * g
        v = state.v[name] = cfg.beta2 * state.v[name] + (1 - cfg.beta2) * g * g
        w = p.data.astype(np.float64)
        if rectified:
            # v is not bias-corrected here; sqrt(1 - beta2^t) is folded into scale
            w = w - scale * m / (np.sqrt(v) + cfg.eps)
        else:
            w = w - scale * m
        p.data = w.astype(p.dtype).reshape(p.shape)

    if cfg.lookahead_k and state.step % cfg.lookahead_k == 0:
        for name, p in params.items():
            slow = state.slow[name] + cfg.lookahead_alpha * (p.data.astype(np.float64) - state.slow[name])
            state.slow[name] = slow
            p.data = slow.astype(p.dtype).reshape(p.shape)
    return state
