from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidSpec


def bce_loss(logits, labels) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy on logits and its gradient w.r.t. the logits.

    Uses ``max(x, 0) - x*y + log1p(exp(-|x|))`` which never overflows.
    """
    x = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    per = np.maximum(x, 0) - x * y + np.log1p(np.exp(-np.abs(x)))
    # sigmoid without overflow
    e = np.exp(-np.abs(x))
    p = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    n = max(x.size, 1)
    return float(per.sum() / n), (p - y) / n


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    amsgrad: bool = False
    weight_decay: float = 5e-4

    def __post_init__(self):
        if not (self.lr > 0 and self.eps > 0 and self.weight_decay >= 0):
            raise InvalidSpec("lr and eps must be positive, weight_decay non-negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise InvalidSpec("betas must lie in [0, 1)")


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    vmax: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, cfg: AdamConfig = AdamConfig()) -> AdamState:
    """One in-place Adam update with coupled (L2) weight decay.

    ``params`` and ``grads`` map names to arrays; ``state.step`` is the
    count of updates already applied.
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    for name, p in params.items():
        g = grads[name]
        if cfg.weight_decay:
            g = g + cfg.weight_decay * p
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= cfg.beta1
        m += (1 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1 - cfg.beta2) * g * g
        if cfg.amsgrad:
            vmax = state.vmax.setdefault(name, np.zeros_like(p))
            np.maximum(vmax, v, out=vmax)
            v = vmax
        denom = np.sqrt(v) / np.sqrt(bc2) + cfg.eps
        p -= (cfg.lr / bc1) * m / denom
    return state
