"""Adaptive-moment optimizer with decoupled weight decay and gradient clipping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import NumericError, Parameter


@dataclass
class AdamW:
    params: list[tuple[str, Parameter]]
    lr: float = 3e-4
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # optional predicate: which parameters receive decay (default: all);
    # the trainer passes a matrices-only filter
    decay_filter: object = None
    step_count: int = 0
    _m: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    _v: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for name, p in self.params:
            if p.requires_grad:
                self._m[name] = np.zeros_like(p.value)
                self._v[name] = np.zeros_like(p.value)

    def clip_global_norm(self, max_norm: float) -> float:
        """Scale all gradients so the global L2 norm is at most max_norm."""
        total = 0.0
        for _, p in self.params:
            if p.requires_grad and p.grad is not None:
                total += float((p.grad.astype(np.float64) ** 2).sum())
        norm = math.sqrt(total)
        if norm > max_norm > 0:
            factor = np.float32(max_norm / norm)
            for _, p in self.params:
                if p.requires_grad and p.grad is not None:
                    p.grad *= factor
        return norm

    def step(self) -> None:
        """p <- p - lr * m_hat/(sqrt(v_hat)+eps) - lr * wd * p; frozen params untouched."""
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for name, p in self.params:
            if not p.requires_grad:
                continue
            g = p.grad if p.grad is not None else np.zeros_like(p.value)
            if g.size and not (g.min() > -np.inf and g.max() < np.inf):
                raise NumericError(f"non-finite gradient for parameter {name!r}")
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / np.float32(bc1)
            v_hat = v / np.float32(bc2)
            update = self.lr * (m_hat / (np.sqrt(v_hat) + np.float32(self.eps)))
            if self.weight_decay and (self.decay_filter is None or self.decay_filter(name, p)):
                update = update + (self.lr * self.weight_decay) * p.value
            p.value = (p.value - update).astype(np.float32)


def matrices_only(name: str, p: Parameter) -> bool:
    """Decay-group predicate: weight matrices yes; norm gains, biases, and
    embedding tables no (decaying those mostly fights optimization)."""
    leaf = name.rsplit(".", 1)[-1]
    return p.value.ndim >= 2 and leaf not in ("tok", "pos")
