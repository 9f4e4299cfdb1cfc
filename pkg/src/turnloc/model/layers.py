"""Parameterized building blocks over the autodiff core."""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..autodiff import Parameter, Tensor


class Module:
    """Lightweight parameter container; names come from attribute paths."""

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        out: list[tuple[str, Parameter]] = []
        for attr, val in vars(self).items():
            if attr.startswith("_"):
                continue
            path = f"{prefix}.{attr}" if prefix else attr
            if isinstance(val, Parameter):
                val.name = path
                out.append((path, val))
            elif isinstance(val, Module):
                out.extend(val.named_parameters(path))
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out.extend(item.named_parameters(f"{path}{i}"))
                    elif isinstance(item, Parameter):
                        item.name = f"{path}{i}"
                        out.append((f"{path}{i}", item))
        names = [n for n, _ in out]
        if len(names) != len(set(names)):
            raise ValueError("parameter names are not unique")
        return out

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]


def _normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    return (rng.standard_normal(shape) * std).astype(np.float32)


class Linear(Module):
    def __init__(self, rng: np.random.Generator, n_in: int, n_out: int, std: float | None = None):
        # scale-preserving init: a flat small std would attenuate activations
        # several-fold per layer at these widths
        if std is None:
            std = float(1.0 / np.sqrt(n_in))
        self.weight = Parameter(_normal(rng, (n_in, n_out), std))
        self.bias = Parameter(np.zeros(n_out, dtype=np.float32))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.add_bias(ad.matmul(x, self.weight), self.bias)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = Parameter(np.ones(dim, dtype=np.float32))
        self.bias = Parameter(np.zeros(dim, dtype=np.float32))
        self._eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.gain, self.bias, self._eps)


class MultiHeadAttention(Module):
    def __init__(self, rng: np.random.Generator, dim: int, heads: int):
        self._heads = heads
        self.q_proj = Linear(rng, dim, dim)
        self.k_proj = Linear(rng, dim, dim)
        self.v_proj = Linear(rng, dim, dim)
        self.out_proj = Linear(rng, dim, dim)

    def __call__(self, q_in: Tensor, k_in: Tensor, v_in: Tensor, key_mask: np.ndarray | None = None) -> Tensor:
        merged = ad.scaled_dot_attention(
            self.q_proj(q_in), self.k_proj(k_in), self.v_proj(v_in), self._heads, key_mask=key_mask
        )
        return self.out_proj(merged)


class FeedForward(Module):
    def __init__(self, rng: np.random.Generator, dim: int, mult: int):
        self.up = Linear(rng, dim, dim * mult)
        self.down = Linear(rng, dim * mult, dim)

    def __call__(self, x: Tensor) -> Tensor:
        return self.down(ad.gelu(self.up(x)))


class TransformerBlock(Module):
    """Pre-norm SA -> (optional CA) -> FF with residuals."""

    def __init__(self, rng: np.random.Generator, dim: int, heads: int, ff_mult: int, cross: bool = False):
        self.ln_sa = LayerNorm(dim)
        self.sa = MultiHeadAttention(rng, dim, heads)
        if cross:
            self.ln_ca = LayerNorm(dim)
            self.ca = MultiHeadAttention(rng, dim, heads)
        self._cross = cross
        self.ln_ff = LayerNorm(dim)
        self.ff = FeedForward(rng, dim, ff_mult)

    def __call__(
        self,
        x: Tensor,
        context: Tensor | None = None,
        context_mask: np.ndarray | None = None,
        self_mask: np.ndarray | None = None,
    ) -> Tensor:
        h = self.ln_sa(x)
        x = ad.add(x, self.sa(h, h, h, key_mask=self_mask))
        if self._cross:
            if context is None:
                raise ValueError("cross block called without context")
            x = ad.add(x, self.ca(self.ln_ca(x), context, context, key_mask=context_mask))
        return ad.add(x, self.ff(self.ln_ff(x)))


class TextMLP(Module):
    """Small projection applied to the turn embedding before cross-attention."""

    def __init__(self, rng: np.random.Generator, dim: int):
        self.up = Linear(rng, dim, dim)
        self.down = Linear(rng, dim, dim)

    def __call__(self, x: Tensor) -> Tensor:
        return self.down(ad.gelu(self.up(x)))
