"""Reverse-mode automatic differentiation over float32 numpy buffers.

Every value is a C-contiguous float32 ndarray; a :class:`Tensor` wraps one
buffer together with its accumulated gradient and the local gradient rules
pointing at its parents.  The op set is exactly what the localizer needs:
dense linear algebra, activations, attention, 2d convolution and its
transpose, bilinear resampling, and reductions.  Broadcasting is restricted
to equal shapes or scalar-vs-tensor so every vjp stays auditable.

Design points:
- gradients accumulate across repeated ``backward`` calls; callers zero them
  per step via :func:`zero_grads`,
- all kernels are deterministic (same inputs give bitwise-equal outputs),
- completed ops leave only finite values; non-finite results raise
  :class:`NumericError` at the op that produced them.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

from . import kernels

_INV_SQRT2 = np.float32(1.0 / math.sqrt(2.0))
_INV_SQRT2PI = np.float32(1.0 / math.sqrt(2.0 * math.pi))

# Multiply counters for the complexity comparison (single-shot vs per-turn
# encoding); scaled_dot_attention adds 2*Tq*Tk*C per call.
COUNTERS = {"attention_multiplies": 0}


def reset_counters() -> None:
    for key in COUNTERS:
        COUNTERS[key] = 0


class ShapeError(ValueError):
    """Operand extents are inconsistent with the operation."""


class NumericError(FloatingPointError):
    """An operation produced NaN/Inf, or a gradient went non-finite."""


def _as_value(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
        arr = np.ascontiguousarray(arr)
    return arr


class Tensor:
    """A node in the differentiation graph: value, grad, parent rules."""

    __slots__ = ("value", "grad", "requires_grad", "parents", "op")

    def __init__(self, data, requires_grad: bool = False, parents=(), op: str = "leaf"):
        self.value = _as_value(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.parents: tuple[tuple[Tensor, Callable[[np.ndarray], np.ndarray]], ...] = tuple(parents)
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def item(self) -> float:
        return float(self.value)

    def __repr__(self) -> str:
        return f"Tensor(op={self.op}, shape={self.shape}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """A trainable leaf with a unique dotted name inside its model."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True, op="param")
        self.name = name


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def _finite_or_raise(arr: np.ndarray, op: str) -> np.ndarray:
    # min/max reductions beat isfinite().all() and still trap NaN (which
    # fails both comparisons) and +-inf
    if arr.size and not (arr.min() > -np.inf and arr.max() < np.inf):
        raise NumericError(f"non-finite values produced by {op}")
    return arr


def _node(value: np.ndarray, parents, op: str) -> Tensor:
    value = _as_value(value)
    _finite_or_raise(value, op)
    requires = any(p.requires_grad for p, _ in parents)
    kept = tuple((p, fn) for p, fn in parents if p.requires_grad)
    return Tensor(value, requires_grad=requires, parents=kept, op=op)


def _check_binary_shapes(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape or a.shape == () or b.shape == ():
        return
    raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} are neither equal nor scalar")


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    # Only scalar-vs-tensor broadcasting exists, so the reduction is a full sum.
    if grad.shape == shape:
        return grad
    return np.asarray(grad.sum(), dtype=np.float32).reshape(shape)


# ---------------------------------------------------------------- arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_binary_shapes(a, b, "add")
    return _node(
        a.value + b.value,
        [(a, lambda g: _reduce_to(g, a.shape)), (b, lambda g: _reduce_to(g, b.shape))],
        "add",
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_binary_shapes(a, b, "sub")
    return _node(
        a.value - b.value,
        [(a, lambda g: _reduce_to(g, a.shape)), (b, lambda g: _reduce_to(-g, b.shape))],
        "sub",
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product (shapes equal, or one operand scalar)."""
    _check_binary_shapes(a, b, "mul")
    return _node(
        a.value * b.value,
        [
            (a, lambda g: _reduce_to(g * b.value, a.shape)),
            (b, lambda g: _reduce_to(g * a.value, b.shape)),
        ],
        "mul",
    )


def scale(x: Tensor, c: float) -> Tensor:
    c32 = np.float32(c)
    return _node(x.value * c32, [(x, lambda g: g * c32)], "scale")


def add_scalar(x: Tensor, c: float) -> Tensor:
    return _node(x.value + np.float32(c), [(x, lambda g: g)], "add_scalar")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ShapeError(f"matmul: expected rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner extents differ, {a.shape} x {b.shape}")
    return _node(
        a.value @ b.value,
        [(a, lambda g: g @ b.value.T), (b, lambda g: a.value.T @ g)],
        "matmul",
    )


def transpose(x: Tensor) -> Tensor:
    if x.value.ndim != 2:
        raise ShapeError(f"transpose: expected rank-2, got {x.shape}")
    return _node(x.value.T, [(x, lambda g: np.ascontiguousarray(g.T))], "transpose")


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    orig = x.shape
    return _node(x.value.reshape(shape), [(x, lambda g: g.reshape(orig))], "reshape")


def concat(xs: Sequence[Tensor], axis: int) -> Tensor:
    if not xs:
        raise ShapeError("concat: empty input list")
    sizes = [t.shape[axis] for t in xs]
    offsets = np.cumsum([0] + sizes)
    parents = []
    for i, t in enumerate(xs):
        lo, hi = int(offsets[i]), int(offsets[i + 1])

        def vjp(g, lo=lo, hi=hi):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            return np.ascontiguousarray(g[tuple(index)])

        parents.append((t, vjp))
    return _node(np.concatenate([t.value for t in xs], axis=axis), parents, "concat")


def narrow(x: Tensor, axis: int, start: int, size: int) -> Tensor:
    if start < 0 or start + size > x.shape[axis]:
        raise ShapeError(f"narrow: [{start}, {start + size}) out of range for axis {axis} of {x.shape}")
    index = [slice(None)] * x.value.ndim
    index[axis] = slice(start, start + size)
    index = tuple(index)

    def vjp(g):
        full = np.zeros_like(x.value)
        full[index] = g
        return full

    return _node(np.ascontiguousarray(x.value[index]), [(x, vjp)], "narrow")


# --------------------------------------------------------------- activations


def relu(x: Tensor) -> Tensor:
    mask = (x.value > 0).astype(np.float32)
    return _node(x.value * mask, [(x, lambda g: g * mask)], "relu")


def sigmoid(x: Tensor) -> Tensor:
    v = x.value
    pos = v >= 0
    z = np.exp(np.where(pos, -v, v))  # exponent is never positive: no overflow
    out = (np.where(pos, 1.0, z) / (1.0 + z)).astype(np.float32)
    return _node(out, [(x, lambda g: g * (out * (1.0 - out)).astype(np.float32))], "sigmoid")


def gelu(x: Tensor) -> Tensor:
    """Exact-erf GELU: x * Phi(x)."""
    v = x.value
    cdf = (0.5 * (1.0 + erf(v * _INV_SQRT2))).astype(np.float32)
    pdf = (_INV_SQRT2PI * np.exp(-0.5 * v * v)).astype(np.float32)
    return _node(v * cdf, [(x, lambda g: g * (cdf + v * pdf))], "gelu")


def softmax(x: Tensor, axis: int) -> Tensor:
    if axis >= x.value.ndim:
        raise ShapeError(f"softmax: axis {axis} out of range for {x.shape}")
    shifted = x.value - x.value.max(axis=axis, keepdims=True)
    ex = np.exp(shifted)
    out = (ex / ex.sum(axis=axis, keepdims=True)).astype(np.float32)

    def vjp(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - inner)).astype(np.float32)

    return _node(out, [(x, vjp)], "softmax")


def log_softmax(x: Tensor, axis: int) -> Tensor:
    shifted = x.value - x.value.max(axis=axis, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = (shifted - logz).astype(np.float32)
    soft = np.exp(out)

    def vjp(g):
        return (g - soft * g.sum(axis=axis, keepdims=True)).astype(np.float32)

    return _node(out, [(x, vjp)], "log_softmax")


# -------------------------------------------------------- normalization, bias


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean/unit variance, then affine."""
    c = x.shape[-1]
    if gain.shape != (c,) or bias.shape != (c,):
        raise ShapeError(f"layer_norm: gain/bias {gain.shape}/{bias.shape} do not match last axis {c}")
    mean = x.value.mean(axis=-1, keepdims=True)
    centred = x.value - mean
    var = (centred * centred).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.float32(eps))
    xhat = (centred * inv).astype(np.float32)
    out = xhat * gain.value + bias.value

    def vjp_x(g):
        gg = g * gain.value
        term = gg - gg.mean(axis=-1, keepdims=True) - xhat * (gg * xhat).mean(axis=-1, keepdims=True)
        return (term * inv).astype(np.float32)

    def vjp_gain(g):
        return (g * xhat).reshape(-1, c).sum(axis=0).astype(np.float32)

    def vjp_bias(g):
        return g.reshape(-1, c).sum(axis=0).astype(np.float32)

    return _node(out, [(x, vjp_x), (gain, vjp_gain), (bias, vjp_bias)], "layer_norm")


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a vector bias along the last axis."""
    c = x.shape[-1]
    if bias.shape != (c,):
        raise ShapeError(f"add_bias: bias {bias.shape} does not match last axis {c}")
    return _node(
        x.value + bias.value,
        [(x, lambda g: g), (bias, lambda g: g.reshape(-1, c).sum(axis=0).astype(np.float32))],
        "add_bias",
    )


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.min(initial=0) < 0 or (ids.size and ids.max() >= table.shape[0]):
        raise ShapeError(f"embedding: id out of range for table of {table.shape[0]} rows")

    def vjp(g):
        full = np.zeros_like(table.value)
        np.add.at(full, ids, g)
        return full

    return _node(table.value[ids], [(table, vjp)], "embedding")


# ----------------------------------------------------------------- reductions


def reduce_sum(x: Tensor) -> Tensor:
    return _node(
        np.asarray(x.value.sum(), dtype=np.float32),
        [(x, lambda g: np.full_like(x.value, np.float32(g)))],
        "sum",
    )


def reduce_mean(x: Tensor) -> Tensor:
    n = np.float32(x.value.size)
    return _node(
        np.asarray(x.value.mean(), dtype=np.float32),
        [(x, lambda g: np.full_like(x.value, np.float32(g) / n))],
        "mean",
    )


def mean_axis0(x: Tensor) -> Tensor:
    """Mean over the first axis (token pooling)."""
    n = np.float32(x.shape[0])
    return _node(
        x.value.mean(axis=0).astype(np.float32),
        [(x, lambda g: np.broadcast_to(g / n, x.shape).astype(np.float32))],
        "mean_axis0",
    )


# ------------------------------------------------------------------ attention


def scaled_dot_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    heads: int,
    out_weight: Tensor | None = None,
    key_mask: np.ndarray | None = None,
) -> Tensor:
    """Multi-head scaled dot-product attention over [T,C] operands.

    Per head: softmax(Q Kt / sqrt(C/heads)) V; heads are concatenated and,
    when `out_weight` is given, projected by it ([C,C]).  `key_mask` (bool
    [Tk], True = attend) excludes padding keys from the softmax.

    Fused into one graph node: the head loop runs as batched numpy matmuls
    with a hand-written vjp, which keeps per-turn graphs small.
    """
    tq, c = q.shape
    tk, ck = k.shape
    if ck != c or v.shape != (tk, c):
        raise ShapeError(f"attention: operands {q.shape}/{k.shape}/{v.shape} disagree")
    if c % heads != 0:
        raise ShapeError(f"attention: width {c} not divisible by {heads} heads")
    dh = c // heads
    inv_sqrt = np.float32(1.0 / math.sqrt(dh))
    COUNTERS["attention_multiplies"] += 2 * tq * tk * c

    qh = np.ascontiguousarray(q.value.reshape(tq, heads, dh).transpose(1, 0, 2))
    kh = np.ascontiguousarray(k.value.reshape(tk, heads, dh).transpose(1, 0, 2))
    vh = np.ascontiguousarray(v.value.reshape(tk, heads, dh).transpose(1, 0, 2))
    scores = (qh @ kh.transpose(0, 2, 1)) * inv_sqrt  # [h,tq,tk]
    if key_mask is not None:
        mask = np.asarray(key_mask, dtype=bool)
        if mask.shape != (tk,):
            raise ShapeError(f"attention: key mask {mask.shape} does not match {tk} keys")
        if not mask.any():
            raise ShapeError("attention: key mask excludes every key")
        scores = np.where(mask[None, None, :], scores, np.float32(-1e9))
    shifted = scores - scores.max(axis=2, keepdims=True)
    ex = np.exp(shifted)
    att = (ex / ex.sum(axis=2, keepdims=True)).astype(np.float32)  # [h,tq,tk]
    merged = np.ascontiguousarray((att @ vh).transpose(1, 0, 2).reshape(tq, c))

    def vjp_q(g):
        gh = g.reshape(tq, heads, dh).transpose(1, 0, 2)
        datt = gh @ vh.transpose(0, 2, 1)
        dscores = att * (datt - (datt * att).sum(axis=2, keepdims=True)) * inv_sqrt
        dqh = dscores @ kh
        return np.ascontiguousarray(dqh.transpose(1, 0, 2).reshape(tq, c))

    def vjp_k(g):
        gh = g.reshape(tq, heads, dh).transpose(1, 0, 2)
        datt = gh @ vh.transpose(0, 2, 1)
        dscores = att * (datt - (datt * att).sum(axis=2, keepdims=True)) * inv_sqrt
        dkh = dscores.transpose(0, 2, 1) @ qh
        return np.ascontiguousarray(dkh.transpose(1, 0, 2).reshape(tk, c))

    def vjp_v(g):
        gh = g.reshape(tq, heads, dh).transpose(1, 0, 2)
        dvh = att.transpose(0, 2, 1) @ gh
        return np.ascontiguousarray(dvh.transpose(1, 0, 2).reshape(tk, c))

    node = _node(merged, [(q, vjp_q), (k, vjp_k), (v, vjp_v)], "attention")
    if out_weight is not None:
        node = matmul(node, out_weight)
    return node


# ---------------------------------------------------------------- convolution


def _conv_geometry(h: int, w: int, kh: int, kw: int, stride: int, padding: int) -> tuple[int, int]:
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    if oh <= 0 or ow <= 0 or (h + 2 * padding - kh) % stride or (w + 2 * padding - kw) % stride:
        raise ShapeError(
            f"conv2d: input {h}x{w}, kernel {kh}x{kw}, stride {stride}, padding {padding} is inconsistent"
        )
    return oh, ow


def _pad(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (padding, padding), (padding, padding)))


def _unpad(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.ascontiguousarray(x[:, padding:-padding, padding:-padding])


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of [Cin,H,W] with [Cout,Cin,kh,kw]."""
    cin, h, w = x.shape
    cout, cin_w, kh, kw = weight.shape
    if cin_w != cin:
        raise ShapeError(f"conv2d: input channels {cin} vs kernel {cin_w}")
    oh, ow = _conv_geometry(h, w, kh, kw, stride, padding)
    xp = _pad(x.value, padding)
    cols = kernels.im2col(xp, kh, kw, stride)
    wmat = weight.value.reshape(cout, cin * kh * kw)
    out = (wmat @ cols).reshape(cout, oh, ow)

    def vjp_x(g):
        gmat = g.reshape(cout, oh * ow)
        dcols = wmat.T @ gmat
        dx = kernels.col2im(dcols, cin, h + 2 * padding, w + 2 * padding, kh, kw, stride)
        return _unpad(dx, padding)

    def vjp_w(g):
        gmat = g.reshape(cout, oh * ow)
        return (gmat @ cols.T).reshape(weight.shape)

    parents = [(x, vjp_x), (weight, vjp_w)]
    if bias is not None:
        if bias.shape != (cout,):
            raise ShapeError(f"conv2d: bias {bias.shape} does not match {cout} output channels")
        out = out + bias.value[:, None, None]
        parents.append((bias, lambda g: g.sum(axis=(1, 2)).astype(np.float32)))
    return _node(out, parents, "conv2d")


def conv2d_transpose(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Adjoint of conv2d; weight is [Cin,Cout,kh,kw], output (H-1)*s - 2p + kh."""
    cin, h, w = x.shape
    cin_w, cout, kh, kw = weight.shape
    if cin_w != cin:
        raise ShapeError(f"conv2d_transpose: input channels {cin} vs kernel {cin_w}")
    oh = (h - 1) * stride - 2 * padding + kh
    ow = (w - 1) * stride - 2 * padding + kw
    if oh <= 0 or ow <= 0:
        raise ShapeError(f"conv2d_transpose: degenerate output {oh}x{ow}")
    wmat = weight.value.reshape(cin, cout * kh * kw)
    # Scatter each input pixel's weighted kernel onto the (padded) output.
    cols = wmat.T @ x.value.reshape(cin, h * w)
    full = kernels.col2im(cols, cout, oh + 2 * padding, ow + 2 * padding, kh, kw, stride)
    out = _unpad(full, padding)

    def vjp_x(g):
        gp = _pad(g, padding)
        gcols = kernels.im2col(gp, kh, kw, stride)
        return (wmat @ gcols).reshape(cin, h, w)

    def vjp_w(g):
        gp = _pad(g, padding)
        gcols = kernels.im2col(gp, kh, kw, stride)
        return (x.value.reshape(cin, h * w) @ gcols.T).reshape(weight.shape)

    parents = [(x, vjp_x), (weight, vjp_w)]
    if bias is not None:
        if bias.shape != (cout,):
            raise ShapeError(f"conv2d_transpose: bias {bias.shape} does not match {cout} output channels")
        out = out + bias.value[:, None, None]
        parents.append((bias, lambda g: g.sum(axis=(1, 2)).astype(np.float32)))
    return _node(out, parents, "conv2d_transpose")


def upsample_bilinear(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Corner-aligned bilinear resize of [C,H,W] to [C,out_h,out_w]."""
    _, h, w = x.shape
    out = kernels.bilinear_resize(x.value, out_h, out_w)
    return _node(out, [(x, lambda g: kernels.bilinear_resize_backward(g, h, w))], "upsample_bilinear")


# ------------------------------------------------------------------- backward


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate dLoss/dNode into every reachable requires_grad node."""
    if loss.value.shape != ():
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.value.shape}")
    if not loss.requires_grad:
        return
    order = _topo_order(loss)
    bufs: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float32)}
    for node in reversed(order):
        g = bufs.pop(id(node), None)
        if g is None:
            continue
        _finite_or_raise(g, f"backward({node.op})")
        if node.grad is None:
            node.grad = g
        else:
            node.grad += g
        for parent, vjp in node.parents:
            contrib = np.asarray(vjp(g), dtype=np.float32)
            slot = bufs.get(id(parent))
            if slot is None:
                # Some vjps return (views of) g itself; buffers must own their
                # memory or a later += would corrupt sibling gradients.
                if np.may_share_memory(contrib, g):
                    contrib = contrib.copy()
                bufs[id(parent)] = contrib
            else:
                slot += contrib


def zero_grads(tensors) -> None:
    for t in tensors:
        t.grad = None
