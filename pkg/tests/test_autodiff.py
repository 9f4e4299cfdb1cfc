"""Gradient and contract tests for the autodiff core.

The oracle throughout is central finite differences at step 1e-3 on the
float32 forward pass (tolerance 1e-3 relative per op, 1e-2 for deep
compositions); attention is additionally pinned against a scalar-arithmetic
reference computed with plain Python floats.
"""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from turnloc import autodiff as ad

STEP = 1e-3
TOL = 1e-3


def rel_err(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-3)
    return np.abs(a - b) / denom


def fd_check(build_loss, arrays: dict[str, np.ndarray], tol: float = TOL, n_dirs: int = 3, seed: int = 0):
    """Compare backward() grads of `build_loss(tensors)` against central differences.

    `build_loss` receives {name: Tensor} and returns a scalar Tensor; every
    array in `arrays` is treated as a differentiable leaf.  The comparison is
    directional ((f(x+h*d) - f(x-h*d)) / 2h versus <grad, d> for random unit
    directions d), which keeps the float32 forward noise well below the
    tolerance without touching the backward path under test.
    """
    rng = np.random.default_rng(seed)
    tensors = {name: ad.Tensor(arr, requires_grad=True) for name, arr in arrays.items()}
    loss = build_loss(tensors)
    ad.backward(loss)
    for name, arr in arrays.items():
        grad = tensors[name].grad
        assert grad is not None and grad.shape == arr.shape
        for _ in range(n_dirs):
            d = rng.standard_normal(arr.shape).astype(np.float32)
            d /= max(float(np.linalg.norm(d)), 1e-12)
            xp = (arr + np.float32(STEP) * d).astype(np.float32)
            xm = (arr - np.float32(STEP) * d).astype(np.float32)

            def eval_at(shifted_arr: np.ndarray) -> float:
                shifted = {k: v.copy() for k, v in arrays.items()}
                shifted[name] = shifted_arr
                leaves = {k: ad.Tensor(v, requires_grad=True) for k, v in shifted.items()}
                return float(build_loss(leaves).value)

            fp, fm = eval_at(xp), eval_at(xm)
            # compare against the *realized* float32 perturbation so step
            # quantization does not masquerade as gradient error
            delta = xp.astype(np.float64) - xm.astype(np.float64)
            step = float(np.linalg.norm(delta))
            fd = (fp - fm) / step
            adv = float((grad.astype(np.float64) * delta).sum()) / step
            # tolerance: relative at the gradient's natural scale, plus the
            # hard resolution floor of differencing a float32 forward (a few
            # ulps of |f| divided by the step)
            scale = max(1.0, float(np.linalg.norm(grad)), abs(adv), abs(fd))
            floor = 8 * np.finfo(np.float32).eps * max(abs(fp), abs(fm), 1.0) / step
            bound = tol * scale + floor
            assert abs(adv - fd) <= bound, (
                f"{name}: ad={adv:.6g} fd={fd:.6g} bound={bound:.3g}"
            )


def proj_loss(out, seed: int = 1):
    rng = np.random.default_rng(seed)
    r = ad.constant(rng.standard_normal(out.shape).astype(np.float32))
    return ad.reduce_sum(ad.mul(out, r))


# --------------------------------------------------------------------- matmul


def test_matmul_identity():
    eye = ad.constant(np.eye(2, dtype=np.float32))
    m = ad.constant([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(ad.matmul(eye, m).value, m.value)


def test_matmul_forced_arithmetic():
    a = ad.constant([[1.0, 0.0]])
    b = ad.constant([[0.0], [5.0]])
    np.testing.assert_array_equal(ad.matmul(a, b).value, [[0.0]])


def test_matmul_shape_error_names_both_shapes():
    a = ad.constant(np.zeros((2, 3), dtype=np.float32))
    b = ad.constant(np.zeros((4, 2), dtype=np.float32))
    with pytest.raises(ad.ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
        ad.matmul(a, b)


@pytest.mark.parametrize("seed", range(20))
def test_matmul_grad_vs_fd(seed):
    rng = np.random.default_rng(seed)
    arrays = {
        "a": rng.standard_normal((3, 4)).astype(np.float32),
        "b": rng.standard_normal((4, 2)).astype(np.float32),
    }
    fd_check(lambda t: proj_loss(ad.matmul(t["a"], t["b"]), seed), arrays, seed=seed)


# -------------------------------------------------------------------- softmax


def test_softmax_symmetry():
    out = ad.softmax(ad.constant([0.0, 0.0, 0.0]), axis=0).value
    np.testing.assert_allclose(out, [1 / 3] * 3, atol=1e-7)


def test_softmax_forced_arithmetic():
    out = ad.softmax(ad.constant([math.log(1.0), math.log(3.0)]), axis=0).value
    np.testing.assert_allclose(out, [0.25, 0.75], atol=1e-6)


@given(st.lists(st.floats(-30, 30), min_size=2, max_size=8), st.floats(-10, 10))
@settings(max_examples=60, deadline=None)
def test_softmax_shift_invariance(xs, c):
    x = np.array(xs, dtype=np.float32)
    a = ad.softmax(ad.constant(x), axis=0).value
    b = ad.softmax(ad.constant(x + np.float32(c)), axis=0).value
    np.testing.assert_allclose(a, b, atol=1e-6)
    assert abs(a.sum() - 1.0) < 1e-6
    assert (a > 0).all()


@pytest.mark.parametrize("seed", range(10))
def test_softmax_grad_vs_fd(seed):
    rng = np.random.default_rng(seed)
    arrays = {"x": rng.standard_normal((3, 5)).astype(np.float32)}
    fd_check(lambda t: proj_loss(ad.softmax(t["x"], axis=1), seed), arrays, seed=seed)


@pytest.mark.parametrize("seed", range(10))
def test_log_softmax_grad_vs_fd(seed):
    rng = np.random.default_rng(seed)
    arrays = {"x": rng.standard_normal((4, 3)).astype(np.float32)}
    fd_check(lambda t: proj_loss(ad.log_softmax(t["x"], axis=1), seed), arrays, seed=seed)


# ----------------------------------------------------------------- layer norm


def test_layer_norm_constant_row_is_zero():
    x = ad.constant(np.full((2, 4), 3.5, dtype=np.float32))
    gain = ad.constant(np.ones(4, dtype=np.float32))
    bias = ad.constant(np.zeros(4, dtype=np.float32))
    out = ad.layer_norm(x, gain, bias).value
    np.testing.assert_allclose(out, 0.0, atol=1e-5)


def test_layer_norm_already_normalized_row():
    x = ad.constant([[1.0, -1.0]])
    gain = ad.constant(np.ones(2, dtype=np.float32))
    bias = ad.constant(np.zeros(2, dtype=np.float32))
    out = ad.layer_norm(x, gain, bias, eps=1e-12).value
    np.testing.assert_allclose(out, [[1.0, -1.0]], atol=1e-4)


@pytest.mark.parametrize("seed", range(10))
def test_layer_norm_grad_vs_fd(seed):
    rng = np.random.default_rng(seed)
    arrays = {
        "x": rng.standard_normal((3, 6)).astype(np.float32),
        "g": (1.0 + 0.1 * rng.standard_normal(6)).astype(np.float32),
        "b": (0.1 * rng.standard_normal(6)).astype(np.float32),
    }
    fd_check(lambda t: proj_loss(ad.layer_norm(t["x"], t["g"], t["b"]), seed), arrays, seed=seed)


# -------------------------------------------------------- pointwise activations


def test_sigmoid_at_zero():
    assert ad.sigmoid(ad.constant(0.0)).item() == pytest.approx(0.5)


def test_elementwise_mul_identity():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((4, 3)).astype(np.float32)
    out = ad.mul(ad.constant(x), ad.constant(np.ones_like(x)))
    np.testing.assert_array_equal(out.value, x)


@pytest.mark.parametrize("op", [ad.gelu, ad.relu, ad.sigmoid])
@pytest.mark.parametrize("seed", range(8))
def test_pointwise_grads_vs_fd(op, seed):
    rng = np.random.default_rng(seed)
    # keep relu inputs away from the kink at 0
    x = rng.standard_normal((3, 4)).astype(np.float32)
    x[np.abs(x) < 0.05] += 0.1
    fd_check(lambda t: proj_loss(op(t["x"]), seed), {"x": x}, seed=seed)


@pytest.mark.parametrize("seed", range(8))
def test_mul_add_sub_grads_vs_fd(seed):
    rng = np.random.default_rng(seed)
    arrays = {
        "a": rng.standard_normal((2, 3)).astype(np.float32),
        "b": rng.standard_normal((2, 3)).astype(np.float32),
    }

    def build(t):
        return proj_loss(ad.add(ad.mul(t["a"], t["b"]), ad.sub(t["a"], t["b"])), seed)

    fd_check(build, arrays, seed=seed)


@pytest.mark.parametrize("seed", range(6))
def test_concat_narrow_grads_vs_fd(seed):
    rng = np.random.default_rng(seed)
    arrays = {
        "a": rng.standard_normal((2, 3)).astype(np.float32),
        "b": rng.standard_normal((2, 2)).astype(np.float32),
    }

    def build(t):
        merged = ad.concat([t["a"], t["b"]], axis=1)
        return proj_loss(ad.narrow(merged, 1, 1, 3), seed)

    fd_check(build, arrays, seed=seed)


@pytest.mark.parametrize("seed", range(6))
def test_embedding_add_bias_grads_vs_fd(seed):
    rng = np.random.default_rng(seed)
    ids = rng.integers(0, 5, size=7)
    arrays = {
        "table": rng.standard_normal((5, 4)).astype(np.float32),
        "bias": rng.standard_normal(4).astype(np.float32),
    }

    def build(t):
        return proj_loss(ad.add_bias(ad.embedding(t["table"], ids), t["bias"]), seed)

    fd_check(build, arrays, seed=seed)


# ------------------------------------------------------------------ attention


def test_attention_single_key_is_copy():
    rng = np.random.default_rng(0)
    q = ad.constant(rng.standard_normal((3, 4)).astype(np.float32))
    k = ad.constant(rng.standard_normal((1, 4)).astype(np.float32))
    v = ad.constant(rng.standard_normal((1, 4)).astype(np.float32))
    out = ad.scaled_dot_attention(q, k, v, heads=2, out_weight=ad.constant(np.eye(4, dtype=np.float32)))
    np.testing.assert_allclose(out.value, np.repeat(v.value, 3, axis=0), atol=1e-6)


def test_attention_identical_keys_uniform_weights():
    rng = np.random.default_rng(1)
    q = ad.constant(rng.standard_normal((2, 4)).astype(np.float32))
    k = ad.constant(np.tile(rng.standard_normal((1, 4)).astype(np.float32), (5, 1)))
    v = ad.constant(rng.standard_normal((5, 4)).astype(np.float32))
    out = ad.scaled_dot_attention(q, k, v, heads=1)
    np.testing.assert_allclose(out.value, np.tile(v.value.mean(axis=0), (2, 1)), atol=1e-6)


def test_attention_toy_matches_scalar_reference():
    # Independent oracle: the same 2-token, 1-head, C=2 instance evaluated
    # with plain Python floats, term by term.
    q = [[1.0, 0.0], [0.0, 1.0]]
    k = [[1.0, 2.0], [0.0, 1.0]]
    v = [[1.0, -1.0], [2.0, 0.5]]
    inv = 1.0 / math.sqrt(2.0)
    expected = []
    for qi in q:
        s0 = (qi[0] * k[0][0] + qi[1] * k[0][1]) * inv
        s1 = (qi[0] * k[1][0] + qi[1] * k[1][1]) * inv
        m = max(s0, s1)
        w0 = math.exp(s0 - m)
        w1 = math.exp(s1 - m)
        z = w0 + w1
        w0, w1 = w0 / z, w1 / z
        expected.append([w0 * v[0][0] + w1 * v[1][0], w0 * v[0][1] + w1 * v[1][1]])
    out = ad.scaled_dot_attention(ad.constant(q), ad.constant(k), ad.constant(v), heads=1)
    np.testing.assert_allclose(out.value, np.array(expected, dtype=np.float64), atol=1e-6)


def test_attention_head_divisibility_error():
    x = ad.constant(np.zeros((2, 6), dtype=np.float32))
    with pytest.raises(ad.ShapeError, match="divisible"):
        ad.scaled_dot_attention(x, x, x, heads=4)


@pytest.mark.parametrize("seed", range(6))
def test_attention_grad_vs_fd(seed):
    rng = np.random.default_rng(seed)
    arrays = {
        "q": rng.standard_normal((3, 4)).astype(np.float32),
        "k": rng.standard_normal((2, 4)).astype(np.float32),
        "v": rng.standard_normal((2, 4)).astype(np.float32),
        "w": rng.standard_normal((4, 4)).astype(np.float32),
    }

    def build(t):
        return proj_loss(ad.scaled_dot_attention(t["q"], t["k"], t["v"], 2, t["w"]), seed)

    fd_check(build, arrays, seed=seed)


# ---------------------------------------------------------------- convolution


def test_conv2d_1x1_unit_kernel_is_identity():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((1, 4, 4)).astype(np.float32)
    w = np.ones((1, 1, 1, 1), dtype=np.float32)
    out = ad.conv2d(ad.constant(x), ad.constant(w))
    np.testing.assert_array_equal(out.value, x)


def test_conv2d_averaging_kernel_on_constant_image():
    x = np.full((1, 5, 5), 2.0, dtype=np.float32)
    w = np.full((1, 1, 3, 3), 1.0 / 9.0, dtype=np.float32)
    out = ad.conv2d(ad.constant(x), ad.constant(w)).value
    np.testing.assert_allclose(out, 2.0, atol=1e-6)


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1)])
@pytest.mark.parametrize("seed", range(4))
def test_conv2d_grad_vs_fd(seed, stride, padding):
    rng = np.random.default_rng(seed)
    arrays = {
        "x": rng.standard_normal((1, 5, 5)).astype(np.float32),
        "w": rng.standard_normal((2, 1, 3, 3)).astype(np.float32),
        "b": rng.standard_normal(2).astype(np.float32),
    }

    def build(t):
        return proj_loss(ad.conv2d(t["x"], t["w"], t["b"], stride=stride, padding=padding), seed)

    fd_check(build, arrays, seed=seed)


@pytest.mark.parametrize("stride,padding", [(1, 0), (2, 1), (2, 0)])
@pytest.mark.parametrize("seed", range(4))
def test_conv2d_transpose_grad_vs_fd(seed, stride, padding):
    rng = np.random.default_rng(seed)
    arrays = {
        "x": rng.standard_normal((2, 3, 3)).astype(np.float32),
        "w": rng.standard_normal((2, 1, 3, 3)).astype(np.float32),
        "b": rng.standard_normal(1).astype(np.float32),
    }

    def build(t):
        return proj_loss(ad.conv2d_transpose(t["x"], t["w"], t["b"], stride=stride, padding=padding), seed)

    fd_check(build, arrays, seed=seed)


def test_conv2d_transpose_is_adjoint_of_conv2d():
    # <conv(x), y> == <x, conv_transpose(y)> with shared weights; the conv
    # kernel [Cout,Cin,kh,kw] is read as [Cin',Cout',kh,kw] on the way back.
    rng = np.random.default_rng(7)
    x = rng.standard_normal((2, 7, 7)).astype(np.float32)
    w = rng.standard_normal((3, 2, 3, 3)).astype(np.float32)
    y = rng.standard_normal((3, 4, 4)).astype(np.float32)
    cx = ad.conv2d(ad.constant(x), ad.constant(w), stride=2, padding=1).value
    cty = ad.conv2d_transpose(ad.constant(y), ad.constant(w), stride=2, padding=1).value
    assert cx.shape == y.shape and cty.shape == x.shape
    lhs = float((cx * y).sum())
    rhs = float((x * cty).sum())
    assert abs(lhs - rhs) < 1e-3 * max(1.0, abs(lhs))


@pytest.mark.parametrize("seed", range(4))
def test_upsample_bilinear_grad_vs_fd(seed):
    rng = np.random.default_rng(seed)
    arrays = {"x": rng.standard_normal((1, 3, 3)).astype(np.float32)}

    def build(t):
        return proj_loss(ad.upsample_bilinear(t["x"], 7, 5), seed)

    fd_check(build, arrays, seed=seed)


def test_upsample_bilinear_corner_alignment():
    x = np.arange(4, dtype=np.float32).reshape(1, 2, 2)
    out = ad.upsample_bilinear(ad.constant(x), 3, 3).value
    np.testing.assert_allclose(out[0, 0], [0.0, 0.5, 1.0], atol=1e-6)
    np.testing.assert_allclose(out[0, 2], [2.0, 2.5, 3.0], atol=1e-6)
    np.testing.assert_allclose(out[0, 1, 1], 1.5, atol=1e-6)


# ------------------------------------------------- float64 reference oracles


def test_layer_norm_grad_matches_float64_reference():
    # independent oracle: the same math evaluated in float64 with tiny-step
    # central differences (exact to ~1e-7, far below the float32 FD floor)
    rng = np.random.default_rng(9)
    x = rng.standard_normal((3, 6)).astype(np.float32)
    gn = (1.0 + 0.1 * rng.standard_normal(6)).astype(np.float32)
    bs = (0.1 * rng.standard_normal(6)).astype(np.float32)
    r = rng.standard_normal((3, 6)).astype(np.float32)
    eps = 1e-5

    def f64(x64):
        m = x64.mean(axis=-1, keepdims=True)
        c = x64 - m
        v = (c * c).mean(axis=-1, keepdims=True)
        xh = c / np.sqrt(v + eps)
        return ((xh * gn + bs) * r).sum()

    xt = ad.Tensor(x, requires_grad=True)
    out = ad.layer_norm(xt, ad.constant(gn), ad.constant(bs), eps=eps)
    ad.backward(ad.reduce_sum(ad.mul(out, ad.constant(r))))
    x64 = x.astype(np.float64)
    h = 1e-6
    for i in range(x.size):
        xp = x64.copy()
        xp.flat[i] += h
        xm = x64.copy()
        xm.flat[i] -= h
        ref = (f64(xp) - f64(xm)) / (2 * h)
        assert abs(ref - xt.grad.flat[i]) < 1e-4


def _naive_conv_transpose64(x, w, stride, padding):
    cin, h, wd = x.shape
    _, cout, kh, kw = w.shape
    oh = (h - 1) * stride - 2 * padding + kh
    ow = (wd - 1) * stride - 2 * padding + kw
    full = np.zeros((cout, oh + 2 * padding, ow + 2 * padding))
    for ci in range(cin):
        for i in range(h):
            for j in range(wd):
                full[:, i * stride : i * stride + kh, j * stride : j * stride + kw] += x[ci, i, j] * w[ci]
    if padding:
        full = full[:, padding:-padding, padding:-padding]
    return full


@pytest.mark.parametrize("stride,padding", [(1, 0), (2, 1), (2, 0)])
def test_conv2d_transpose_grads_match_float64_reference(stride, padding):
    rng = np.random.default_rng(21)
    x = rng.standard_normal((2, 3, 3)).astype(np.float32)
    w = rng.standard_normal((2, 2, 3, 3)).astype(np.float32)
    out_shape = _naive_conv_transpose64(x, w, stride, padding).shape
    r = rng.standard_normal(out_shape).astype(np.float32)

    xt = ad.Tensor(x, requires_grad=True)
    wt = ad.Tensor(w, requires_grad=True)
    out = ad.conv2d_transpose(xt, wt, stride=stride, padding=padding)
    np.testing.assert_allclose(
        out.value, _naive_conv_transpose64(x.astype(np.float64), w.astype(np.float64), stride, padding), atol=1e-5
    )
    ad.backward(ad.reduce_sum(ad.mul(out, ad.constant(r))))

    h = 1e-6
    for arr, tensor in ((x, xt), (w, wt)):
        arr64 = arr.astype(np.float64)
        for i in range(0, arr.size, 3):
            ap = arr64.copy()
            ap.flat[i] += h
            am = arr64.copy()
            am.flat[i] -= h
            if tensor is xt:
                fp = (_naive_conv_transpose64(ap, w.astype(np.float64), stride, padding) * r).sum()
                fm = (_naive_conv_transpose64(am, w.astype(np.float64), stride, padding) * r).sum()
            else:
                fp = (_naive_conv_transpose64(x.astype(np.float64), ap, stride, padding) * r).sum()
                fm = (_naive_conv_transpose64(x.astype(np.float64), am, stride, padding) * r).sum()
            ref = (fp - fm) / (2 * h)
            assert abs(ref - tensor.grad.flat[i]) < 1e-4


# ------------------------------------------------------------------- backward


def test_backward_sum_of_squares():
    x = ad.Tensor([1.0, -2.0, 3.0], requires_grad=True)
    loss = ad.reduce_sum(ad.mul(x, x))
    ad.backward(loss)
    np.testing.assert_allclose(x.grad, 2 * x.value, atol=1e-6)


def test_backward_mean_grad():
    x = ad.Tensor(np.ones((2, 3), dtype=np.float32), requires_grad=True)
    ad.backward(ad.reduce_mean(x))
    np.testing.assert_allclose(x.grad, np.full((2, 3), 1 / 6, dtype=np.float32), atol=1e-7)


def test_backward_rejects_non_scalar():
    x = ad.Tensor(np.ones(3, dtype=np.float32), requires_grad=True)
    with pytest.raises(ad.ShapeError, match="scalar"):
        ad.backward(ad.mul(x, x))


def test_backward_unused_parameter_gets_no_gradient():
    x = ad.Tensor(np.ones(3, dtype=np.float32), requires_grad=True)
    unused = ad.Tensor(np.ones(3, dtype=np.float32), requires_grad=True)
    ad.backward(ad.reduce_sum(ad.mul(x, x)))
    assert unused.grad is None  # never touched: exactly zero contribution


def test_backward_accumulates_until_zeroed():
    x = ad.Tensor([2.0], requires_grad=True)
    for _ in range(2):
        ad.backward(ad.reduce_sum(ad.mul(x, x)))
    np.testing.assert_allclose(x.grad, [8.0], atol=1e-6)
    ad.zero_grads([x])
    assert x.grad is None


def test_sibling_gradient_buffers_do_not_alias():
    # add's vjp hands the same upstream array to both parents; the buffers
    # must still accumulate independently.
    x = ad.Tensor([1.0, 2.0], requires_grad=True)
    y = ad.Tensor([3.0, 4.0], requires_grad=True)
    s = ad.add(x, y)
    loss = ad.reduce_sum(ad.add(ad.mul(s, s), ad.mul(x, x)))
    ad.backward(loss)
    np.testing.assert_allclose(y.grad, 2 * (x.value + y.value), atol=1e-6)
    np.testing.assert_allclose(x.grad, 2 * (x.value + y.value) + 2 * x.value, atol=1e-6)


def test_operations_are_deterministic():
    rng = np.random.default_rng(11)
    x = rng.standard_normal((4, 4)).astype(np.float32)
    w = rng.standard_normal((2, 4, 3, 3)).astype(np.float32)

    def run():
        img = ad.Tensor(np.stack([x] * 4).astype(np.float32), requires_grad=True)
        out = ad.conv2d(img, ad.constant(w), stride=1, padding=1)
        loss = ad.reduce_mean(ad.mul(out, out))
        ad.backward(loss)
        return out.value.copy(), img.grad.copy()

    o1, g1 = run()
    o2, g2 = run()
    np.testing.assert_array_equal(o1, o2)
    np.testing.assert_array_equal(g1, g2)


def test_non_finite_result_raises():
    x = ad.constant([1e30])
    with pytest.raises(ad.NumericError):
        ad.mul(x, x)  # 1e60 overflows float32
