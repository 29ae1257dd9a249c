"""Neural operators with hand-derived backward passes.

Every op follows the same shape conventions: images are (B, C, H, W),
conv weights are (C_out, C_in, k, k), transpose-conv weights are
(C_in, C_out, k, k), linear weights are (F_in, F_out). Convolution is
cross-correlation (no kernel flip). Forward functions return
(output, cache); the matching backward consumes (upstream_grad, cache)
and returns gradients for every input and parameter, in input order.
There is no tape: callers chain these by hand.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import SeededRng, ShapeError


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel_size: int
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if min(self.in_channels, self.out_channels, self.kernel_size, self.stride) < 1:
            raise ValueError(f"non-positive field in {self}")
        if self.padding < 0:
            raise ValueError(f"negative padding in {self}")

    def out_size(self, size: int) -> int:
        out = (size + 2 * self.padding - self.kernel_size) // self.stride + 1
        if out < 1:
            raise ShapeError(f"{self} collapses spatial size {size} to {out}")
        return out

    def transpose_out_size(self, size: int) -> int:
        out = (size - 1) * self.stride - 2 * self.padding + self.kernel_size
        if out < 1:
            raise ShapeError(f"{self} collapses spatial size {size} to {out}")
        return out


class ParamSet:
    """Named map of parameter tensors with same-shape gradient slots."""

    def __init__(self):
        self._values: dict[str, np.ndarray] = {}
        self._grads: dict[str, np.ndarray] = {}

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self._values:
            raise ValueError(f"duplicate parameter name {name!r}")
        self._values[name] = value
        self._grads[name] = np.zeros_like(value)
        return value

    def value(self, name: str) -> np.ndarray:
        return self._values[name]

    def grad(self, name: str) -> np.ndarray:
        return self._grads[name]

    def accumulate(self, name: str, g: np.ndarray):
        slot = self._grads[name]
        if slot.shape != g.shape:
            raise ShapeError(
                f"gradient shape {g.shape} != parameter shape {slot.shape} for {name!r}",
                (g.shape, slot.shape),
            )
        slot += g

    def zero_grads(self):
        for g in self._grads.values():
            g[...] = 0.0

    def names(self):
        return list(self._values)

    def items(self):
        return self._values.items()

    def __contains__(self, name):
        return name in self._values

    def astype(self, dtype) -> "ParamSet":
        out = ParamSet()
        for name, value in self._values.items():
            out.add(name, value.astype(dtype))
        return out


def xavier_uniform(rng: SeededRng, shape, fan_in: int, fan_out: int, dtype=np.float32):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return ((rng.uniforms(shape) * 2.0 - 1.0) * limit).astype(dtype)


def init_conv(rng, out_c, in_c, k, dtype=np.float32):
    w = xavier_uniform(rng, (out_c, in_c, k, k), in_c * k * k, out_c * k * k, dtype)
    return w, np.zeros(out_c, dtype=dtype)


def init_deconv(rng, in_c, out_c, k, dtype=np.float32):
    w = xavier_uniform(rng, (in_c, out_c, k, k), in_c * k * k, out_c * k * k, dtype)
    return w, np.zeros(out_c, dtype=dtype)


def init_linear(rng, f_in, f_out, dtype=np.float32):
    w = xavier_uniform(rng, (f_in, f_out), f_in, f_out, dtype)
    return w, np.zeros(f_out, dtype=dtype)


def _strided_windows(xp: np.ndarray, k: int, stride: int) -> np.ndarray:
    """(B, C, Hp, Wp) -> read-only view (B, C, Ho, Wo, k, k)."""
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def _im2col(xp, k, stride, ho, wo):
    """(B, C, Hp, Wp) padded input -> contiguous (B*Ho*Wo, C*k*k) matrix."""
    win = _strided_windows(xp, k, stride)
    bsz, c = xp.shape[0], xp.shape[1]
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
        bsz * ho * wo, c * k * k
    )


def _col2im(dcols, x_shape, k, stride, pad, ho, wo):
    """Scatter-add (B*Ho*Wo, C*k*k) gradients back onto the input.

    Accumulation happens in channels-last layout so every strided add is a
    plain slice; one transpose at the end restores (B, C, H, W).
    """
    bsz, cin, h, wd = x_shape
    d6 = dcols.reshape(bsz, ho, wo, cin, k, k)
    dxp = np.zeros((bsz, h + 2 * pad, wd + 2 * pad, cin), dtype=dcols.dtype)
    for u in range(k):
        for v in range(k):
            dxp[:, u : u + ho * stride : stride, v : v + wo * stride : stride, :] += (
                d6[:, :, :, :, u, v]
            )
    if pad:
        dxp = dxp[:, pad : pad + h, pad : pad + wd, :]
    return np.ascontiguousarray(dxp.transpose(0, 3, 1, 2))


def conv2d_forward(x, w, b=None, stride=1, pad=0):
    bsz, cin, h, wd = x.shape
    cout, cin_w, k, _ = w.shape
    if cin != cin_w:
        raise ShapeError(
            f"conv2d channel mismatch: input {x.shape} vs weight {w.shape}",
            (x.shape, w.shape),
        )
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d output collapses for input {x.shape}, k={k}")
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = _im2col(xp, k, stride, ho, wo)
    y_mat = cols @ w.reshape(cout, -1).T
    if b is not None:
        y_mat += b[None, :]
    y = np.ascontiguousarray(y_mat.reshape(bsz, ho, wo, cout).transpose(0, 3, 1, 2))
    cache = (x.shape, cols, w, stride, pad, b is not None, ho, wo)
    return y, cache


def conv2d_backward(dy, cache):
    x_shape, cols, w, stride, pad, has_bias, ho, wo = cache
    bsz = x_shape[0]
    cout, cin, k, _ = w.shape
    db = dy.sum(axis=(0, 2, 3)) if has_bias else None
    dy_mat = np.ascontiguousarray(dy.transpose(0, 2, 3, 1)).reshape(bsz * ho * wo, cout)
    dw = (dy_mat.T @ cols).reshape(w.shape)
    dcols = dy_mat @ w.reshape(cout, -1)
    dx = _col2im(dcols, x_shape, k, stride, pad, ho, wo)
    return dx, dw, db


def conv_transpose2d_forward(x, w, b=None, stride=1, pad=0):
    bsz, cin, h, wd = x.shape
    cin_w, cout, k, _ = w.shape
    if cin != cin_w:
        raise ShapeError(
            f"conv_transpose2d channel mismatch: input {x.shape} vs weight {w.shape}",
            (x.shape, w.shape),
        )
    ho = (h - 1) * stride - 2 * pad + k
    wo = (wd - 1) * stride - 2 * pad + k
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv_transpose2d output collapses for input {x.shape}")
    # adjoint of conv2d: one GEMM into per-pixel kernel stacks, then a
    # channels-last scatter with a single transpose at the end
    x_mat = np.ascontiguousarray(x.transpose(0, 2, 3, 1)).reshape(bsz * h * wd, cin)
    cols = x_mat @ w.reshape(cin, -1)
    full_h, full_w = (h - 1) * stride + k, (wd - 1) * stride + k
    c6 = cols.reshape(bsz, h, wd, cout, k, k)
    y_full = np.zeros((bsz, full_h, full_w, cout), dtype=x.dtype)
    for u in range(k):
        for v in range(k):
            y_full[:, u : u + h * stride : stride, v : v + wd * stride : stride, :] += (
                c6[:, :, :, :, u, v]
            )
    if pad:
        y_full = y_full[:, pad : pad + ho, pad : pad + wo, :]
    if b is not None:
        y_full = y_full + b[None, None, None, :]
    y = np.ascontiguousarray(y_full.transpose(0, 3, 1, 2))
    cache = (x_mat, x.shape, w, stride, pad, (full_h, full_w), b is not None)
    return y, cache


def conv_transpose2d_backward(dy, cache):
    x_mat, x_shape, w, stride, pad, (full_h, full_w), has_bias = cache
    bsz, cin, h, wd = x_shape
    cout, k = w.shape[1], w.shape[2]
    db = dy.sum(axis=(0, 2, 3)) if has_bias else None
    if pad:
        dy_full = np.zeros((bsz, cout, full_h, full_w), dtype=dy.dtype)
        dy_full[:, :, pad : pad + dy.shape[2], pad : pad + dy.shape[3]] = dy
    else:
        dy_full = dy
    dcols = _im2col(dy_full, k, stride, h, wd)  # gather the scattered positions
    dx_mat = dcols @ w.reshape(cin, -1).T
    dx = np.ascontiguousarray(dx_mat.reshape(bsz, h, wd, cin).transpose(0, 3, 1, 2))
    dw = (x_mat.T @ dcols).reshape(w.shape)
    return dx, dw, db


def linear_forward(x, w, b=None):
    if x.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(
            f"linear shape mismatch: input {x.shape} vs weight {w.shape}",
            (x.shape, w.shape),
        )
    y = x @ w
    if b is not None:
        y += b[None, :]
    return y, (x, w, b is not None)


def linear_backward(dy, cache):
    x, w, has_bias = cache
    db = dy.sum(axis=0) if has_bias else None
    return dy @ w.T, x.T @ dy, db


def relu_forward(x):
    return np.maximum(x, 0.0), x > 0


def relu_backward(dy, cache):
    return dy * cache


def leaky_relu_forward(x, slope=0.2):
    return np.where(x > 0, x, slope * x), (x > 0, slope)


def leaky_relu_backward(dy, cache):
    mask, slope = cache
    return dy * np.where(mask, 1.0, slope).astype(dy.dtype)


def tanh_forward(x):
    y = np.tanh(x)
    return y, y


def tanh_backward(dy, cache):
    return dy * (1.0 - cache * cache)


def sigmoid_forward(x):
    # exp(-|x|) keeps the evaluation overflow-free on both tails
    e = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return y, y


def sigmoid_backward(dy, cache):
    return dy * cache * (1.0 - cache)


def maxpool2d_forward(x, k=2):
    bsz, c, h, w = x.shape
    if h % k or w % k:
        raise ShapeError(f"maxpool2d needs extents divisible by {k}, got {x.shape}")
    ho, wo = h // k, w // k
    tiles = x.reshape(bsz, c, ho, k, wo, k).transpose(0, 1, 2, 4, 3, 5)
    flat = tiles.reshape(bsz, c, ho, wo, k * k)
    # argmax returns the first maximal index, i.e. row-major tie-breaking
    idx = np.argmax(flat, axis=-1)
    y = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    return y, (x.shape, idx, k)


def maxpool2d_backward(dy, cache):
    x_shape, idx, k = cache
    bsz, c, h, w = x_shape
    ho, wo = h // k, w // k
    dflat = np.zeros((bsz, c, ho, wo, k * k), dtype=dy.dtype)
    np.put_along_axis(dflat, idx[..., None], dy[..., None], axis=-1)
    dx = (
        dflat.reshape(bsz, c, ho, wo, k, k)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(bsz, c, h, w)
    )
    return dx


def softmax_logits(x):
    """Row-wise softmax over the last axis, computed with max-subtraction."""
    m = np.max(x, axis=-1, keepdims=True)
    e = np.exp(x - m)
    return e / np.sum(e, axis=-1, keepdims=True)


def softmax_backward(dy, p):
    return p * (dy - np.sum(dy * p, axis=-1, keepdims=True))


def convlstm_step_forward(x, h_prev, c_prev, wx, wh, b):
    """One convolutional LSTM step.

    Gate pre-activations stack along channels in (input, forget, output,
    candidate) order; gates use same-padded stride-1 convolutions so the
    spatial extent is preserved.
    """
    if x.shape[2:] != h_prev.shape[2:] or h_prev.shape != c_prev.shape:
        raise ShapeError(
            f"convlstm state mismatch: x {x.shape}, h {h_prev.shape}, c {c_prev.shape}",
            (x.shape, h_prev.shape, c_prev.shape),
        )
    k = wx.shape[2]
    pre_x, cache_x = conv2d_forward(x, wx, b, stride=1, pad=k // 2)
    pre_h, cache_h = conv2d_forward(h_prev, wh, None, stride=1, pad=k // 2)
    pre = pre_x + pre_h
    hc = h_prev.shape[1]
    i, _ = sigmoid_forward(pre[:, 0 * hc : 1 * hc])
    f, _ = sigmoid_forward(pre[:, 1 * hc : 2 * hc])
    o, _ = sigmoid_forward(pre[:, 2 * hc : 3 * hc])
    g = np.tanh(pre[:, 3 * hc : 4 * hc])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    cache = (cache_x, cache_h, c_prev, i, f, o, g, tc)
    return h, c, cache


def convlstm_step_backward(dh, dc, cache):
    """Backward for one step; dc is the gradient arriving at the new cell."""
    cache_x, cache_h, c_prev, i, f, o, g, tc = cache
    do = dh * tc
    dc_total = dc + dh * o * (1.0 - tc * tc)
    df = dc_total * c_prev
    dc_prev = dc_total * f
    di = dc_total * g
    dg = dc_total * i
    dpre = np.concatenate(
        [
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            do * o * (1.0 - o),
            dg * (1.0 - g * g),
        ],
        axis=1,
    )
    dx, dwx, db = conv2d_backward(dpre, cache_x)
    dh_prev, dwh, _ = conv2d_backward(dpre, cache_h)
    return dx, dh_prev, dc_prev, dwx, dwh, db
