"""Per-pixel adaptive convolution and mask-guided multi-scale motion fusion.

A content feature map is refined one output pixel at a time: every location
(a, b) owns its own small kernel, applied to the replicate-padded n x n
neighborhood around (a, b) and shared across all channels. A per-pixel mask
in [0, 1] then blends the refined value with the original, so a zero mask
preserves the input exactly. Kernels come in two layouts:

* dense   -- one flattened n*n vector per pixel,
* separable -- a vertical and a horizontal length-n vector per pixel whose
  outer product recovers the dense kernel at a per-pixel storage cost of
  2n instead of n*n.

Content maps are (C, H, W) or batched (B, C, H, W); kernel fields follow
with (H, W, n)/(H, W, n*n) plus an optional leading batch axis; masks are
(H, W) or (B, H, W). Forward functions return (output, cache) and the
matching backward returns gradients for every input, as in `ops`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError

__all__ = [
    "FusionConfig",
    "SeparableKernelField",
    "DenseKernelField",
    "MaskField",
    "expand_kernel",
    "flatten_kernel",
    "recover_dense",
    "identity_separable",
    "adaptive_conv_forward",
    "adaptive_conv_backward",
    "mask_blend_forward",
    "mask_blend_backward",
    "mask_activation_forward",
    "mask_activation_backward",
    "fuse_pyramid_forward",
    "fuse_pyramid_backward",
    "kernel_param_count",
]


@dataclass(frozen=True)
class FusionConfig:
    """Static description of a multi-scale fusion stack, coarsest scale first."""

    scales: int
    kernel_size: int
    resolutions: tuple[int, ...]
    channels: tuple[int, ...]
    padding_mode: str = "replicate"

    def __post_init__(self):
        if self.scales < 1:
            raise ValueError("scales must be >= 1")
        if self.kernel_size < 3 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd and >= 3, got {self.kernel_size}")
        if len(self.resolutions) != self.scales or len(self.channels) != self.scales:
            raise ValueError("resolutions/channels must list one entry per scale")
        if any(b <= a for a, b in zip(self.resolutions, self.resolutions[1:])):
            raise ValueError(f"resolutions must strictly increase: {self.resolutions}")
        if self.padding_mode != "replicate":
            raise ValueError(f"unsupported padding mode {self.padding_mode!r}")


@dataclass
class SeparableKernelField:
    """Per-pixel vertical/horizontal kernel vectors, (..., H, W, n) each."""

    wv: np.ndarray
    wh: np.ndarray

    def __post_init__(self):
        if self.wv.shape != self.wh.shape:
            raise ShapeError(
                f"wv {self.wv.shape} and wh {self.wh.shape} must match",
                (self.wv.shape, self.wh.shape),
            )

    @property
    def n(self) -> int:
        return self.wv.shape[-1]


@dataclass
class DenseKernelField:
    """Per-pixel flattened n*n kernels, (..., H, W, n*n)."""

    w: np.ndarray

    def __post_init__(self):
        n = int(round(np.sqrt(self.w.shape[-1])))
        if n * n != self.w.shape[-1]:
            raise ShapeError(
                f"last extent {self.w.shape[-1]} is not a perfect square",
                (self.w.shape,),
            )

    @property
    def n(self) -> int:
        return int(round(np.sqrt(self.w.shape[-1])))


@dataclass
class MaskField:
    """Per-pixel blend weights in [0, 1], (H, W) or (B, H, W)."""

    m: np.ndarray

    def __post_init__(self):
        _check_mask_range(self.m)


def _check_mask_range(m):
    if m.size and (float(np.min(m)) < 0.0 or float(np.max(m)) > 1.0):
        raise ValueError(
            f"mask entries outside [0, 1]: min {float(np.min(m)):.6g}, "
            f"max {float(np.max(m)):.6g}"
        )


def expand_kernel(wv: np.ndarray, wh: np.ndarray) -> np.ndarray:
    """Outer product K[..., i, j] = wv[..., i] * wh[..., j]."""
    if wv.shape[-1] != wh.shape[-1]:
        raise ShapeError(
            f"kernel vector lengths differ: {wv.shape[-1]} vs {wh.shape[-1]}",
            (wv.shape, wh.shape),
        )
    return np.einsum("...u,...v->...uv", wv, wh)


def flatten_kernel(kern: np.ndarray) -> np.ndarray:
    """Row-major flattening of (..., n, n) kernels to (..., n*n)."""
    return np.ascontiguousarray(kern).reshape(kern.shape[:-2] + (-1,))


def recover_dense(w: np.ndarray, a: int, b: int) -> np.ndarray:
    """Row-major unflattening of the kernel stored at location (a, b)."""
    if w.ndim != 3:
        raise ShapeError(f"expected (H, W, n*n) field, got {w.shape}", (w.shape,))
    h, wd, nn = w.shape
    if not (0 <= a < h and 0 <= b < wd):
        raise IndexError(f"location ({a}, {b}) outside {h}x{wd} field")
    n = int(round(np.sqrt(nn)))
    if n * n != nn:
        raise ShapeError(f"flat length {nn} is not a perfect square", (w.shape,))
    return w[a, b].reshape(n, n)


def identity_separable(h: int, w: int, n: int, dtype=np.float32) -> SeparableKernelField:
    """Field whose every pixel holds the center-delta kernel (exact identity)."""
    e = np.zeros(n, dtype=dtype)
    e[n // 2] = 1.0
    wv = np.broadcast_to(e, (h, w, n)).copy()
    return SeparableKernelField(wv=wv, wh=wv.copy())


def _lift(x, target_ndim):
    """Add a leading batch axis when `x` is one rank short."""
    if x.ndim == target_ndim - 1:
        return x[None], True
    if x.ndim == target_ndim:
        return x, False
    raise ShapeError(f"rank {x.ndim} not in ({target_ndim - 1}, {target_ndim})", (x.shape,))


def _replicate_pad(h, r):
    return np.pad(h, ((0, 0), (0, 0), (r, r), (r, r)), mode="edge")


def _replicate_pad_backward(dp, r, h, w):
    """Fold gradients of a replicate-padded buffer onto the source pixels."""
    d = dp[:, :, r : r + h, :].copy()
    d[:, :, 0, :] += dp[:, :, :r, :].sum(axis=2)
    d[:, :, h - 1, :] += dp[:, :, r + h :, :].sum(axis=2)
    out = d[:, :, :, r : r + w].copy()
    out[:, :, :, 0] += d[:, :, :, :r].sum(axis=3)
    out[:, :, :, w - 1] += d[:, :, :, r + w :].sum(axis=3)
    return out


def _check_field(h4, f, n, what):
    if n % 2 == 0 or n < 1:
        raise ValueError(f"kernel size must be odd, got {n}")
    if f.shape[-3:-1] != h4.shape[2:]:
        raise ShapeError(
            f"{what} spatial extent {f.shape[-3:-1]} != content {h4.shape[2:]}",
            (f.shape, h4.shape),
        )


def adaptive_conv_forward(h, kernels):
    """Convolve each location's replicate-padded patch with its own kernel.

    `kernels` is a SeparableKernelField or DenseKernelField; the per-pixel
    kernel is shared across all content channels.
    """
    h4, lifted = _lift(h, 4)
    bsz, c, hh, ww = h4.shape
    n = kernels.n
    r = n // 2
    hp = _replicate_pad(h4, r)
    win = np.lib.stride_tricks.sliding_window_view(hp, (n, n), axis=(2, 3))
    if isinstance(kernels, SeparableKernelField):
        _check_field(h4, kernels.wv, n, "separable kernel field")
        wv, _ = _lift(kernels.wv, 4)
        wh, _ = _lift(kernels.wh, 4)
        t = np.einsum("bchwuv,bhwu->bchwv", win, wv, optimize=True)
        out = np.einsum("bchwv,bhwv->bchw", t, wh, optimize=True)
        cache = ("sep", h4.shape, win, wv, wh, t, lifted, kernels.wv.ndim == 3)
    elif isinstance(kernels, DenseKernelField):
        _check_field(h4, kernels.w, n, "dense kernel field")
        w, _ = _lift(kernels.w, 4)
        kern = w.reshape(w.shape[:3] + (n, n))
        out = np.einsum("bchwuv,bhwuv->bchw", win, kern, optimize=True)
        cache = ("dense", h4.shape, win, kern, lifted, kernels.w.ndim == 3)
    else:
        raise TypeError(f"unsupported kernel field type {type(kernels).__name__}")
    out = np.ascontiguousarray(out)
    return (out[0] if lifted else out), cache


def adaptive_conv_backward(dy, cache):
    """Gradients w.r.t. the content map and the kernel field.

    Returns (dh, dkernels) where dkernels mirrors the forward field type:
    a SeparableKernelField of (dwv, dwh) or a DenseKernelField of dw.
    """
    kind = cache[0]
    if kind == "sep":
        _, h_shape, win, wv, wh, t, lifted, field_unbatched = cache
        dy4 = dy[None] if lifted else dy
        bsz, c, hh, ww = h_shape
        n = wv.shape[-1]
        r = n // 2
        dwh = np.einsum("bchwv,bchw->bhwv", t, dy4, optimize=True)
        dt = np.einsum("bhwv,bchw->bchwv", wh, dy4, optimize=True)
        dwv = np.einsum("bchwuv,bchwv->bhwu", win, dt, optimize=True)
        dp = np.zeros((bsz, c, hh + 2 * r, ww + 2 * r), dtype=dy4.dtype)
        for u in range(n):
            for v in range(n):
                dp[:, :, u : u + hh, v : v + ww] += wv[:, None, :, :, u] * dt[..., v]
        dh = _replicate_pad_backward(dp, r, hh, ww)
        if field_unbatched:
            dwv, dwh = dwv.sum(axis=0), dwh.sum(axis=0)
        dk = SeparableKernelField(wv=dwv, wh=dwh)
    else:
        _, h_shape, win, kern, lifted, field_unbatched = cache
        dy4 = dy[None] if lifted else dy
        bsz, c, hh, ww = h_shape
        n = kern.shape[-1]
        r = n // 2
        dkern = np.einsum("bchwuv,bchw->bhwuv", win, dy4, optimize=True)
        dp = np.zeros((bsz, c, hh + 2 * r, ww + 2 * r), dtype=dy4.dtype)
        for u in range(n):
            for v in range(n):
                dp[:, :, u : u + hh, v : v + ww] += kern[:, None, :, :, u, v] * dy4
        dh = _replicate_pad_backward(dp, r, hh, ww)
        if field_unbatched:
            dkern = dkern.sum(axis=0)
        dk = DenseKernelField(w=dkern.reshape(dkern.shape[:-2] + (n * n,)))
    return (dh[0] if lifted else dh), dk


def mask_blend_forward(h, h_tilde, m):
    """out = m * h_tilde + (1 - m) * h, per channel; m validated to [0, 1]."""
    if isinstance(m, MaskField):
        m = m.m
    if h.shape != h_tilde.shape:
        raise ShapeError(
            f"content {h.shape} and refined {h_tilde.shape} must match",
            (h.shape, h_tilde.shape),
        )
    h4, lifted = _lift(h, 4)
    ht4, _ = _lift(h_tilde, 4)
    m4, _ = _lift(m, 3)
    if m4.shape[-2:] != h4.shape[2:]:
        raise ShapeError(
            f"mask extent {m4.shape[-2:]} != content {h4.shape[2:]}",
            (m4.shape, h4.shape),
        )
    _check_mask_range(m4)
    mb = m4[:, None]
    out = mb * ht4 + (1.0 - mb) * h4
    cache = (h4, ht4, m4, lifted, m.ndim == 2)
    return (out[0] if lifted else out), cache


def mask_blend_backward(dy, cache):
    h4, ht4, m4, lifted, mask_unbatched = cache
    dy4 = dy[None] if lifted else dy
    mb = m4[:, None]
    dh = (1.0 - mb) * dy4
    dht = mb * dy4
    dm = np.einsum("bchw->bhw", (ht4 - h4) * dy4)
    if mask_unbatched:
        dm = dm.sum(axis=0)
    return (dh[0] if lifted else dh), (dht[0] if lifted else dht), dm


def mask_activation_forward(raw):
    """Map raw activations to (tanh(raw) + 1) / 2, guaranteed inside [0, 1]."""
    t = np.tanh(raw)
    return 0.5 * (t + 1.0), t


def mask_activation_backward(dm, cache):
    return dm * 0.5 * (1.0 - cache * cache)


def fuse_pyramid_forward(pyramid, kernels, masks):
    """Refine every scale of a content pyramid independently.

    pyramid: list of content maps, coarsest first; kernels: matching list of
    kernel fields; masks: matching list of mask arrays (or MaskFields).
    """
    if not (len(pyramid) == len(kernels) == len(masks)):
        raise ValueError(
            f"scale count mismatch: {len(pyramid)} maps, {len(kernels)} kernel "
            f"fields, {len(masks)} masks"
        )
    refined, caches = [], []
    for s, (h, k, m) in enumerate(zip(pyramid, kernels, masks)):
        try:
            ht, conv_cache = adaptive_conv_forward(h, k)
            out, blend_cache = mask_blend_forward(h, ht, m)
        except (ShapeError, ValueError, TypeError) as exc:
            raise type(exc)(f"scale {s}: {exc}") from exc
        refined.append(out)
        caches.append((conv_cache, blend_cache))
    return refined, caches


def fuse_pyramid_backward(d_refined, caches):
    """Per-scale gradients: (d_pyramid, d_kernels, d_masks) lists."""
    d_pyramid, d_kernels, d_masks = [], [], []
    for dy, (conv_cache, blend_cache) in zip(d_refined, caches):
        dh_direct, dht, dm = mask_blend_backward(dy, blend_cache)
        dh_conv, dk = adaptive_conv_backward(dht, conv_cache)
        d_pyramid.append(dh_direct + dh_conv)
        d_kernels.append(dk)
        d_masks.append(dm)
    return d_pyramid, d_kernels, d_masks


def kernel_param_count(n: int, scales: int, mode: str, resolutions) -> dict:
    """Per-pixel and per-scale kernel value counts for one fusion stack."""
    resolutions = tuple(int(r) for r in resolutions)
    if len(resolutions) != scales:
        raise ValueError(f"{scales} scales but {len(resolutions)} resolutions")
    if mode == "dense":
        per_pixel = n * n
    elif mode == "separable":
        per_pixel = 2 * n
    else:
        raise ValueError(f"mode must be 'dense' or 'separable', got {mode!r}")
    per_scale = [per_pixel * r * r for r in resolutions]
    return {"per_pixel": per_pixel, "per_scale": per_scale, "total": sum(per_scale)}
