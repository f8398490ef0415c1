"""Differentiable operations.

Convolution is computed directly (a loop over kernel offsets accumulating
shifted products); there is no im2col buffer and no FFT. Bilinear resampling
uses half-pixel (align_corners=False) source coordinates, clamped at the
border. All backward passes are exact and deterministic.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, grad_enabled


def _result(data, parents, backward):
    needs = grad_enabled() and any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=needs, _parents=tuple(parents), _backward=backward if needs else None)


def conv2d(x: Tensor, w: Tensor, stride: int = 1, padding: int | None = None,
           bias: Tensor | None = None) -> Tensor:
    """Cross-correlation of ``x`` [N,C,H,W] with ``w`` [O,C,k,k]."""
    if stride not in (1, 2):
        raise ValueError(f"stride must be 1 or 2, got {stride}")
    n, ci, h, wd = x.shape
    co, ci_w, kh, kw = w.shape
    if ci != ci_w:
        raise ValueError(f"channel mismatch: input has {ci}, weight expects {ci_w}")
    if kh != kw:
        raise ValueError("only square kernels are supported")
    pad = kh // 2 if padding is None else int(padding)
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ValueError(f"convolution output collapsed to {ho}x{wo}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    acc = None
    for dy in range(kh):
        for dx in range(kw):
            xs = xp[:, :, dy:dy + stride * ho:stride, dx:dx + stride * wo:stride]
            part = np.tensordot(xs, w.data[:, :, dy, dx], axes=([1], [1]))  # [N,Ho,Wo,O]
            acc = part if acc is None else acc + part
    out = np.ascontiguousarray(np.moveaxis(acc, 3, 1))
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    parents = (x, w) if bias is None else (x, w, bias)

    def backward(go):
        gop = np.moveaxis(go, 1, 3)  # [N,Ho,Wo,O]
        if w.requires_grad:
            gw = np.empty_like(w.data)
        gxp = np.zeros_like(xp) if x.requires_grad else None
        for dy in range(kh):
            for dx in range(kw):
                xs = xp[:, :, dy:dy + stride * ho:stride, dx:dx + stride * wo:stride]
                if w.requires_grad:
                    gw[:, :, dy, dx] = np.tensordot(gop, xs, axes=([0, 1, 2], [0, 2, 3]))
                if gxp is not None:
                    gslice = np.tensordot(gop, w.data[:, :, dy, dx], axes=([3], [0]))  # [N,Ho,Wo,C]
                    gxp[:, :, dy:dy + stride * ho:stride, dx:dx + stride * wo:stride] += np.moveaxis(gslice, 3, 1)
        if w.requires_grad:
            w.accumulate_grad(gw)
        if gxp is not None:
            gx = gxp[:, :, pad:pad + h, pad:pad + wd] if pad else gxp
            x.accumulate_grad(gx)
        if bias is not None and bias.requires_grad:
            bias.accumulate_grad(go.sum(axis=(0, 2, 3)))

    return _result(out, parents, backward)


def _lin_table(n_in: int, factor: int):
    """Half-pixel source indices/weights for 1-D bilinear scaling by ``factor``."""
    src = (np.arange(n_in * factor, dtype=np.float64) + 0.5) / factor - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    frac = src - i0
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, frac


def bilinear_upsample(x: Tensor, factor: int) -> Tensor:
    """Scale the two trailing axes of ``x`` [N,C,H,W] by an integer factor."""
    if factor not in (2, 4, 8):
        raise ValueError(f"unsupported upsample factor {factor}")
    n, c, h, w = x.shape
    y0, y1, fy = _lin_table(h, factor)
    x0, x1, fx = _lin_table(w, factor)
    fy4 = fy.astype(x.data.dtype)[None, None, :, None]
    fx4 = fx.astype(x.data.dtype)[None, None, None, :]

    rows = x.data[:, :, y0, :] * (1 - fy4) + x.data[:, :, y1, :] * fy4
    out = rows[:, :, :, x0] * (1 - fx4) + rows[:, :, :, x1] * fx4

    def backward(go):
        if not x.requires_grad:
            return
        # scatter columns back, then rows; first-axis np.add.at is deterministic
        grows = np.zeros((n, c, h * factor, w), dtype=go.dtype)
        gt = np.moveaxis(grows, 3, 0)
        np.add.at(gt, x0, np.moveaxis(go * (1 - fx4), 3, 0))
        np.add.at(gt, x1, np.moveaxis(go * fx4, 3, 0))
        gx = np.zeros_like(x.data)
        gt = np.moveaxis(gx, 2, 0)
        np.add.at(gt, y0, np.moveaxis(grows * (1 - fy4), 2, 0))
        np.add.at(gt, y1, np.moveaxis(grows * fy4, 2, 0))
        x.accumulate_grad(gx)

    return _result(out, (x,), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = np.where(mask, x.data, 0)

    def backward(go):
        if x.requires_grad:
            x.accumulate_grad(go * mask)

    return _result(out, (x,), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"add needs matching shapes, got {a.shape} vs {b.shape}")

    def backward(go):
        if a.requires_grad:
            a.accumulate_grad(go)
        if b.requires_grad:
            b.accumulate_grad(go)

    return _result(a.data + b.data, (a, b), backward)


def scale(x: Tensor, factor: float) -> Tensor:
    factor = float(factor)

    def backward(go):
        if x.requires_grad:
            x.accumulate_grad(go * factor)

    return _result(x.data * factor, (x,), backward)


def concat_channels(tensors: list[Tensor]) -> Tensor:
    out = np.concatenate([t.data for t in tensors], axis=1)
    splits = np.cumsum([t.shape[1] for t in tensors])[:-1]

    def backward(go):
        for t, g in zip(tensors, np.split(go, splits, axis=1)):
            if t.requires_grad:
                t.accumulate_grad(g)

    return _result(out, tuple(tensors), backward)


def channel_norm(x: Tensor, scale_p: Tensor, shift_p: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each sample's channels over the spatial dims, then apply a
    learnable per-channel affine. Statistics are per sample, so the op behaves
    identically no matter which sub-network is active."""
    mu = x.data.mean(axis=(2, 3), keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=(2, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * scale_p.data[None, :, None, None] + shift_p.data[None, :, None, None]

    def backward(go):
        if shift_p.requires_grad:
            shift_p.accumulate_grad(go.sum(axis=(0, 2, 3)))
        if scale_p.requires_grad:
            scale_p.accumulate_grad((go * xhat).sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dxhat = go * scale_p.data[None, :, None, None]
            m1 = dxhat.mean(axis=(2, 3), keepdims=True)
            m2 = (dxhat * xhat).mean(axis=(2, 3), keepdims=True)
            x.accumulate_grad(inv * (dxhat - m1 - xhat * m2))

    return _result(out, (x, scale_p, shift_p), backward)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross entropy; classes on axis 1, labels are integer class ids."""
    labels = np.asarray(labels)
    if labels.shape != logits.shape[:1] + logits.shape[2:]:
        raise ValueError(f"labels shape {labels.shape} does not match logits {logits.shape}")
    m = logits.data.max(axis=1, keepdims=True)
    z = logits.data - m
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True)) + m
    logp = logits.data - lse
    picked = np.take_along_axis(logp, labels[:, None], axis=1)
    count = picked.size
    loss = -picked.sum() / count

    def backward(go):
        if logits.requires_grad:
            g = np.exp(logp)
            np.put_along_axis(g, labels[:, None],
                              np.take_along_axis(g, labels[:, None], axis=1) - 1, axis=1)
            logits.accumulate_grad(g * (float(go) / count))

    return _result(np.asarray(loss, dtype=logits.data.dtype), (logits,), backward)


def mse(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"mse needs matching shapes, got {a.shape} vs {b.shape}")
    diff = a.data - b.data
    loss = (diff * diff).mean()

    def backward(go):
        g = diff * (2.0 * float(go) / diff.size)
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(-g)

    return _result(np.asarray(loss, dtype=a.data.dtype), (a, b), backward)
