"""Slow, obviously-correct reference convolutions.

Everything else in the package is checked against this module, so it is
written for auditability, not speed: one scaled slice-accumulate per
kernel tap, in a fixed order (u, then v, then input channel ascending).
The fixed order makes f32 results reproducible bit-for-bit run to run.

Stride support is limited to 1 and 2 (stems and downsampling); dilation
is excluded.  All reads outside the input are zero, matching
:func:`shiftlab.tensor.get_zero_extended`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, Tensor


@dataclass(frozen=True)
class ConvParams:
    kernel_h: int
    kernel_w: int
    pad_h: int = 0
    pad_w: int = 0
    stride: int = 1
    groups: int = 1

    def __post_init__(self):
        if self.kernel_h < 1 or self.kernel_w < 1:
            raise ShapeError("kernel extents must be positive")
        if self.pad_h < 0 or self.pad_w < 0:
            raise ShapeError("padding must be non-negative")
        if self.stride not in (1, 2):
            raise ShapeError("stride limited to 1 or 2")
        if self.groups < 1:
            raise ShapeError("groups must be positive")


def _as_nd(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def _pad4(pad) -> tuple[int, int, int, int]:
    """Normalize pad spec to (top, bottom, left, right)."""
    if isinstance(pad, int):
        return pad, pad, pad, pad
    (pt, pb), (pl, pr) = pad
    return int(pt), int(pb), int(pl), int(pr)


def _zero_pad(x: np.ndarray, pt: int, pb: int, pl: int, pr: int) -> np.ndarray:
    c, h, w = x.shape
    out = np.zeros((c, h + pt + pb, w + pl + pr), dtype=x.dtype)
    out[:, pt:pt + h, pl:pl + w] = x
    return out


def _corr_plane(xpad: np.ndarray, filt: np.ndarray, out_h: int, out_w: int,
                stride: int = 1) -> np.ndarray:
    """Correlate one padded plane with one filter; accumulate tap by tap."""
    kh, kw = filt.shape
    acc = np.zeros((out_h, out_w), dtype=xpad.dtype)
    for u in range(kh):
        for v in range(kw):
            acc += filt[u, v] * xpad[u:u + stride * out_h:stride,
                                     v:v + stride * out_w:stride]
    return acc


def conv2d_ref(x: Tensor, w, p: ConvParams) -> Tensor:
    """Grouped 2-D correlation with zero padding.

    w has shape (out_channels, in_channels_per_group, kh, kw); accumulation
    runs in the array dtype (f64 stays f64 throughout).
    """
    xa = _as_nd(x)
    wa = _as_nd(w).astype(xa.dtype, copy=False)
    if xa.ndim == 4:
        outs = [conv2d_ref(Tensor(plane), wa, p).data for plane in xa]
        return Tensor(np.stack(outs))
    if xa.ndim != 3:
        raise ShapeError(f"expected (C, H, W) input, got {xa.shape}")
    c_in, h, wdt = xa.shape
    if wa.ndim != 4:
        raise ShapeError(f"expected 4-D filter bank, got {wa.shape}")
    o_out, cpg, kh, kw = wa.shape
    if kh != p.kernel_h or kw != p.kernel_w:
        raise ShapeError("filter extents disagree with ConvParams")
    if c_in % p.groups or o_out % p.groups:
        raise ShapeError("channels not divisible by groups")
    if cpg != c_in // p.groups:
        raise ShapeError("filter in-channel extent disagrees with groups")
    out_h = (h + 2 * p.pad_h - kh) // p.stride + 1
    out_w = (wdt + 2 * p.pad_w - kw) // p.stride + 1
    if out_h < 1 or out_w < 1:
        raise ShapeError("kernel larger than padded input")

    xpad = _zero_pad(xa, p.pad_h, p.pad_h, p.pad_w, p.pad_w)
    out = np.zeros((o_out, out_h, out_w), dtype=xa.dtype)
    opg = o_out // p.groups
    for o in range(o_out):
        g = o // opg
        acc = out[o]
        for u in range(kh):
            for v in range(kw):
                for cl in range(cpg):
                    ci = g * cpg + cl
                    acc += wa[o, cl, u, v] * xpad[ci, u:u + p.stride * out_h:p.stride,
                                                  v:v + p.stride * out_w:p.stride]
    return Tensor(out)


def strip_conv_ref(x: Tensor, k, pad_h: int | None = None,
                   pad_w: int | None = None) -> Tensor:
    """Depthwise "same" convolution with a per-channel (kh, kw) kernel.

    Default padding kh//2, kw//2 keeps the spatial size; even kernel
    extents require explicit pads because "same" is ambiguous there.
    """
    xa = _as_nd(x)
    ka = _as_nd(k).astype(xa.dtype, copy=False)
    if xa.ndim != 3 or ka.ndim != 3:
        raise ShapeError("strip_conv_ref wants (C,H,W) input and (C,kh,kw) kernel")
    if ka.shape[0] != xa.shape[0]:
        raise ShapeError("kernel channel count disagrees with input")
    kh, kw = ka.shape[1], ka.shape[2]
    if pad_h is None or pad_w is None:
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError("even kernel extent needs explicit pads")
        pad_h = kh // 2 if pad_h is None else pad_h
        pad_w = kw // 2 if pad_w is None else pad_w
    c, h, w = xa.shape
    out_h = h + 2 * pad_h - kh + 1
    out_w = w + 2 * pad_w - kw + 1
    if out_h < 1 or out_w < 1:
        raise ShapeError("kernel larger than padded input")
    xpad = _zero_pad(xa, pad_h, pad_h, pad_w, pad_w)
    out = np.zeros((c, out_h, out_w), dtype=xa.dtype)
    for ci in range(c):
        out[ci] = _corr_plane(xpad[ci], ka[ci], out_h, out_w)
    return Tensor(out)


def fanout_conv(x: Tensor, w, pad) -> Tensor:
    """One-input-to-many-outputs depthwise convolution.

    w has shape (C, g, N, N); output channel c*g + k is x[c] correlated
    with w[c, k].  `pad` is an int (symmetric) or ((top, bottom),
    (left, right)), which the shift-composed modes use to evaluate the
    maps on enlarged working grids.
    """
    xa = _as_nd(x)
    wa = _as_nd(w).astype(xa.dtype, copy=False)
    if xa.ndim != 3 or wa.ndim != 4:
        raise ShapeError("fanout_conv wants (C,H,W) input and (C,g,N,N) bank")
    c, h, wdt = xa.shape
    if wa.shape[0] != c:
        raise ShapeError("bank channel count disagrees with input")
    g, kh, kw = wa.shape[1], wa.shape[2], wa.shape[3]
    if g < 1:
        raise ShapeError("fan-out must be >= 1")
    pt, pb, pl, pr = _pad4(pad)
    out_h = h + pt + pb - kh + 1
    out_w = wdt + pl + pr - kw + 1
    if out_h < 1 or out_w < 1:
        raise ShapeError("kernel larger than padded input")
    xpad = _zero_pad(xa, pt, pb, pl, pr)
    out = np.zeros((c * g, out_h, out_w), dtype=xa.dtype)
    for ci in range(c):
        for k in range(g):
            out[ci * g + k] = _corr_plane(xpad[ci], wa[ci, k], out_h, out_w)
    return Tensor(out)
