"""Differentiable operations: arithmetic, shape ops, conv/pool kernels,
normalizations, activations, attention, dropout and classification losses.

Every function builds its result with numpy, then registers a backward
closure on the active tape via ``record``.  Convolution and pooling use an
n-dimensional im2col built on stride tricks; the col buffer only outlives
the forward call while a tape is recording, so full-size eval passes stay
inside a small memory envelope.
"""
from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import as_strided
from scipy.special import erf

from .tensor import Parameter, ShapeError, Tensor, record

__all__ = [
    "add", "sub", "mul", "div", "neg", "matmul", "reshape", "transpose",
    "concat", "split", "sum_", "mean", "conv", "maxpool", "avgpool",
    "global_avgpool", "batchnorm", "layernorm", "relu", "gelu", "sigmoid",
    "softmax", "linear", "mhsa", "dropout", "cross_entropy", "bce_loss",
]


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, extent in enumerate(shape):
        if extent == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _binary(a, b, fwd, bwd_a, bwd_b) -> Tensor:
    from .tensor import as_tensor
    if not isinstance(a, Tensor):
        a = as_tensor(a, b)
    if not isinstance(b, Tensor):
        b = as_tensor(b, a)
    out = Tensor(fwd(a.data, b.data))

    def backward_fn(g):
        ga = _unbroadcast(bwd_a(g, a.data, b.data), a.shape) if a.requires_grad else None
        gb = _unbroadcast(bwd_b(g, a.data, b.data), b.shape) if b.requires_grad else None
        return ga, gb

    return record(out, (a, b), backward_fn)


def add(a, b):
    return _binary(a, b, np.add, lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b):
    return _binary(a, b, np.subtract, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b):
    return _binary(a, b, np.multiply, lambda g, x, y: g * y, lambda g, x, y: g * x)


def div(a, b):
    return _binary(a, b, np.divide,
                   lambda g, x, y: g / y,
                   lambda g, x, y: -g * x / (y * y))


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)
    return record(out, (a,), lambda g: (-g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul operands must have rank >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    out = Tensor(np.matmul(a.data, b.data))

    def backward_fn(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return record(out, (a, b), backward_fn)


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.data.reshape(shape))
    return record(out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = Tensor(a.data.transpose(axes))
    return record(out, (a,), lambda g: (g.transpose(inverse),))


def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ShapeError("concat of no parts")
    ref = parts[0].shape
    cax = axis % len(ref)
    for p in parts[1:]:
        if p.ndim != len(ref):
            raise ShapeError(f"concat rank mismatch: {p.shape} vs {ref}")
        for ax in range(len(ref)):
            if ax != cax and p.shape[ax] != ref[ax]:
                raise ShapeError(
                    f"concat extent mismatch on axis {ax}: {p.shape} vs {ref}")
    out = Tensor(np.concatenate([p.data for p in parts], axis=cax))
    boundaries = np.cumsum([p.shape[cax] for p in parts])[:-1]

    def backward_fn(g):
        pieces = np.split(g, boundaries, axis=cax)
        return tuple(piece if p.requires_grad else None
                     for p, piece in zip(parts, pieces))

    return record(out, tuple(parts), backward_fn)


def split(a: Tensor, sizes: Sequence[int], axis: int) -> list[Tensor]:
    """Slice ``a`` into consecutive chunks along ``axis`` (inverse of concat)."""
    if sum(sizes) != a.shape[axis]:
        raise ShapeError(f"split sizes {sizes} do not cover axis extent {a.shape[axis]}")
    outs = []
    start = 0
    for size in sizes:
        sl = [slice(None)] * a.ndim
        sl[axis] = slice(start, start + size)
        sl = tuple(sl)
        piece = Tensor(a.data[sl].copy())

        def backward_fn(g, sl=sl):
            full = np.zeros_like(a.data)
            full[sl] = g
            return (full,)

        outs.append(record(piece, (a,), backward_fn))
        start += size
    return outs


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def backward_fn(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return record(out, (a,), backward_fn)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.size if axis is None else np.prod(
        [a.shape[ax] for ax in np.atleast_1d(axis)])
    out = Tensor(a.data.mean(axis=axis, keepdims=keepdims))

    def backward_fn(g):
        if axis is None:
            return (np.broadcast_to(g / count, a.shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return record(out, (a,), backward_fn)


# --------------------------------------------------------------------------
# convolution / pooling
# --------------------------------------------------------------------------

def _out_extent(ext: int, k: int, stride: int, padding: int) -> int:
    return (ext + 2 * padding - k) // stride + 1


def _windows(padded: np.ndarray, ksizes, stride) -> np.ndarray:
    """Strided view (B, C, *K, *O) over spatial windows of a padded array."""
    b, c = padded.shape[:2]
    sp = padded.shape[2:]
    outs = tuple((sp[i] - ksizes[i]) // stride + 1 for i in range(len(sp)))
    strides = padded.strides
    view_shape = (b, c) + tuple(ksizes) + outs
    view_strides = strides[:2] + strides[2:] + tuple(s * stride for s in strides[2:])
    return as_strided(padded, shape=view_shape, strides=view_strides), outs


def _im2col(x: np.ndarray, k: int, stride: int, padding: int):
    """(B, C, *sp) -> (B, C*k^d, n_out) column matrix plus output extents."""
    dims = x.ndim - 2
    if padding:
        pad = ((0, 0), (0, 0)) + ((padding, padding),) * dims
        x = np.pad(x, pad)
    view, outs = _windows(x, (k,) * dims, stride)
    b, c = x.shape[:2]
    col = np.ascontiguousarray(view).reshape(b, c * k ** dims, int(np.prod(outs)))
    return col, outs


def _col2im(dcol: np.ndarray, x_shape, k: int, stride: int, padding: int) -> np.ndarray:
    """Scatter-add a column gradient back onto the (unpadded) input shape."""
    b, c = x_shape[:2]
    sp = x_shape[2:]
    dims = len(sp)
    padded_sp = tuple(s + 2 * padding for s in sp)
    outs = tuple(_out_extent(s, k, stride, padding) for s in sp)
    dx = np.zeros((b, c) + padded_sp, dtype=dcol.dtype)
    dcol = dcol.reshape((b, c) + (k,) * dims + outs)
    for kidx in np.ndindex(*(k,) * dims):
        sl = tuple(slice(kidx[i], kidx[i] + stride * outs[i], stride)
                   for i in range(dims))
        dx[(slice(None), slice(None)) + sl] += dcol[(slice(None), slice(None)) + kidx]
    if padding:
        crop = tuple(slice(padding, padding + s) for s in sp)
        dx = dx[(slice(None), slice(None)) + crop]
    return dx


def _check_spatial_input(x: Tensor, dims: int, opname: str):
    if x.ndim != dims + 2:
        raise ShapeError(
            f"{opname} expects (batch, channels, {dims} spatial axes); "
            f"got rank {x.ndim}")


def conv(x: Tensor, weight: Parameter, bias: Optional[Parameter],
         stride: int = 1, padding: int = 0, dims: Optional[int] = None) -> Tensor:
    """N-d cross-correlation with stride/zero-padding, channels-first layout."""
    if dims is None:
        dims = weight.ndim - 2
    _check_spatial_input(x, dims, "conv")
    if weight.ndim != dims + 2:
        raise ShapeError(f"conv weight rank {weight.ndim} does not match dims={dims}")
    if stride < 1 or padding < 0:
        raise ShapeError("conv requires stride >= 1 and padding >= 0")
    out_ch, in_ch = weight.shape[:2]
    k = weight.shape[2]
    if any(e != k for e in weight.shape[2:]):
        raise ShapeError(f"conv kernel must be cubic, got {weight.shape[2:]}")
    if x.shape[1] != in_ch:
        raise ShapeError(
            f"conv channel axis mismatch: input has {x.shape[1]}, weight expects {in_ch}")
    for ax, ext in enumerate(x.shape[2:]):
        if _out_extent(ext, k, stride, padding) < 1:
            raise ShapeError(
                f"conv produces non-positive extent on spatial axis {ax} "
                f"(input {ext}, kernel {k}, stride {stride}, padding {padding})")

    b = x.shape[0]
    col, outs = _im2col(x.data, k, stride, padding)
    w2 = weight.data.reshape(out_ch, -1)
    y = np.matmul(w2, col)
    if bias is not None:
        y = y + bias.data.reshape(1, out_ch, 1)
    out = Tensor(y.reshape((b, out_ch) + tuple(outs)))

    def backward_fn(g, col=col):
        g2 = g.reshape(b, out_ch, -1)
        gx = gw = gb = None
        if bias is not None and bias.requires_grad:
            gb = g2.sum(axis=(0, 2))
        if weight.requires_grad:
            gw = np.matmul(g2, col.transpose(0, 2, 1)).sum(axis=0)
            gw = gw.reshape(weight.shape)
        if x.requires_grad:
            dcol = np.matmul(w2.T, g2)
            gx = _col2im(dcol, x.shape, k, stride, padding)
        return (gx, gw, gb) if bias is not None else (gx, gw)

    inputs = (x, weight, bias) if bias is not None else (x, weight)
    return record(out, inputs, backward_fn)


def maxpool(x: Tensor, k: int, stride: int, padding: int = 0,
            dims: Optional[int] = None) -> Tensor:
    """Windowed maximum; backward routes to the first argmax in row-major order."""
    if dims is None:
        dims = x.ndim - 2
    _check_spatial_input(x, dims, "maxpool")
    if k < 1 or stride < 1:
        raise ShapeError("maxpool requires k >= 1 and stride >= 1")
    for ax, ext in enumerate(x.shape[2:]):
        if ext + 2 * padding < k:
            raise ShapeError(
                f"maxpool window {k} larger than padded input on spatial axis {ax}")
    b, c = x.shape[:2]
    neg = np.array(-np.inf, dtype=x.dtype)
    padded = np.pad(x.data, ((0, 0), (0, 0)) + ((padding, padding),) * dims,
                    constant_values=neg) if padding else x.data
    view, outs = _windows(padded, (k,) * dims, stride)
    n_out = int(np.prod(outs))
    flat = np.ascontiguousarray(view).reshape(b, c, k ** dims, n_out)
    arg = flat.argmax(axis=2)
    out = Tensor(np.take_along_axis(flat, arg[:, :, None, :], axis=2)
                 .squeeze(2).reshape((b, c) + tuple(outs)))

    padded_sp = padded.shape[2:]

    def backward_fn(g):
        g2 = g.reshape(b, c, n_out)
        kidx = np.unravel_index(arg, (k,) * dims)
        oidx = np.unravel_index(np.arange(n_out), outs)
        flat_pos = np.zeros((b, c, n_out), dtype=np.int64)
        mult = 1
        for ax in range(dims - 1, -1, -1):
            coord = kidx[ax] + oidx[ax][None, None, :] * stride
            flat_pos += coord * mult
            mult *= padded_sp[ax]
        plane = int(np.prod(padded_sp))
        base = (np.arange(b * c) * plane).reshape(b, c, 1)
        dpad = np.zeros(b * c * plane, dtype=g.dtype)
        np.add.at(dpad, (flat_pos + base).ravel(), g2.ravel())
        dpad = dpad.reshape((b, c) + padded_sp)
        if padding:
            crop = tuple(slice(padding, padding + e) for e in x.shape[2:])
            dpad = dpad[(slice(None), slice(None)) + crop]
        return (dpad,)

    return record(out, (x,), backward_fn)


def avgpool(x: Tensor, k: int, stride: int, dims: Optional[int] = None) -> Tensor:
    """Windowed mean with divisor k^dims.

    Axes shorter than ``k`` clamp the window to the full extent (divisor uses
    the actual window size), so degenerate extent-1 axes pass through instead
    of erroring; full windows behave exactly as the strict definition.
    """
    if dims is None:
        dims = x.ndim - 2
    _check_spatial_input(x, dims, "avgpool")
    if k < 1 or stride < 1:
        raise ShapeError("avgpool requires k >= 1 and stride >= 1")
    ksizes = tuple(min(k, ext) for ext in x.shape[2:])
    b, c = x.shape[:2]
    view, outs = _windows(x.data, ksizes, stride)
    n_out = int(np.prod(outs))
    divisor = int(np.prod(ksizes))
    flat = np.ascontiguousarray(view).reshape(b, c, divisor, n_out)
    out = Tensor(flat.mean(axis=2).reshape((b, c) + tuple(outs)))

    def backward_fn(g):
        dcol = np.broadcast_to(
            (g.reshape(b, c, 1, n_out) / divisor), (b, c, divisor, n_out)).copy()
        dcol = dcol.reshape((b, c) + ksizes + outs)
        dx = np.zeros_like(x.data)
        for kidx in np.ndindex(*ksizes):
            sl = tuple(slice(kidx[i], kidx[i] + stride * outs[i], stride)
                       for i in range(dims))
            dx[(slice(None), slice(None)) + sl] += dcol[(slice(None), slice(None)) + kidx]
        return (dx,)

    return record(out, (x,), backward_fn)


def global_avgpool(x: Tensor) -> Tensor:
    """Mean over every spatial position, one value per channel: (B, C)."""
    if x.ndim < 3:
        raise ShapeError("global_avgpool needs at least one spatial axis")
    axes = tuple(range(2, x.ndim))
    n = int(np.prod(x.shape[2:]))
    out = Tensor(x.data.mean(axis=axes))

    def backward_fn(g):
        return (np.broadcast_to(g.reshape(g.shape + (1,) * len(axes)) / n,
                                x.shape).copy(),)

    return record(out, (x,), backward_fn)


# --------------------------------------------------------------------------
# normalization
# --------------------------------------------------------------------------

def batchnorm(x: Tensor, scale: Parameter, shift: Parameter,
              running_mean: np.ndarray, running_var: np.ndarray,
              mode: str, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-channel batch normalization over batch and spatial axes.

    Train mode normalizes by biased batch statistics and updates the running
    buffers in place (running variance uses the unbiased estimate); eval mode
    applies the running statistics.
    """
    if x.ndim < 2:
        raise ShapeError("batchnorm input needs a channel axis")
    ch = x.shape[1]
    if scale.shape != (ch,) or shift.shape != (ch,):
        raise ShapeError(f"batchnorm affine parameters must have shape ({ch},)")
    if x.shape[0] == 0:
        raise ShapeError("batchnorm on an empty batch")
    axes = (0,) + tuple(range(2, x.ndim))
    bshape = (1, ch) + (1,) * (x.ndim - 2)

    if mode == "train":
        m = x.data.mean(axis=axes)
        v = x.data.var(axis=axes)
        n = x.size // ch
        unbiased = v * n / (n - 1) if n > 1 else v
        running_mean *= (1.0 - momentum)
        running_mean += momentum * m
        running_var *= (1.0 - momentum)
        running_var += momentum * unbiased
        inv = 1.0 / np.sqrt(v + eps)
        xhat = (x.data - m.reshape(bshape)) * inv.reshape(bshape)
        out = Tensor(xhat * scale.data.reshape(bshape) + shift.data.reshape(bshape))

        def backward_fn(g):
            gs = gh = gx = None
            if scale.requires_grad:
                gs = (g * xhat).sum(axis=axes)
            if shift.requires_grad:
                gh = g.sum(axis=axes)
            if x.requires_grad:
                dxhat = g * scale.data.reshape(bshape)
                mean_dxhat = dxhat.mean(axis=axes).reshape(bshape)
                mean_dxhat_x = (dxhat * xhat).mean(axis=axes).reshape(bshape)
                gx = (dxhat - mean_dxhat - xhat * mean_dxhat_x) * inv.reshape(bshape)
            return gx, gs, gh

        return record(out, (x, scale, shift), backward_fn)

    if mode != "eval":
        raise ValueError(f"batchnorm mode must be 'train' or 'eval', got {mode!r}")
    inv = 1.0 / np.sqrt(running_var + eps)
    xhat = (x.data - running_mean.reshape(bshape)) * inv.reshape(bshape)
    out = Tensor(xhat * scale.data.reshape(bshape) + shift.data.reshape(bshape))

    def backward_fn(g):
        gs = gh = gx = None
        if scale.requires_grad:
            gs = (g * xhat).sum(axis=axes)
        if shift.requires_grad:
            gh = g.sum(axis=axes)
        if x.requires_grad:
            gx = g * (scale.data * inv).reshape(bshape)
        return gx, gs, gh

    return record(out, (x, scale, shift), backward_fn)


def layernorm(x: Tensor, scale: Parameter, shift: Parameter,
              eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    d = x.shape[-1]
    if scale.shape != (d,) or shift.shape != (d,):
        raise ShapeError(f"layernorm affine parameters must have shape ({d},)")
    m = x.data.mean(axis=-1, keepdims=True)
    v = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(v + eps)
    xhat = (x.data - m) * inv
    out = Tensor(xhat * scale.data + shift.data)

    def backward_fn(g):
        gs = gh = gx = None
        if scale.requires_grad:
            gs = (g * xhat).reshape(-1, d).sum(axis=0)
        if shift.requires_grad:
            gh = g.reshape(-1, d).sum(axis=0)
        if x.requires_grad:
            dxhat = g * scale.data
            gx = (dxhat - dxhat.mean(axis=-1, keepdims=True)
                  - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)) * inv
        return gx, gs, gh

    return record(out, (x, scale, shift), backward_fn)


# --------------------------------------------------------------------------
# activations
# --------------------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0))
    return record(out, (x,), lambda g: (g * (x.data > 0),))


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x: Tensor) -> Tensor:
    """Exact erf formulation: x * Phi(x)."""
    phi = (0.5 * (1.0 + erf(x.data * _INV_SQRT2))).astype(x.dtype)
    out = Tensor(x.data * phi)

    def backward_fn(g):
        pdf = (np.exp(-0.5 * x.data * x.data) * _INV_SQRT_2PI).astype(x.dtype)
        return (g * (phi + x.data * pdf),)

    return record(out, (x,), backward_fn)


def sigmoid(x: Tensor) -> Tensor:
    # split on sign to keep exp() bounded
    y = np.where(x.data >= 0,
                 1.0 / (1.0 + np.exp(-np.abs(x.data))),
                 np.exp(-np.abs(x.data)) / (1.0 + np.exp(-np.abs(x.data))))
    out = Tensor(y.astype(x.dtype))
    return record(out, (x,), lambda g: (g * out.data * (1.0 - out.data),))


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis, computed with max subtraction."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y)

    def backward_fn(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return ((g - dot) * y,)

    return record(out, (x,), backward_fn)


def activation(kind: str, x: Tensor) -> Tensor:
    table = {"relu": relu, "gelu": gelu, "sigmoid": sigmoid, "softmax": softmax}
    if kind not in table:
        raise ValueError(f"unknown activation {kind!r}")
    return table[kind](x)


# --------------------------------------------------------------------------
# linear / attention / dropout
# --------------------------------------------------------------------------

def linear(x: Tensor, weight: Parameter, bias: Optional[Parameter] = None) -> Tensor:
    """Affine map y = x W^T + b for weight of shape (out, in)."""
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(
            f"linear input dim {x.shape[-1]} does not match weight in-dim {weight.shape[1]}")
    y = np.matmul(x.data, weight.data.T)
    if bias is not None:
        y = y + bias.data
    out = Tensor(y)

    def backward_fn(g):
        gx = gw = gb = None
        if x.requires_grad:
            gx = np.matmul(g, weight.data)
        if weight.requires_grad:
            gw = np.matmul(g.reshape(-1, g.shape[-1]).T,
                           x.data.reshape(-1, x.shape[-1]))
        if bias is not None and bias.requires_grad:
            gb = g.reshape(-1, g.shape[-1]).sum(axis=0)
        return (gx, gw, gb) if bias is not None else (gx, gw)

    inputs = (x, weight, bias) if bias is not None else (x, weight)
    return record(out, inputs, backward_fn)


def mhsa(tokens: Tensor, heads: int, wq: Parameter, wk: Parameter,
         wv: Parameter, wo: Parameter) -> Tensor:
    """Multi-head self-attention over a (B, N, d) or (N, d) token stack.

    Per head: Softmax(Q K^T / sqrt(d/heads)) V; heads are re-concatenated and
    passed through the output projection.  Composed entirely from taped
    primitives, so the backward pass needs no dedicated code.
    """
    squeeze = tokens.ndim == 2
    if squeeze:
        tokens = reshape(tokens, (1,) + tokens.shape)
    if tokens.ndim != 3:
        raise ShapeError("mhsa expects token stacks of rank 2 or 3")
    b, n, d = tokens.shape
    if d % heads != 0:
        raise ShapeError(f"embedding dim {d} not divisible by {heads} heads")
    dh = d // heads

    def project(w):
        p = matmul(tokens, w)                       # (B, N, d)
        p = reshape(p, (b, n, heads, dh))
        return transpose(p, (0, 2, 1, 3))           # (B, h, N, dh)

    q, k_, v = project(wq), project(wk), project(wv)
    scores = matmul(q, transpose(k_, (0, 1, 3, 2)))
    scores = mul(scores, 1.0 / math.sqrt(dh))
    attn = softmax(scores)
    ctx = matmul(attn, v)                           # (B, h, N, dh)
    ctx = reshape(transpose(ctx, (0, 2, 1, 3)), (b, n, d))
    out = matmul(ctx, wo)
    if squeeze:
        out = reshape(out, (n, d))
    return out


def dropout(x: Tensor, p: float, mode: str,
            rng: Optional[np.random.Generator] = None) -> Tensor:
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if mode == "eval" or p == 0.0:
        return x
    if mode != "train":
        raise ValueError(f"dropout mode must be 'train' or 'eval', got {mode!r}")
    if rng is None:
        raise ValueError("dropout in train mode needs an rng")
    keep = (rng.random(x.shape) >= p).astype(x.dtype)
    scale = 1.0 / (1.0 - p)
    out = Tensor(x.data * keep * scale)
    return record(out, (x,), lambda g: (g * keep * scale,))


# --------------------------------------------------------------------------
# losses
# --------------------------------------------------------------------------

def cross_entropy(logits: Tensor, targets, class_weights=None,
                  label_smoothing: float = 0.0) -> Tensor:
    """Mean softmax cross-entropy over a batch of integer targets.

    Label smoothing maps the one-hot target to y(1-eps) + eps/K; per-sample
    losses are weighted by the target class weight and normalized by the
    summed weights (plain mean when no weights are given).
    """
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy expects (batch, classes) logits, got {logits.shape}")
    b, k = logits.shape
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if targets.shape[0] != b:
        raise ShapeError(f"{targets.shape[0]} targets for batch of {b}")
    if targets.min(initial=0) < 0 or targets.max(initial=0) >= k:
        raise ValueError(f"target index out of range for {k} classes")

    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    y = np.full((b, k), label_smoothing / k, dtype=logits.dtype)
    y[np.arange(b), targets] += 1.0 - label_smoothing
    if class_weights is not None:
        w = np.asarray(class_weights, dtype=logits.dtype)[targets]
    else:
        w = np.ones(b, dtype=logits.dtype)
    wsum = w.sum()
    per_sample = -(y * logp).sum(axis=1)
    out = Tensor(np.asarray((per_sample * w).sum() / wsum, dtype=logits.dtype))

    def backward_fn(g):
        if not logits.requires_grad:
            return (None,)
        p = np.exp(logp)
        return (g * (p - y) * (w / wsum)[:, None],)

    return record(out, (logits,), backward_fn)


_BCE_CLAMP = 1e-7


def bce_loss(probs: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy on probabilities clamped to [1e-7, 1-1e-7]."""
    targets = np.asarray(targets, dtype=probs.dtype).reshape(-1)
    flat = probs.data.reshape(-1)
    if flat.shape != targets.shape:
        raise ShapeError(f"{targets.shape[0]} targets for {flat.shape[0]} probabilities")
    if np.any((targets != 0) & (targets != 1)):
        raise ValueError("bce targets must be 0 or 1")
    p = np.clip(flat, _BCE_CLAMP, 1.0 - _BCE_CLAMP)
    n = flat.shape[0]
    out = Tensor(np.asarray(
        -(targets * np.log(p) + (1.0 - targets) * np.log(1.0 - p)).mean(),
        dtype=probs.dtype))

    def backward_fn(g):
        if not probs.requires_grad:
            return (None,)
        inside = (flat > _BCE_CLAMP) & (flat < 1.0 - _BCE_CLAMP)
        dp = (-(targets / p) + (1.0 - targets) / (1.0 - p)) / n
        return ((g * dp * inside).reshape(probs.shape),)

    return record(out, (probs,), backward_fn)


def loss(kind: str, prediction: Tensor, targets, class_weights=None,
         label_smoothing: float = 0.0) -> Tensor:
    if kind == "cross_entropy":
        return cross_entropy(prediction, targets, class_weights, label_smoothing)
    if kind == "bce":
        return bce_loss(prediction, targets)
    raise ValueError(f"unknown loss kind {kind!r}")


# -- operator bindings -------------------------------------------------------

Tensor.__add__ = add
Tensor.__radd__ = lambda self, other: add(other, self)
Tensor.__sub__ = sub
Tensor.__rsub__ = lambda self, other: sub(other, self)
Tensor.__mul__ = mul
Tensor.__rmul__ = lambda self, other: mul(other, self)
Tensor.__truediv__ = div
Tensor.__rtruediv__ = lambda self, other: div(other, self)
Tensor.__neg__ = neg
Tensor.__matmul__ = matmul
Tensor.reshape = reshape
Tensor.sum = sum_
Tensor.mean = mean
