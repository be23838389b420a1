"""Modality-specific preprocessing.

Volumes: axis reorder -> uniform-scale Catmull-Rom resample -> zero
center-padding to the profile grid -> per-volume min-max to [0, 1].
Images: min-max -> 8-bit quantization (round half up) -> channel
replication -> bilinear resize -> division by 255 at the model boundary.
"""
from __future__ import annotations

import numpy as np

from .niftiio import Volume


class PreprocessError(ValueError):
    pass


def catmull_rom(t: np.ndarray) -> np.ndarray:
    """Cubic convolution kernel with a = -0.5 (Catmull-Rom)."""
    t = np.abs(t)
    a = -0.5
    near = (a + 2.0) * t ** 3 - (a + 3.0) * t ** 2 + 1.0
    far = a * (t ** 3 - 5.0 * t ** 2 + 8.0 * t - 4.0)
    return np.where(t <= 1.0, near, np.where(t < 2.0, far, 0.0))


def _resample_axis_cubic(arr: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    n_in = arr.shape[axis]
    if n_out == n_in:
        return arr
    x = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    base = np.floor(x).astype(np.int64)
    t = x - base
    idx = np.clip(np.stack([base - 1, base, base + 1, base + 2]), 0, n_in - 1)
    w = np.stack([catmull_rom(1.0 + t), catmull_rom(t),
                  catmull_rom(1.0 - t), catmull_rom(2.0 - t)])
    moved = np.moveaxis(arr, axis, 0).astype(np.float64)
    gathered = moved[idx]                             # (4, n_out, ...)
    out = np.einsum("kn,kn...->n...", w, gathered)
    return np.moveaxis(out, 0, axis)


def _resample_axis_bilinear(arr: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    n_in = arr.shape[axis]
    if n_out == n_in:
        return arr
    x = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    base = np.floor(x).astype(np.int64)
    t = x - base
    idx = np.clip(np.stack([base, base + 1]), 0, n_in - 1)
    w = np.stack([1.0 - t, t])
    moved = np.moveaxis(arr, axis, 0).astype(np.float64)
    out = np.einsum("kn,kn...->n...", w, moved[idx])
    return np.moveaxis(out, 0, axis)


def resample_volume_cubic(vox: np.ndarray, extents) -> np.ndarray:
    out = vox
    for ax, n in enumerate(extents):
        out = _resample_axis_cubic(out, n, ax)
    return out


def minmax_unit(arr: np.ndarray) -> np.ndarray:
    """Min-max to [0, 1]; a constant array maps to all zeros."""
    lo = float(arr.min())
    hi = float(arr.max())
    if hi == lo:
        return np.zeros_like(arr, dtype=np.float32)
    return ((arr - lo) / (hi - lo)).astype(np.float32)


def reorder_axes(volume: Volume) -> np.ndarray:
    order = volume.axis_order.upper()
    if sorted(order) != ["D", "H", "W"]:
        raise PreprocessError(f"bad axis order tag {volume.axis_order!r}")
    perm = [order.index(ax) for ax in "HWD"]
    return np.transpose(volume.voxels, perm)


def preprocess_mri(volume: Volume, target=(128, 128, 64)) -> Volume:
    vox = reorder_axes(volume)
    if vox.size == 0 or min(vox.shape) < 1:
        raise PreprocessError(f"empty volume {vox.shape}")
    scale = min(t / e for t, e in zip(target, vox.shape))
    scaled = tuple(max(1, int(round(e * scale))) for e in vox.shape)
    vox = resample_volume_cubic(vox.astype(np.float64), scaled)

    out = np.zeros(target, dtype=np.float64)
    starts = tuple((t - s) // 2 for t, s in zip(target, scaled))
    region = tuple(slice(st, st + s) for st, s in zip(starts, scaled))
    out[region] = vox
    return Volume(voxels=minmax_unit(out), axis_order="HWD")


def preprocess_us(pixels: np.ndarray, target=(224, 224)) -> np.ndarray:
    """Grayscale (H, W) -> float32 (3, H', W') in [0, 1]."""
    if pixels.ndim != 2:
        raise PreprocessError(f"expected single-channel image, got shape {pixels.shape}")
    if pixels.size == 0:
        raise PreprocessError("empty image")
    unit = minmax_unit(pixels.astype(np.float64))
    u8 = np.clip(np.floor(unit * 255.0 + 0.5), 0, 255)   # round half up
    resized = _resample_axis_bilinear(u8, target[0], 0)
    resized = _resample_axis_bilinear(resized, target[1], 1)
    one = (resized / 255.0).astype(np.float32)
    return np.repeat(one[None, :, :], 3, axis=0)


def quantize_u8(pixels: np.ndarray) -> np.ndarray:
    """Min-max to [0,1] then round-half-up to the 0..255 range."""
    unit = minmax_unit(pixels.astype(np.float64))
    return np.clip(np.floor(unit * 255.0 + 0.5), 0, 255).astype(np.uint8)
