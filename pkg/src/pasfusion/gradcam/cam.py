"""Gradient-weighted class activation maps.

Channel weights are the spatial means of the class-score gradient at the
captured convolution output; the map is ReLU(sum_c w_c A_c), upsampled to the
input grid (bilinear/trilinear) and min-max normalized.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import ndcore as ndc
from ..datapipe.preprocess import _resample_axis_bilinear


class GradCamError(ValueError):
    pass


@dataclass
class Heatmap:
    values: np.ndarray              # [0, 1], input spatial shape
    target_layer: str
    class_index: int
    sample_id: str = ""
    meta: dict = field(default_factory=dict)


def upsample_linear(arr: np.ndarray, extents) -> np.ndarray:
    out = arr.astype(np.float64)
    for ax, n in enumerate(extents):
        out = _resample_axis_bilinear(out, n, ax)
    return out


def normalize_unit(cam: np.ndarray) -> np.ndarray:
    """Min-max to [0, 1]; identically-zero maps stay zero."""
    hi = float(cam.max())
    lo = float(cam.min())
    if hi <= 0.0 or hi == lo:
        return np.zeros_like(cam, dtype=np.float32)
    return ((cam - lo) / (hi - lo)).astype(np.float32)


def cam_from_capture(activation: np.ndarray, grad: np.ndarray,
                     out_extents) -> np.ndarray:
    """Core formula for one sample: (C, *sp) activation/gradient pair."""
    spatial_axes = tuple(range(1, activation.ndim))
    weights = grad.mean(axis=spatial_axes)
    cam = np.maximum(np.tensordot(weights, activation, axes=(0, 0)), 0.0)
    cam = upsample_linear(cam, out_extents)
    return normalize_unit(cam)


def gradcam(model, inputs, class_index: int, target=None,
            sample_id: str = "") -> Heatmap:
    """Heatmap for one sample against ``class_index``.

    ``inputs`` is a tensor tuple matching the model's forward signature (one
    element for unimodal models, two for fusion).  ``target`` overrides the
    model's registered capture conv.  Two-class heads use the class logit as
    the score; the fusion scalar uses +logit for class 1 and -logit for 0.
    """
    conv = target if target is not None else model.cam_target()
    was_training = model.training
    model.eval()
    conv.capture = True
    try:
        with ndc.Tape():
            out = model(*[ndc.Tensor(np.asarray(x, dtype=np.float32)[None])
                          for x in inputs])
            logits = out.logits
            if logits.shape[1] == 1:
                if class_index not in (0, 1):
                    raise GradCamError(f"class index {class_index} invalid for a scalar head")
                score = ndc.sum_(logits) if class_index == 1 else ndc.sum_(-logits)
            else:
                if not 0 <= class_index < logits.shape[1]:
                    raise GradCamError(
                        f"class index {class_index} out of range for {logits.shape[1]} classes")
                mask = np.zeros(logits.shape, np.float32)
                mask[0, class_index] = 1.0
                score = ndc.sum_(logits * ndc.Tensor(mask))
            captured = conv.captured
            if captured is None:
                raise GradCamError("target conv did not run during forward")
            captured.retain_grad()
            ndc.backward(score)
    finally:
        conv.capture = False
        conv.captured = None
        if was_training:
            model.train()

    activation = captured.data[0]
    grad = captured.grad[0] if captured.grad is not None else np.zeros_like(activation)
    in_extents = inputs[_input_index_for(model, conv)].shape[-activation.ndim + 1:]
    values = cam_from_capture(activation, grad, in_extents)
    return Heatmap(values=values, target_layer=_layer_name(model, conv),
                   class_index=class_index, sample_id=sample_id)


def _input_index_for(model, conv) -> int:
    # fusion models take (volume, image); the US trunk conv is 2D
    return 1 if (len(getattr(model, "cam_targets", lambda: {})() or {}) == 2
                 and conv.dims == 2) else 0


def _layer_name(model, conv) -> str:
    for name, mod in _walk_named(model):
        if mod is conv:
            return name
    return "unregistered"


def _walk_named(module, prefix: str = ""):
    yield prefix.rstrip("."), module
    for name, mod in module._modules.items():
        yield from _walk_named(mod, f"{prefix}{name}.")
