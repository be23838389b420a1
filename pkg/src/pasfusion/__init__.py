"""Multimodal MRI+US classification pipeline built on a from-scratch autodiff core."""

__version__ = "0.1.0"
