"""Dual-resolution attentive statistics pooling for MOS prediction, with a
numpy autodiff core, baseline pooling operators, a toy MOS model, a planted
synthetic benchmark and system-level metrics."""

__version__ = "0.1.0"
