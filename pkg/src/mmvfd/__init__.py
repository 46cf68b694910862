"""Multimodal video forgery detection: adaptive frame sampling, pluggable
appearance/depth/motion feature backends, directional cross-attention
fusion, training, cross-modal discrepancy statistics, and a robustness and
adversarial evaluation harness."""

__version__ = "0.1.0"
