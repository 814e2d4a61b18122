"""Selective-scan multimodal segmentation toolkit.

A CPU-scale, dependency-light stack: a small reverse-mode tensor engine,
selective state-space scan kernels, 2D cross-scan blocks, a dual-stream
encoder with cross-modal fusion, a channel-wise decoder, saliency and
segmentation metrics, a synthetic paired-modality scene generator, and a
train/eval/bench command line.
"""

__version__ = "0.1.0"
