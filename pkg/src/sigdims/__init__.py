"""sigdims: PCA width/depth analysis and one-shot slimming of trained CNNs."""

__version__ = "0.1.0"
