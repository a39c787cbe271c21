"""Fiber-cluster shape, microstructure and connectivity measures for phenotype prediction."""

__version__ = "0.1.0"
