"""Differentiable volumetric rendering with reflection-aware appearance."""

__version__ = "0.1.0"
