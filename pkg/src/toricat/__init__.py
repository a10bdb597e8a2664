"""Coherent-noise toric code phase diagrams via Ashkin-Teller mappings."""

__version__ = "0.1.0"
