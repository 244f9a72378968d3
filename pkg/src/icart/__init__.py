"""Irreducible Cartesian tensor algebra and equivariant many-body potentials."""

__version__ = "0.1.0"
