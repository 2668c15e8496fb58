"""Discrete plates complex on polygonal meshes and a mixed Kirchhoff-Love solver."""

__version__ = '0.3.0'
