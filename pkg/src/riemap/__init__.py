"""Numerical second fundamental forms, isotropy and helix transport for Riemannian maps."""

__version__ = "0.1.0"
