"""Simulator and control stack for self-assembling magnetic truss robot modules."""

__version__ = "0.1.0"
