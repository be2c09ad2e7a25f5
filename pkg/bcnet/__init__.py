"""Blume-Capel three-state network models: simulation, mean field, estimation
and inference."""

__version__ = '0.1.0'
