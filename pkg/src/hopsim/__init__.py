"""Simulator for hybrid digital-analog optical matrix-vector multiplication."""

__version__ = "0.1.0"
