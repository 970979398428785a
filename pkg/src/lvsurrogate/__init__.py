"""Data-driven surrogate models for LV power-grid simulation, and benchmarks against AC power flow."""

__version__ = "0.1.0"
