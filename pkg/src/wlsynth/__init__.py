"""Knob-driven synthetic kernel generation and tuning for workload cloning and stress testing."""

__version__ = "0.1.0"
