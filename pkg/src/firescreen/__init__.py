"""Adversarial wildfire trajectories and contingency screening for power grids."""

__version__ = "0.1.0"
