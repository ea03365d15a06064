"""Conditional quantum Fisher information along quantum-jump trajectories."""
__version__ = "0.1.0"
