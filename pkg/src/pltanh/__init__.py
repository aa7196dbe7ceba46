"""Parametric Leaky Tanh: a NumPy CNN micro-framework and k-fold benchmark harness."""
from .activations import ActivationKind, Kind, solve_crossover

__version__ = "0.1.0"

__all__ = ["ActivationKind", "Kind", "solve_crossover", "__version__"]
