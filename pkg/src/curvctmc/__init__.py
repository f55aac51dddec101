"""Curvature bounds and Poisson-type deviation inequalities for finite
continuous-time Markov chains."""

__version__ = "0.1.0"
