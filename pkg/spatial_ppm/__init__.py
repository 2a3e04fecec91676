"""
Spatial PPM Analysis Package

This package contains the code for analysing spatial point patterns observed in a
polygonal window: kernel intensity estimation, covariate smoothing, tests of complete
spatial randomness, inhomogeneous Poisson model fitting and residual diagnostics.
"""

__version__ = '0.1.0'
