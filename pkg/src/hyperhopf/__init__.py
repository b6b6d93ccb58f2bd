"""Hopf bifurcation analysis for semilinear first-order hyperbolic systems
with reflection boundary conditions."""

__version__ = "0.1.0"
