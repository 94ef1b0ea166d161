"""Numerical toolkit for the Dirichlet problem of the minimal surface system.

Solves g^{ij}(f) f^A_{ij} = 0 with pinned boundary data by explicit
time-stepping of the non-parametric graphical mean curvature flow, checks
the small-oscillation solvability hypotheses, monitors the geometric
quantities that the continuous theory controls (singular values, the
projection factor *Omega, length-decreasing tensors, area dissipation,
boundary gradient barriers), and provides self-shrinker / Gaussian-density
oracles for the blow-up dichotomy.
"""

__version__ = "0.1.0"
