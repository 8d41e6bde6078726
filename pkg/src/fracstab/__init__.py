"""Numerical toolkit for the instability of equilibria of Caputo fractional systems.

Modules
-------
mlf
    Mittag-Leffler functions for scalar, array and matrix arguments.
spectral
    Sector classification, Jordan-structure transform and Lipschitz sampling.
solver
    Exact linear solutions and a fractional predictor-corrector.
lyapunov_perron
    The Lyapunov-Perron integral operator, weighted norms and contraction checks.
harness
    Experiment specs, stability probes and the command-line interface.
"""

__version__ = "0.1.0"
