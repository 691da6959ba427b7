"""Propagation of chaos for a mollified parabolic-elliptic Keller-Segel system in 2D.

Modules: :mod:`kernel` (Yukawa potential and its mollification), :mod:`grid`
(periodic fields), :mod:`pde` (mean-field solver), :mod:`particles`
(coupled particle systems), :mod:`metrics` (estimators), :mod:`regime`
(parameter arithmetic) and :mod:`harness` (configs, runs and reports).
"""

__version__ = "0.1.0"
