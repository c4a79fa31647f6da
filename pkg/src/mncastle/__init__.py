"""Toolkit for multiscale non-stationary causal graphs.

Samples MN-DAGs and synthesizes time series obeying them, estimates local
wavelet spectral matrices from data, and recovers graph structure with a
two-step stochastic variational inference engine (MN-CASTLE), plus the
evaluation harness used to benchmark it.
"""

__version__ = "0.1.0"
