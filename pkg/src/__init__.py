"""
In-Context Regression Spectral Laboratory

Synthetic linear-regression prompts, a small decoder-only transformer,
classical regression baselines, and spectral-signature analysis of the
transformer's residual stream.
"""

__version__ = "0.2.0"
__author__ = "ICL Spectra Project"
