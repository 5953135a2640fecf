"""Accumulated damage modelling, ABC-MCMC fitting and DOL reliability for lumber."""

__version__ = "1.0.0"
