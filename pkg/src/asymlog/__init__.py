"""Asymptotic root approximations for polynomials with exp-log coefficients."""

__version__ = "0.1.0"
