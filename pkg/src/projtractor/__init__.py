"""Numerical projective tractor calculus and the metrizability equation on a chart."""

__version__ = "0.1.0"
