"""Dissipativity certification and desk-scale simulation for quasi-linear
second-order hyperbolic-hyperbolic systems."""

__version__ = "0.1.0"
