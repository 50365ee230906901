"""Jacobi fields, Riccati comparison bounds and volume-density certificates
along geodesics, with radial parametrix coefficients and flat-torus Weyl counts."""

__version__ = "0.1.0"
