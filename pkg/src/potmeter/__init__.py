"""Vector-potential meter: weak values of canonical momentum on a 1D lattice."""

__version__ = "0.1.0"
