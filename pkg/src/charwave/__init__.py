"""Characteristic-grid solver for V(x) u_tt = u_xx with a quasilinear Neumann boundary."""

__version__ = "0.1.0"
