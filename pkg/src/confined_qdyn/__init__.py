"""Quantum dynamics of a particle confined near a closed plane curve.

Finite-difference operators on a full-space box and on the normal bundle of
the curve, Crank-Nicolson propagation, and diagnostics for how the strongly
confined dynamics approaches its effective one-dimensional limit.
"""

__version__ = "0.1.0"
