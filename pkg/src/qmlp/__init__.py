"""QMLP: a variational quantum classifier with per-qubit angle encoding,
nonlinear re-uploading units, parameterized two-qubit entanglers and a
Pauli bit-flip/phase-flip noise model, on a dense statevector simulator.

Qubit 0 is the least-significant bit of a basis index throughout.
"""

__version__ = "0.1.0"
