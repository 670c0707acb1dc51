"""Dense statevector simulator.

Basis index bit q holds qubit q (qubit 0 is the least-significant bit).
Writing basis states as qubit 0 first, CNOT(control=0, target=1) sends
|10> (index 1) to |11> (index 3).
"""
from __future__ import annotations

import numpy as np

from . import _kernels as K
from .errors import CircuitError, ConfigError, EncodingError
from .gates import KIND_CODE, GateOp

MAX_QUBITS = 24


class Statevector:
    """2**n complex amplitudes; mutated in place by `apply_gate`."""

    __slots__ = ("n_qubits", "amplitudes")

    def __init__(self, n_qubits: int, amplitudes: np.ndarray):
        amplitudes = np.ascontiguousarray(amplitudes, dtype=np.complex128)
        if amplitudes.shape != (1 << n_qubits,):
            raise ConfigError(
                f"statevector for {n_qubits} qubits needs {1 << n_qubits} amplitudes, "
                f"got shape {amplitudes.shape}"
            )
        self.n_qubits = n_qubits
        self.amplitudes = amplitudes

    def copy(self) -> "Statevector":
        return Statevector(self.n_qubits, self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def __len__(self):
        return self.amplitudes.size

    def __repr__(self):
        return f"Statevector(n_qubits={self.n_qubits})"


def _check_n(n_qubits: int):
    if not isinstance(n_qubits, (int, np.integer)) or not 1 <= n_qubits <= MAX_QUBITS:
        raise ConfigError(f"qubit count must be in [1, {MAX_QUBITS}], got {n_qubits!r}")


def new_ground(n_qubits: int) -> Statevector:
    _check_n(n_qubits)
    amps = np.zeros(1 << n_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return Statevector(int(n_qubits), amps)


def apply_gate(state: Statevector, gate: GateOp) -> Statevector:
    """Apply a bound gate in place and return the same state object."""
    for q in gate.qubits:
        if q >= state.n_qubits:
            raise CircuitError(f"{gate.kind}: qubit {q} out of range for {state.n_qubits} qubits")
    if not gate.is_bound:
        raise CircuitError(f"{gate.kind}: parameters must be bound before application")
    a = [float(p) for p in gate.params] + [0.0] * (3 - len(gate.params))
    if gate.is_two_qubit:
        c, t = gate.qubits
    else:
        c, t = -1, gate.qubits[0]
    K.apply_op(state.amplitudes, KIND_CODE[gate.kind], c, t, a[0], a[1], a[2])
    return state


def expect_z(state: Statevector, qubit: int) -> float:
    if not 0 <= qubit < state.n_qubits:
        raise CircuitError(f"qubit {qubit} out of range for {state.n_qubits} qubits")
    return float(K.expect_z(state.amplitudes, qubit))


def expect_z_all(state: Statevector) -> np.ndarray:
    out = np.empty(state.n_qubits)
    K.expect_z_all(state.amplitudes, state.n_qubits, out)
    return out


def amplitude_encode(pixels) -> Statevector:
    """Normalized real amplitudes; inputs shorter than a power of two are zero-padded."""
    v = np.asarray(pixels, dtype=np.float64).ravel()
    if v.size == 0:
        raise EncodingError("cannot amplitude-encode an empty vector")
    if not np.all(np.isfinite(v)):
        raise EncodingError("pixels must be finite")
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise EncodingError("cannot amplitude-encode an all-zero vector")
    n = max(1, int(np.ceil(np.log2(v.size))))
    _check_n(n)
    amps = np.zeros(1 << n, dtype=np.complex128)
    amps[: v.size] = v / norm
    return Statevector(n, amps)
