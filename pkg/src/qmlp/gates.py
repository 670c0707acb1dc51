"""Gate algebra: the gate set, unitary matrices and parameter-shift rules.

Two-qubit matrices are written in the basis |c t> with the control as the
high bit, so row 3 of CNOT is |11>. This is the textbook layout and is
independent of the simulator's qubit-to-bit convention.

ROT(phi, theta, omega) is the Z-Y-Z Euler rotation RZ(omega) RY(theta) RZ(phi).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import CircuitError, CompilationError

SINGLE_QUBIT = ("X", "Z", "H", "RX", "RY", "RZ", "ROT")
TWO_QUBIT = ("CNOT", "CRX", "CRY", "CROT")
KINDS = SINGLE_QUBIT + TWO_QUBIT

N_PARAMS = {
    "X": 0, "Z": 0, "H": 0, "CNOT": 0,
    "RX": 1, "RY": 1, "RZ": 1, "CRX": 1, "CRY": 1,
    "ROT": 3, "CROT": 3,
}

# controlled kind -> the single-qubit kind it applies to the target
BASE_KIND = {"CNOT": "X", "CRX": "RX", "CRY": "RY", "CROT": "ROT"}

# integer codes shared with the compiled kernels
KIND_CODE = {k: i for i, k in enumerate(KINDS)}

PREPROCESSING = ("identity", "relu", "scaled_relu")


@dataclass(frozen=True)
class Trainable:
    """Reference to entry `index` of the flat trainable-parameter vector."""

    index: int


@dataclass(frozen=True)
class InputSlot:
    """Reference to input angle `index`, passed through a classical preprocessing step.

    `scaled_relu` is relu(2 x). Since relu is positively homogeneous this equals
    2 relu(x), so both readings of "2 x RELU(x)" give the same angle.
    """

    index: int
    pre: str = "identity"

    def __post_init__(self):
        if self.pre not in PREPROCESSING:
            raise CompilationError(f"unknown preprocessing {self.pre!r}")


Param = Union[float, Trainable, InputSlot]


@dataclass(frozen=True)
class GateOp:
    kind: str
    qubits: tuple[int, ...]
    params: tuple[Param, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise CircuitError(f"unknown gate kind {self.kind!r}")
        want_q = 2 if self.kind in TWO_QUBIT else 1
        if len(self.qubits) != want_q:
            raise CircuitError(f"{self.kind} takes {want_q} qubit(s), got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise CircuitError(f"{self.kind}: duplicate qubit indices {self.qubits}")
        if any(q < 0 for q in self.qubits):
            raise CircuitError(f"{self.kind}: negative qubit index in {self.qubits}")
        if len(self.params) != N_PARAMS[self.kind]:
            raise CircuitError(
                f"{self.kind} takes {N_PARAMS[self.kind]} parameter(s), got {len(self.params)}"
            )

    @property
    def is_two_qubit(self) -> bool:
        return self.kind in TWO_QUBIT

    @property
    def is_bound(self) -> bool:
        return all(isinstance(p, (int, float)) for p in self.params)

    @property
    def is_trainable(self) -> bool:
        return any(isinstance(p, Trainable) for p in self.params)

    def bind(self, params=None, x=None) -> "GateOp":
        """Return a copy with every slot replaced by its numeric angle."""
        vals = []
        for p in self.params:
            if isinstance(p, Trainable):
                if params is None:
                    raise CompilationError(f"{self.kind}: unbound trainable slot {p.index}")
                vals.append(float(params[p.index]))
            elif isinstance(p, InputSlot):
                if x is None:
                    raise CompilationError(f"{self.kind}: unbound input slot {p.index}")
                vals.append(float(preprocess(np.asarray(x[p.index]), p.pre)))
            else:
                vals.append(float(p))
        return GateOp(self.kind, self.qubits, tuple(vals))


def preprocess(x, pre: str):
    if pre == "identity":
        return x
    if pre == "relu":
        return np.maximum(x, 0.0)
    if pre == "scaled_relu":
        return np.maximum(2.0 * x, 0.0)
    raise CompilationError(f"unknown preprocessing {pre!r}")


_I2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)


def rx(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def ry(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz(theta: float) -> np.ndarray:
    return np.array([[np.exp(-0.5j * theta), 0], [0, np.exp(0.5j * theta)]], dtype=complex)


def rot(phi: float, theta: float, omega: float) -> np.ndarray:
    return rz(omega) @ ry(theta) @ rz(phi)


_SINGLE = {
    "X": lambda: _X, "Z": lambda: _Z, "H": lambda: _H,
    "RX": rx, "RY": ry, "RZ": rz, "ROT": rot,
}


def _controlled(u: np.ndarray) -> np.ndarray:
    m = np.eye(4, dtype=complex)
    m[2:, 2:] = u
    return m


def matrix(kind: str, params=()) -> np.ndarray:
    """Unitary of a gate: 2x2 for single-qubit kinds, 4x4 (basis |c t>) for controlled ones."""
    if kind not in KINDS:
        raise CircuitError(f"unknown gate kind {kind!r}")
    params = tuple(params)
    if len(params) != N_PARAMS[kind]:
        raise CircuitError(f"{kind} takes {N_PARAMS[kind]} parameter(s), got {len(params)}")
    for p in params:
        if isinstance(p, (Trainable, InputSlot)):
            raise CompilationError(f"{kind}: cannot build a matrix from unbound slot {p}")
    params = tuple(float(p) for p in params)
    if kind in BASE_KIND:
        return _controlled(_SINGLE[BASE_KIND[kind]](*params))
    return _SINGLE[kind](*params).copy()


@dataclass(frozen=True)
class ShiftRule:
    """Parameter-shift recipe: df/dtheta = sum_k coefficient_k * f(theta + shift_k)."""

    terms: tuple[tuple[float, float], ...]

    @property
    def shift(self) -> float:
        return self.terms[0][1]

    @property
    def coefficient(self) -> float:
        return self.terms[0][0]


_TWO_TERM = ShiftRule(((0.5, math.pi / 2), (-0.5, -math.pi / 2)))

# Controlled rotations have generator |1><1| (x) sigma/2 with eigenvalues {0, +-1/2},
# so f(theta) carries frequencies 1/2 and 1 and needs four evaluations.
_CP = (math.sqrt(2) + 1) / (4 * math.sqrt(2))
_CM = (math.sqrt(2) - 1) / (4 * math.sqrt(2))
_FOUR_TERM = ShiftRule((
    (_CP, math.pi / 2), (-_CP, -math.pi / 2),
    (-_CM, 3 * math.pi / 2), (_CM, -3 * math.pi / 2),
))


def shift_rule(kind: str) -> ShiftRule | None:
    """Shift rule shared by every angle of `kind`; None for fixed gates."""
    if kind not in KINDS:
        raise CircuitError(f"unknown gate kind {kind!r}")
    if N_PARAMS[kind] == 0:
        return None
    if kind in TWO_QUBIT:
        return _FOUR_TERM
    return _TWO_TERM
