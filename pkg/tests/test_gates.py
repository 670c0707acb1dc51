import math

import numpy as np
import pytest

from qmlp.errors import CircuitError, CompilationError
from qmlp.gates import (KINDS, N_PARAMS, GateOp, InputSlot, Trainable, matrix, preprocess,
                        shift_rule)
from qmlp.simulator import Statevector, apply_gate, expect_z_all

from conftest import random_state


@pytest.mark.parametrize("kind", KINDS)
def test_unitary(kind, rng):
    for _ in range(100):
        u = matrix(kind, rng.uniform(-10, 10, N_PARAMS[kind]))
        assert np.allclose(u.conj().T @ u, np.eye(len(u)), atol=1e-12)


@pytest.mark.parametrize("kind", ["CRX", "CRY"])
def test_controlled_zero_is_exact_identity(kind):
    assert np.array_equal(matrix(kind, (0.0,)), np.eye(4))


def test_crx_pi_block():
    u = matrix("CRX", (math.pi,))
    assert np.allclose(u[2:, 2:], [[0, -1j], [-1j, 0]], atol=1e-15)
    assert np.allclose(np.abs(u), np.abs(matrix("CNOT")), atol=1e-15)


def test_crx_entries_follow_definition():
    t = 0.7
    u = matrix("CRX", (t,))
    assert u[2, 2] == pytest.approx(math.cos(t / 2))
    assert u[2, 3] == pytest.approx(-1j * math.sin(t / 2))


def test_rx_zero_identity():
    assert np.array_equal(matrix("RX", (0.0,)), np.eye(2))


def test_rot_euler_convention():
    assert np.allclose(matrix("ROT", (0, math.pi, 0)), [[0, -1], [1, 0]], atol=1e-15)
    phi, theta, omega = 0.3, 1.1, -0.4
    expect = matrix("RZ", (omega,)) @ matrix("RY", (theta,)) @ matrix("RZ", (phi,))
    assert np.allclose(matrix("ROT", (phi, theta, omega)), expect, atol=1e-15)


def test_crot_and_cry_are_controlled():
    a = (0.2, 0.9, 1.7)
    u = matrix("CROT", a)
    assert np.array_equal(u[:2, :2], np.eye(2)) and np.allclose(u[2:, 2:], matrix("ROT", a))
    assert np.allclose(matrix("CRY", (0.4,))[2:, 2:], matrix("RY", (0.4,)))


def test_rx_periodicity(rng):
    for t in rng.uniform(-10, 10, 20):
        assert np.allclose(matrix("RX", (t + 4 * math.pi,)), matrix("RX", (t,)), atol=1e-12)


def test_crx_pi_matches_cnot_expectations(rng):
    for _ in range(100):
        psi = random_state(rng, 3)
        a = apply_gate(Statevector(3, psi.copy()), GateOp("CRX", (2, 0), (math.pi,)))
        b = apply_gate(Statevector(3, psi.copy()), GateOp("CNOT", (2, 0)))
        assert np.allclose(expect_z_all(a), expect_z_all(b), atol=1e-10)


def test_unbound_matrix_rejected():
    with pytest.raises(CompilationError):
        matrix("RX", (Trainable(0),))
    with pytest.raises(CompilationError):
        GateOp("RX", (0,), (InputSlot(0),)).bind()


def test_arity_checks():
    with pytest.raises(CircuitError):
        GateOp("RX", (0,), ())
    with pytest.raises(CircuitError):
        GateOp("CRX", (0,), (0.1,))
    with pytest.raises(CircuitError):
        GateOp("FOO", (0,))


def test_shift_rule_descriptors():
    r = shift_rule("RX")
    assert (r.shift, r.coefficient) == (math.pi / 2, 0.5)
    assert shift_rule("ROT") == r
    assert shift_rule("CNOT") is None and shift_rule("X") is None
    assert len(shift_rule("CRX").terms) == 4


def _expect_after(kind, params, qubits, psi, n):
    s = apply_gate(Statevector(n, psi.copy()), GateOp(kind, qubits, tuple(params)))
    return expect_z_all(s)


@pytest.mark.parametrize("kind", ["RX", "RY", "RZ", "ROT", "CRX", "CRY", "CROT"])
def test_shift_rule_matches_finite_difference(kind, rng):
    n = 2
    qubits = (0, 1) if kind.startswith("C") else (1,)
    for _ in range(5):
        psi = random_state(rng, n)
        params = rng.uniform(-3, 3, N_PARAMS[kind])
        for j in range(len(params)):
            rule = shift_rule(kind)
            g = 0.0
            for c, s in rule.terms:
                p = params.copy()
                p[j] += s
                g += c * _expect_after(kind, p, qubits, psi, n)
            h = 1e-4
            pp, pm = params.copy(), params.copy()
            pp[j] += h
            pm[j] -= h
            fd = (_expect_after(kind, pp, qubits, psi, n) - _expect_after(kind, pm, qubits, psi, n)) / (2 * h)
            assert np.allclose(g, fd, rtol=1e-5, atol=1e-8)


def test_preprocess():
    x = np.array([-1.0, 0.0, 0.5])
    assert np.array_equal(preprocess(x, "identity"), x)
    assert np.array_equal(preprocess(x, "relu"), [0, 0, 0.5])
    assert np.array_equal(preprocess(x, "scaled_relu"), [0, 0, 1.0])
    assert np.array_equal(preprocess(x, "scaled_relu"), 2 * preprocess(x, "relu"))
