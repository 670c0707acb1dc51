import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qmlp.errors import CircuitError, ConfigError, EncodingError
from qmlp.gates import KINDS, N_PARAMS, TWO_QUBIT, GateOp, matrix
from qmlp.simulator import (Statevector, amplitude_encode, apply_gate, expect_z,
                            expect_z_all, new_ground)

from conftest import full_matrix, random_state


def test_ground_states():
    assert np.array_equal(new_ground(1).amplitudes, [1, 0])
    assert np.array_equal(new_ground(2).amplitudes, [1, 0, 0, 0])
    s = new_ground(16)
    assert len(s) == 65536 and s.amplitudes[0] == 1 and np.count_nonzero(s.amplitudes) == 1


@pytest.mark.parametrize("n", [0, 25, -1])
def test_ground_rejects_bad_sizes(n):
    with pytest.raises(ConfigError):
        new_ground(n)


def test_rx_half_pi():
    s = apply_gate(new_ground(1), GateOp("RX", (0,), (np.pi / 2,)))
    assert np.allclose(s.amplitudes, [1 / np.sqrt(2), -1j / np.sqrt(2)], atol=1e-15)


def test_crx_zero_is_identity(rng):
    psi = random_state(rng, 2)
    s = apply_gate(Statevector(2, psi.copy()), GateOp("CRX", (0, 1), (0.0,)))
    assert np.array_equal(s.amplitudes, psi)


def test_cnot_little_endian():
    # |10> in qubit-0-first notation is basis index 1
    s = Statevector(2, np.array([0, 1, 0, 0], dtype=complex))
    apply_gate(s, GateOp("CNOT", (0, 1)))
    assert np.array_equal(s.amplitudes, [0, 0, 0, 1])


def test_expect_z_examples():
    assert expect_z(new_ground(1), 0) == 1.0
    plus = Statevector(1, np.array([1, 1]) / np.sqrt(2))
    assert abs(expect_z(plus, 0)) < 1e-15


@pytest.mark.parametrize("x", np.linspace(-4, 4, 9))
def test_expect_z_rx_matches_brute_force(x):
    s = apply_gate(new_ground(1), GateOp("RX", (0,), (x,)))
    brute = matrix("RX", (x,)) @ np.array([1, 0])
    assert expect_z(s, 0) == pytest.approx(abs(brute[0]) ** 2 - abs(brute[1]) ** 2, abs=1e-14)
    assert expect_z(s, 0) == pytest.approx(np.cos(x), abs=1e-14)


def test_expect_z_all_matches_single(rng):
    s = Statevector(4, random_state(rng, 4))
    assert np.allclose(expect_z_all(s), [expect_z(s, q) for q in range(4)], atol=1e-14)


def test_index_errors():
    s = new_ground(2)
    with pytest.raises(CircuitError):
        apply_gate(s, GateOp("X", (2,)))
    with pytest.raises(CircuitError):
        expect_z(s, 2)
    with pytest.raises(CircuitError):
        GateOp("CNOT", (1, 1))


def test_unbound_gate_rejected():
    from qmlp.gates import Trainable
    with pytest.raises(CircuitError):
        apply_gate(new_ground(1), GateOp("RX", (0,), (Trainable(0),)))


def test_amplitude_encode_examples():
    assert np.array_equal(amplitude_encode([1, 0, 0, 0]).amplitudes, [1, 0, 0, 0])
    assert np.allclose(amplitude_encode([1, 1, 1, 1]).amplitudes, 0.5, atol=1e-15)
    assert np.allclose(amplitude_encode([3, 4, 0, 0]).amplitudes, [0.6, 0.8, 0, 0], atol=1e-15)


def test_amplitude_encode_pads_and_rejects():
    s = amplitude_encode(np.ones(9))
    assert s.n_qubits == 4 and np.allclose(s.amplitudes[9:], 0)
    with pytest.raises(EncodingError):
        amplitude_encode([0, 0, 0, 0])
    with pytest.raises(EncodingError):
        amplitude_encode([1, np.nan])


# ---------------------------------------------------------------- properties

def _gate_strategy(n):
    @st.composite
    def gate(draw):
        kind = draw(st.sampled_from(KINDS))
        arity = 2 if kind in TWO_QUBIT else 1
        qubits = tuple(draw(st.permutations(range(n)))[:arity])
        angles = tuple(draw(st.floats(-7, 7)) for _ in range(N_PARAMS[kind]))
        return GateOp(kind, qubits, angles)
    return gate()


@settings(max_examples=200, deadline=None)
@given(gate=_gate_strategy(3), seed=st.integers(0, 2**32 - 1))
def test_matches_brute_force_and_preserves_norm(gate, seed):
    rng = np.random.default_rng(seed)
    psi = random_state(rng, 3)
    s = apply_gate(Statevector(3, psi.copy()), gate)
    full = full_matrix(matrix(gate.kind, gate.params), gate.qubits, 3)
    assert np.allclose(s.amplitudes, full @ psi, atol=1e-12)
    assert abs(s.norm() - 1) < 1e-12


@settings(max_examples=100, deadline=None)
@given(gate=_gate_strategy(4), seed=st.integers(0, 2**32 - 1))
def test_linearity(gate, seed):
    rng = np.random.default_rng(seed)
    s1, s2 = random_state(rng, 4), random_state(rng, 4)
    a, b = complex(*rng.normal(size=2)), complex(*rng.normal(size=2))
    lhs = apply_gate(Statevector(4, a * s1 + b * s2), gate).amplitudes
    r1 = apply_gate(Statevector(4, s1.copy()), gate).amplitudes
    r2 = apply_gate(Statevector(4, s2.copy()), gate).amplitudes
    assert np.allclose(lhs, a * r1 + b * r2, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(g1=_gate_strategy(5), g2=_gate_strategy(5), seed=st.integers(0, 2**32 - 1))
def test_disjoint_gates_commute(g1, g2, seed):
    if set(g1.qubits) & set(g2.qubits):
        return
    psi = random_state(np.random.default_rng(seed), 5)
    ab = apply_gate(apply_gate(Statevector(5, psi.copy()), g1), g2).amplitudes
    ba = apply_gate(apply_gate(Statevector(5, psi.copy()), g2), g1).amplitudes
    assert np.allclose(ab, ba, atol=1e-12)


def test_norm_preserved_over_long_sequence(rng):
    s = new_ground(6)
    for _ in range(500):
        kind = rng.choice(KINDS)
        qubits = tuple(rng.choice(6, 2 if kind in TWO_QUBIT else 1, replace=False))
        apply_gate(s, GateOp(kind, tuple(int(q) for q in qubits),
                             tuple(rng.uniform(-7, 7, N_PARAMS[kind]))))
    assert abs(s.norm() - 1) < 1e-10
