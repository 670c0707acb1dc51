import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_state(rng, n):
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return v / np.linalg.norm(v)


def full_matrix(m, qubits, n):
    """Brute-force 2^n x 2^n operator for a 2x2 (one qubit) or 4x4 (|c t>) gate.

    Built entry by entry from bit patterns, independent of the kernels.
    """
    dim = 1 << n
    out = np.zeros((dim, dim), dtype=complex)
    for i in range(dim):
        for j in range(dim):
            rest_i = [(i >> q) & 1 for q in range(n) if q not in qubits]
            rest_j = [(j >> q) & 1 for q in range(n) if q not in qubits]
            if rest_i != rest_j:
                continue
            a = b = 0
            for q in qubits:
                a = 2 * a + ((i >> q) & 1)
                b = 2 * b + ((j >> q) & 1)
            out[i, j] = m[a, b]
    return out


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
