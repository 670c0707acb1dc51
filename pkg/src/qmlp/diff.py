"""Expectations and their gradients with respect to the trainable angles.

`grad` is the parameter-shift reference. `vjp` is the adjoint fast path used
for training: one forward and one reverse sweep per sample, independent of
the number of parameters.
"""
from __future__ import annotations

import numpy as np

from . import _kernels as K
from .ansatz import CircuitScheme
from .errors import DifferentiationError
from .gates import KINDS, shift_rule


def forward_angles(scheme: CircuitScheme, angles: np.ndarray) -> np.ndarray:
    """Noiseless <Z_q> for pre-bound angles of shape (batch, n_ops, 3)."""
    prog = scheme.program
    out = np.empty((angles.shape[0], scheme.n_qubits))
    K.forward_batch(scheme.n_qubits, prog.codes, prog.ctrl, prog.tgt,
                    np.ascontiguousarray(angles), out)
    return out


def forward(scheme: CircuitScheme, params, x) -> np.ndarray:
    """Noiseless <Z_q> for every qubit."""
    return forward_angles(scheme, scheme.bind_angles(params, x))[0]


def forward_batch(scheme: CircuitScheme, params, xs) -> np.ndarray:
    return forward_angles(scheme, scheme.bind_angles(params, xs))


def _shift_table(scheme: CircuitScheme):
    """(op, angle, coefficient, shift, slot) for every term of every trainable occurrence."""
    prog = scheme.program
    rows = []
    for k in range(prog.n_ops):
        for j in range(3):
            slot = prog.train_idx[k, j]
            if slot < 0:
                continue
            kind = KINDS[prog.codes[k]]
            rule = shift_rule(kind)
            if rule is None:
                raise DifferentiationError(f"{kind} at op {k} has a trainable slot but no shift rule")
            rows.extend((k, j, c, s, slot) for c, s in rule.terms)
    return rows


def jacobian(scheme: CircuitScheme, params, x) -> np.ndarray:
    """d<Z_q>/d(param_i) by parameter shift, shape (n_qubits, n_params).

    A parameter shared by several gates gets one shifted evaluation set per
    occurrence; the contributions add.
    """
    base = scheme.bind_angles(params, x)[0]
    rows = _shift_table(scheme)
    jac = np.zeros((scheme.n_qubits, scheme.n_params))
    if not rows:
        return jac
    shifted = np.repeat(base[None], len(rows), axis=0)
    for r, (k, j, _, s, _) in enumerate(rows):
        shifted[r, k, j] += s
    z = forward_angles(scheme, shifted)
    for r, (_, _, c, _, slot) in enumerate(rows):
        jac[:, slot] += c * z[r]
    return jac


def grad(scheme: CircuitScheme, params, x, qubit: int) -> np.ndarray:
    """Exact d<Z_qubit>/d(params) by parameter shift."""
    if not 0 <= qubit < scheme.n_qubits:
        raise DifferentiationError(f"qubit {qubit} out of range for {scheme.n_qubits} qubits")
    return jacobian(scheme, params, x)[qubit]


def grad_fd(scheme: CircuitScheme, params, x, qubit: int, h: float = 1e-4) -> np.ndarray:
    """Central finite difference of <Z_qubit>; test oracle."""
    if h <= 0:
        raise DifferentiationError(f"step must be positive, got {h}")
    params = np.asarray(params, dtype=np.float64)
    P = params.size
    stack = np.repeat(params[None], 2 * P, axis=0)
    stack[np.arange(P), np.arange(P)] += h
    stack[P + np.arange(P), np.arange(P)] -= h
    z = np.array([forward(scheme, p, x)[qubit] for p in stack])
    return (z[:P] - z[P:]) / (2 * h)


def vjp(scheme: CircuitScheme, params, xs, weights, noise=None):
    """Adjoint pass for f_b = sum_q weights[b, q] <Z_q>(x_b).

    Returns (z, g): z[b] is <Z> per qubit and g[b] is df_b/d(params). With a
    noise model, both are averaged over its trajectories.
    """
    angles = scheme.bind_angles(params, xs)
    B = angles.shape[0]
    weights = np.ascontiguousarray(np.broadcast_to(weights, (B, scheme.n_qubits)), dtype=np.float64)
    prog = scheme.program
    if noise is None or noise.is_noiseless:
        pb, pp, seed, trajs = 0.0, 0.0, np.uint64(0), np.zeros(1, dtype=np.int64)
    else:
        pb, pp, seed, trajs = float(noise.p_bitflip), float(noise.p_phaseflip), noise.seed, noise.trajectories()
    z = np.empty((B, scheme.n_qubits))
    ga = np.zeros((B, prog.n_ops, 3))
    K.vjp_batch(scheme.n_qubits, prog.codes, prog.ctrl, prog.tgt, angles, weights, pb, pp, seed,
                trajs, prog.first_trainable, prog.needs_grad, z, ga)
    g = np.stack([prog.param_grad(ga[b], scheme.n_params) for b in range(B)]) if B else \
        np.zeros((0, scheme.n_params))
    return z, g


def grad_adjoint(scheme: CircuitScheme, params, x, qubit: int) -> np.ndarray:
    """d<Z_qubit>/d(params) via the adjoint path."""
    if not 0 <= qubit < scheme.n_qubits:
        raise DifferentiationError(f"qubit {qubit} out of range for {scheme.n_qubits} qubits")
    w = np.zeros(scheme.n_qubits)
    w[qubit] = 1.0
    return vjp(scheme, params, np.atleast_2d(x), w)[1][0]
