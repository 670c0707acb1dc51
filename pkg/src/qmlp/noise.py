"""Stochastic Pauli noise by Monte Carlo trajectories.

After every gate, each qubit the gate touches independently receives an X
with probability p_bitflip and a Z with probability p_phaseflip (both may
fire; X is applied before Z, control qubit before target). Every decision
draws from a counter-based hash of (seed, trajectory, gate, qubit, channel),
so a trajectory's outcome does not depend on which thread runs it or in
what order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .ansatz import CircuitScheme
from .diff import forward_angles
from .errors import ConfigError

# snapshots kept per sample when resuming trajectories from the noiseless run
CHECKPOINT_BYTES = 64 << 20

_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class NoiseModel:
    p_bitflip: float = 0.01
    p_phaseflip: float = 0.01
    n_trajectories: int = 1000
    base_seed: int = 0

    def __post_init__(self):
        for name in ("p_bitflip", "p_phaseflip"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {p}")
        if self.n_trajectories < 1:
            raise ConfigError(f"n_trajectories must be >= 1, got {self.n_trajectories}")

    @property
    def is_noiseless(self) -> bool:
        return self.p_bitflip == 0.0 and self.p_phaseflip == 0.0

    @property
    def seed(self) -> np.uint64:
        return np.uint64(self.base_seed & _SEED_MASK)

    def trajectories(self) -> np.ndarray:
        return np.arange(self.n_trajectories, dtype=np.int64)


def noiseless() -> NoiseModel:
    return NoiseModel(0.0, 0.0, 1)


def two_qubit_outcome_probabilities(p_bitflip: float = 0.01) -> tuple[float, float, float, float]:
    """Bit-flip outcomes after a two-qubit gate: (none, control only, target only, both)."""
    q = 1.0 - p_bitflip
    return q * q, p_bitflip * q, q * p_bitflip, p_bitflip * p_bitflip


def sample_two_qubit_outcomes(noise: NoiseModel, n_samples: int, gate: int = 0,
                              control: int = 0, target: int = 1) -> np.ndarray:
    """Empirical frequencies of the four outcomes, drawn from the trajectory stream.

    Index 0 is no flip, 1 control only, 2 target only, 3 both.
    """
    counts = np.zeros(4, dtype=np.int64)
    for traj in range(n_samples):
        fc = K.noise_uniform(noise.seed, traj, gate, control, 0) < noise.p_bitflip
        ft = K.noise_uniform(noise.seed, traj, gate, target, 0) < noise.p_bitflip
        counts[(2 if ft else 0) + (1 if fc else 0)] += 1
    return counts / n_samples


def _checkpoints(scheme: CircuitScheme) -> np.ndarray:
    prog = scheme.program
    twoq = np.nonzero(prog.ctrl >= 0)[0]
    budget = max(1, CHECKPOINT_BYTES // (16 << scheme.n_qubits))
    if twoq.size > budget:
        twoq = twoq[np.linspace(0, twoq.size - 1, budget).astype(np.int64)]
    return np.ascontiguousarray(twoq, dtype=np.int64)


def _run_batch(scheme, angles, noise, trajs, want_each):
    prog = scheme.program
    n = scheme.n_qubits
    B = angles.shape[0]
    mean = np.empty((B, n))
    each = np.empty((B, trajs.size if want_each else 0, n))
    K.noisy_batch(n, prog.codes, prog.ctrl, prog.tgt, angles, float(noise.p_bitflip),
                  float(noise.p_phaseflip), noise.seed, trajs, _checkpoints(scheme),
                  mean, each, want_each)
    return mean, each


def noisy_run(scheme: CircuitScheme, params, x, noise: NoiseModel,
              trajectory_index: int) -> np.ndarray:
    """<Z_q> of the pure state reached by one trajectory."""
    angles = scheme.bind_angles(params, x)[0]
    prog = scheme.program
    z = np.empty(scheme.n_qubits)
    state = np.empty(1 << scheme.n_qubits, dtype=np.complex128)
    K.expectations(state, scheme.n_qubits, prog.codes, prog.ctrl, prog.tgt, angles,
                   float(noise.p_bitflip), float(noise.p_phaseflip), noise.seed,
                   int(trajectory_index), z)
    return z


def noisy_expectations(scheme: CircuitScheme, params, x, noise: NoiseModel,
                       trajectories=None) -> np.ndarray:
    """Mean <Z_q> over trajectories 0..n_trajectories-1 (or the given indices)."""
    return noisy_expectations_batch(scheme, params, np.atleast_2d(x), noise, trajectories)[0]


def noisy_expectations_batch(scheme: CircuitScheme, params, xs, noise: NoiseModel,
                             trajectories=None) -> np.ndarray:
    angles = scheme.bind_angles(params, xs)
    if noise.is_noiseless:
        return forward_angles(scheme, angles)
    trajs = noise.trajectories() if trajectories is None else np.asarray(trajectories, dtype=np.int64)
    return _run_batch(scheme, angles, noise, trajs, False)[0]


def trajectory_expectations(scheme: CircuitScheme, params, x, noise: NoiseModel) -> np.ndarray:
    """Per-trajectory <Z_q>, shape (n_trajectories, n_qubits)."""
    angles = scheme.bind_angles(params, x)
    return _run_batch(scheme, angles, noise, noise.trajectories(), True)[1][0]
