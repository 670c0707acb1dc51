"""Hybrid classifier: circuit expectations feed a linear 10-class softmax head."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels as K
from .ansatz import CircuitScheme
from .diff import forward_batch, vjp
from .errors import ModelError, TrainingError
from .noise import NoiseModel, noisy_expectations_batch

N_CLASSES = 10
CHECKPOINT_VERSION = 1


@dataclass
class HybridParams:
    quantum: np.ndarray      # (n_params,)
    fc_weights: np.ndarray   # (n_measured, 10)
    fc_bias: np.ndarray      # (10,)

    def copy(self) -> "HybridParams":
        return HybridParams(self.quantum.copy(), self.fc_weights.copy(), self.fc_bias.copy())

    def flat(self) -> np.ndarray:
        return np.concatenate([self.quantum, self.fc_weights.ravel(), self.fc_bias])

    def unflat(self, v: np.ndarray) -> "HybridParams":
        """A HybridParams shaped like self, filled from a flat vector."""
        a = self.quantum.size
        b = a + self.fc_weights.size
        return HybridParams(v[:a].copy(), v[a:b].reshape(self.fc_weights.shape).copy(),
                            v[b:].copy())

    def check(self, scheme: CircuitScheme):
        if self.quantum.shape != (scheme.n_params,):
            raise ModelError(f"{scheme.name} has {scheme.n_params} angles, params carry "
                             f"{self.quantum.shape}")
        if self.fc_weights.shape != (scheme.n_measured, N_CLASSES):
            raise ModelError(f"fc_weights must be ({scheme.n_measured}, {N_CLASSES}), "
                             f"got {self.fc_weights.shape}")
        if self.fc_bias.shape != (N_CLASSES,):
            raise ModelError(f"fc_bias must have {N_CLASSES} entries, got {self.fc_bias.shape}")
        if not np.all(np.isfinite(self.flat())):
            raise ModelError("parameters must be finite")


def init_params(scheme: CircuitScheme, seed: int = 0) -> HybridParams:
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(scheme.n_measured)
    return HybridParams(
        quantum=rng.uniform(0.0, 2 * np.pi, scheme.n_params),
        fc_weights=rng.uniform(-bound, bound, (scheme.n_measured, N_CLASSES)),
        fc_bias=rng.uniform(-bound, bound, N_CLASSES),
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _inputs(scheme: CircuitScheme, xs) -> np.ndarray:
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim == 1:
        xs = xs[None, :]
    if xs.ndim != 2 or xs.shape[1] != scheme.input_dim:
        raise ModelError(f"{scheme.name} takes {scheme.input_dim} inputs per sample, "
                         f"got shape {xs.shape}")
    return xs


def expectations(scheme: CircuitScheme, hp: HybridParams, xs, noise: NoiseModel | None = None):
    xs = _inputs(scheme, xs)
    if noise is None:
        return forward_batch(scheme, hp.quantum, xs)
    return noisy_expectations_batch(scheme, hp.quantum, xs, noise)


def predict(scheme: CircuitScheme, hp: HybridParams, x, noise: NoiseModel | None = None) -> np.ndarray:
    """Logits; a single input gives shape (10,), a batch (batch, 10)."""
    hp.check(scheme)
    single = np.asarray(x).ndim == 1
    z = expectations(scheme, hp, x, noise)
    logits = z @ hp.fc_weights + hp.fc_bias
    return logits[0] if single else logits


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-sample -log softmax[label]."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=-1))
    return logz - shifted[np.arange(len(labels)), labels]


def _labels(labels, batch: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if labels.size != batch:
        raise ModelError(f"{batch} samples but {labels.size} labels")
    if labels.size and (labels.min() < 0 or labels.max() >= N_CLASSES):
        raise ModelError(f"labels must lie in 0..{N_CLASSES - 1}")
    return labels


def loss_and_grad(scheme: CircuitScheme, hp: HybridParams, xs, labels,
                  noise: NoiseModel | None = None, batch_index: int | None = None):
    """Mean cross-entropy over the batch and its gradient as a HybridParams.

    With `noise`, expectations and quantum gradients are trajectory averages;
    otherwise a fused noiseless pass computes everything in one sweep.
    """
    hp.check(scheme)
    xs = _inputs(scheme, xs)
    B = xs.shape[0]
    if B == 0:
        raise ModelError("empty batch")
    labels = _labels(labels, B)
    prog = scheme.program
    if noise is None or noise.is_noiseless:
        angles = scheme.bind_angles(hp.quantum, xs)
        z = np.empty((B, scheme.n_qubits))
        dz = np.empty((B, scheme.n_qubits))
        ga = np.empty((B, prog.n_ops, 3))
        K.head_vjp_batch(scheme.n_qubits, prog.codes, prog.ctrl, prog.tgt, angles,
                         np.ascontiguousarray(hp.fc_weights), hp.fc_bias, labels, 1.0 / B,
                         prog.first_trainable, prog.needs_grad, z, dz, ga)
        g_quantum = prog.param_grad(ga.sum(axis=0), scheme.n_params)
    else:
        z = noisy_expectations_batch(scheme, hp.quantum, xs, noise)
        p = softmax(z @ hp.fc_weights + hp.fc_bias)
        p[np.arange(B), labels] -= 1.0
        dz = (p @ hp.fc_weights.T) / B
        _, g = vjp(scheme, hp.quantum, xs, dz, noise)
        g_quantum = g.sum(axis=0)
    logits = z @ hp.fc_weights + hp.fc_bias
    loss = float(cross_entropy(logits, labels).mean())
    if not np.isfinite(loss):
        where = f" in batch {batch_index}" if batch_index is not None else ""
        raise TrainingError(f"non-finite loss{where}")
    dlogits = softmax(logits)
    dlogits[np.arange(B), labels] -= 1.0
    dlogits /= B
    grad = HybridParams(g_quantum, z.T @ dlogits, dlogits.sum(axis=0))
    return loss, grad


def loss(scheme: CircuitScheme, hp: HybridParams, xs, labels, noise=None) -> float:
    xs = _inputs(scheme, xs)
    logits = predict(scheme, hp, xs, noise)
    return float(cross_entropy(logits, _labels(labels, len(xs))).mean())


def config_hash(scheme: CircuitScheme) -> str:
    """Digest of the compiled circuit; changes whenever any gate or slot changes."""
    desc = repr((scheme.name, scheme.n_qubits, scheme.input_dim, scheme.layout, scheme.ops))
    return hashlib.sha256(desc.encode()).hexdigest()[:16]


def save_checkpoint(path, scheme: CircuitScheme, hp: HybridParams, extra: dict | None = None):
    """JSON with hex-float values, so a reload is bit-exact."""
    rec = {
        "version": CHECKPOINT_VERSION,
        "scheme": scheme.name,
        "n_qubits": scheme.n_qubits,
        "layout": scheme.layout,
        "config_hash": config_hash(scheme),
        "quantum": [float(v).hex() for v in hp.quantum],
        "fc_weights": [[float(v).hex() for v in row] for row in hp.fc_weights],
        "fc_bias": [float(v).hex() for v in hp.fc_bias],
        "extra": extra or {},
    }
    Path(path).write_text(json.dumps(rec, indent=1) + "\n")


def read_checkpoint(path) -> dict:
    try:
        rec = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ModelError(f"{path}: unreadable checkpoint ({e})") from e
    if rec.get("version") != CHECKPOINT_VERSION:
        raise ModelError(f"{path}: unsupported checkpoint version {rec.get('version')!r}")
    unhex = np.vectorize(float.fromhex, otypes=[np.float64])
    rec["params"] = HybridParams(
        unhex(np.array(rec["quantum"], dtype=object)).reshape(-1),
        unhex(np.array(rec["fc_weights"], dtype=object)).reshape(len(rec["fc_weights"]), -1),
        unhex(np.array(rec["fc_bias"], dtype=object)).reshape(-1),
    )
    return rec


def load_checkpoint(path, scheme: CircuitScheme) -> HybridParams:
    rec = read_checkpoint(path)
    if rec["config_hash"] != config_hash(scheme):
        raise ModelError(f"{path}: checkpoint was made for a different circuit "
                         f"({rec['scheme']}, hash {rec['config_hash']})")
    hp = rec["params"]
    hp.check(scheme)
    return hp
