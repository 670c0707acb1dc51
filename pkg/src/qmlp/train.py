"""ADAM training loop, evaluation and metric history."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .ansatz import CircuitScheme
from .errors import ConfigError, TrainingError
from .model import (N_CLASSES, HybridParams, init_params, loss_and_grad, predict,
                    save_checkpoint)
from .noise import NoiseModel

log = logging.getLogger(__name__)

# wall time stays in memory and in the JSON side-file so history CSVs are reproducible
HISTORY_COLUMNS = ("epoch", "train_loss", "test_acc")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    weight_decay: float = 1e-4
    batch_size: int = 32
    epochs: int = 30
    seed: int = 0
    train_subset: int | None = None
    test_subset: int | None = None
    # evaluation noise; also used for the training loss when noisy_training is set
    noise: NoiseModel | None = None
    noisy_training: bool = False
    eval_every: int = 1
    decay_quantum: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size))


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray, cfg: TrainConfig,
              decay_mask: np.ndarray | None = None):
    """One ADAM update with L2 weight decay folded into the gradient.

    `decay_mask` selects which entries receive weight decay (all by default).
    Returns (new params, new state); inputs are not modified.
    """
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise TrainingError(f"shape mismatch: params {params.shape}, grads {grads.shape}, "
                            f"state {state.m.shape}")
    if not np.all(np.isfinite(grads)):
        raise TrainingError("non-finite gradient")
    g = grads
    if cfg.weight_decay:
        decay = cfg.weight_decay * params
        if decay_mask is not None:
            decay = np.where(decay_mask, decay, 0.0)
        g = g + decay
    t = state.t + 1
    m = cfg.beta1 * state.m + (1 - cfg.beta1) * g
    v = cfg.beta2 * state.v + (1 - cfg.beta2) * g * g
    m_hat = m / (1 - cfg.beta1 ** t)
    v_hat = v / (1 - cfg.beta2 ** t)
    new = params - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return new, AdamState(m, v, t)


class EvalResult(NamedTuple):
    accuracy: float
    confusion: np.ndarray   # confusion[true, predicted]


def evaluate(scheme: CircuitScheme, hp: HybridParams, xs, labels,
             noise: NoiseModel | None = None, chunk: int = 256) -> EvalResult:
    xs = np.asarray(xs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(xs) == 0:
        raise ConfigError("cannot evaluate on an empty dataset")
    preds = np.concatenate([
        predict(scheme, hp, xs[i:i + chunk], noise).argmax(axis=1)
        for i in range(0, len(xs), chunk)
    ])
    confusion = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(confusion, (labels, preds), 1)
    return EvalResult(float(np.mean(preds == labels)), confusion)


@dataclass
class FitResult:
    params: HybridParams           # best-test-accuracy parameters
    final_params: HybridParams
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_test_acc: float = float("nan")


def epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n)


def fit(scheme: CircuitScheme, cfg: TrainConfig, train, test,
        hp: HybridParams | None = None, checkpoint_path=None,
        checkpoint_extra: dict | None = None) -> FitResult:
    """Train on (xs, labels) pairs; returns the best-test-accuracy parameters and history."""
    xtr, ytr = (np.asarray(a) for a in train)
    xte, yte = (np.asarray(a) for a in test)
    if cfg.train_subset is not None:
        xtr, ytr = xtr[:cfg.train_subset], ytr[:cfg.train_subset]
    if cfg.test_subset is not None:
        xte, yte = xte[:cfg.test_subset], yte[:cfg.test_subset]
    if len(xtr) == 0 or len(xte) == 0:
        raise ConfigError("training and test data must be nonempty")
    hp = init_params(scheme, cfg.seed) if hp is None else hp.copy()
    hp.check(scheme)
    flat = hp.flat()
    state = AdamState.zeros(flat.size)
    decay_mask = None
    if not cfg.decay_quantum:
        decay_mask = np.arange(flat.size) >= scheme.n_params
    grad_noise = cfg.noise if cfg.noisy_training else None

    result = FitResult(hp.copy(), hp.copy())
    best = -1.0
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = epoch_order(cfg.seed, epoch, len(xtr))
        losses, sizes = [], []
        for bi, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            try:
                loss, g = loss_and_grad(scheme, hp, xtr[idx], ytr[idx], grad_noise, batch_index=bi)
                flat, state = adam_step(state, flat, g.flat(), cfg, decay_mask)
            except TrainingError as e:
                raise TrainingError(f"epoch {epoch}, batch {bi}: {e}") from e
            hp = hp.unflat(flat)
            losses.append(loss)
            sizes.append(len(idx))
        train_loss = float(np.average(losses, weights=sizes))
        acc = float("nan")
        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            acc = evaluate(scheme, hp, xte, yte, cfg.noise).accuracy
            if acc > best:
                best = acc
                result.params, result.best_epoch, result.best_test_acc = hp.copy(), epoch, acc
                if checkpoint_path is not None:
                    save_checkpoint(checkpoint_path, scheme, hp,
                                    {**(checkpoint_extra or {}), "epoch": epoch,
                                     "test_acc": acc, "seed": cfg.seed})
        wall_ms = (time.perf_counter() - t0) * 1e3
        result.history.append({"epoch": epoch, "train_loss": train_loss,
                               "test_acc": acc, "wall_ms": wall_ms})
        log.info("%s seed %d epoch %d: loss %.4f test acc %.4f (%.0f ms)",
                 scheme.name, cfg.seed, epoch, train_loss, acc, wall_ms)
    result.final_params = hp
    return result


def write_history(path, history: list[dict]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(HISTORY_COLUMNS)
        for row in history:
            w.writerow([row["epoch"], repr(row["train_loss"]),
                        "" if np.isnan(row["test_acc"]) else repr(row["test_acc"])])


def read_history(path) -> list[dict]:
    with open(Path(path), newline="") as f:
        return list(csv.DictReader(f))
