"""Experiment drivers behind the CLI.

Each driver returns rows (dicts with a fixed column order) and can emit them
as a CSV plus a JSON side-file holding the config snapshot, aggregates and a
timestamp. CSVs carry no timing fields, so a rerun with the same config is
byte-identical.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import time
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import diff
from .ansatz import (SCHEMES, TABLE1, TABLE2_QMLP, CircuitScheme, RuuSpec, SchemeConfig,
                     build_horizontal, build_scheme, compile_scheme, scheme_summary)
from .data import Dataset, load_mnist, synthetic
from .errors import ConfigError, QMLPError
from .gates import GateOp, InputSlot
from .model import HybridParams
from .noise import NoiseModel
from .simulator import amplitude_encode, apply_gate
from .train import TrainConfig, evaluate, fit

log = logging.getLogger(__name__)

# 315 ADAM steps (2000 samples, batch 32, 5 epochs) instead of ~56k at full
# scale; see README "Desk scale".
DESK_LEARNING_RATE = 0.01

NOISE_MODES = ("none", "bitflip", "phaseflip", "both")


@dataclass(frozen=True)
class ExperimentConfig:
    scheme: str = "RX-CRX"
    schemes: tuple[str, ...] = ("RX-CRX", "RX-CNOT")
    input_size: int = 4
    input_sizes: tuple[int, ...] = (2, 3, 4)
    layout: str = "VERTICAL"
    dataset: str = "mnist"          # or a synthetic kind
    mnist_dir: str | None = None
    train_subset: int = 2000
    test_subset: int = 1000
    epochs: int = 5
    seeds: int = 3
    seed_base: int = 0
    learning_rate: float = DESK_LEARNING_RATE
    weight_decay: float = 1e-4
    batch_size: int = 32
    decay_quantum: bool = True
    p_bitflip: float = 0.01
    p_phaseflip: float = 0.01
    trajectories: int = 1000
    noise_seed: int = 0
    noise_modes: tuple[str, ...] = NOISE_MODES
    noise_test_subset: int | None = None
    noisy_training: bool = False
    depth_width_input_size: int = 2
    noise_qubit: int = 5
    image_index: int = 0
    points: int = 201
    out_dir: str = "results"

    def __post_init__(self):
        for s in (self.scheme, *self.schemes):
            if s not in SCHEMES:
                raise ConfigError(f"unknown scheme {s!r}; choose from {sorted(SCHEMES)}")
        for m in self.noise_modes:
            if m not in NOISE_MODES:
                raise ConfigError(f"unknown noise mode {m!r}; choose from {NOISE_MODES}")
        for k in (self.input_size, *self.input_sizes, self.depth_width_input_size):
            if k not in (2, 3, 4):
                raise ConfigError(f"input size must be 2, 3 or 4, got {k}")
        if self.seeds < 1:
            raise ConfigError(f"seeds must be >= 1, got {self.seeds}")

    @property
    def seed_list(self) -> list[int]:
        return list(range(self.seed_base, self.seed_base + self.seeds))

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(learning_rate=self.learning_rate, weight_decay=self.weight_decay,
                           batch_size=self.batch_size, epochs=self.epochs, seed=seed,
                           decay_quantum=self.decay_quantum,
                           noise=self.noise("both") if self.noisy_training else None,
                           noisy_training=self.noisy_training)

    def noise(self, mode: str) -> NoiseModel | None:
        if mode == "none":
            return None
        pb = self.p_bitflip if mode in ("bitflip", "both") else 0.0
        pp = self.p_phaseflip if mode in ("phaseflip", "both") else 0.0
        return NoiseModel(pb, pp, self.trajectories, self.noise_seed)

    def snapshot(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(d) - set(names)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        vals = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**vals)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"{path}: cannot read config ({e})") from e
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        # the noise block mirrors the flags p_bitflip/p_phaseflip/trajectories/noise_seed
        noise = d.pop("noise", None) or {}
        for src, dst in (("p_bitflip", "p_bitflip"), ("p_phaseflip", "p_phaseflip"),
                         ("trajectories", "trajectories"), ("seed", "noise_seed")):
            if src in noise:
                d[dst] = noise[src]
        return cls.from_dict(d)


# ---------------------------------------------------------------- data and training cells

@lru_cache(maxsize=8)
def _load(dataset: str, mnist_dir: str | None, k: int, n_train: int, n_test: int):
    if dataset == "mnist":
        tr = load_mnist(mnist_dir, "train").subset(n_train).downsample(k)
        te = load_mnist(mnist_dir, "test").subset(n_test).downsample(k)
    else:
        tr = synthetic(dataset, n_train, seed=0, k=k)
        te = synthetic(dataset, n_test, seed=1, k=k)
    return tr, te


def datasets(cfg: ExperimentConfig, k: int) -> tuple[Dataset, Dataset]:
    return _load(cfg.dataset, cfg.mnist_dir, k, cfg.train_subset, cfg.test_subset)


def make_scheme(name: str, k: int, layout: str = "VERTICAL") -> CircuitScheme:
    scheme = build_scheme(name, k * k)
    return build_horizontal(scheme) if layout == "HORIZONTAL" else scheme


_TRAINING_FIELDS = ("dataset", "mnist_dir", "train_subset", "test_subset", "epochs",
                    "learning_rate", "weight_decay", "batch_size", "decay_quantum",
                    "noisy_training", "p_bitflip", "p_phaseflip", "trajectories", "noise_seed")


def _training_key(cfg: ExperimentConfig):
    return tuple(getattr(cfg, f) for f in _TRAINING_FIELDS)


_CELLS: dict = {}


def train_cell(cfg: ExperimentConfig, name: str, k: int, seed: int, layout: str = "VERTICAL"):
    """Train one (scheme, input size, seed, layout) cell; memoized per process."""
    key = (name, k, seed, layout, _training_key(cfg))
    if key not in _CELLS:
        scheme = make_scheme(name, k, layout)
        tr, te = datasets(cfg, k)
        result = fit(scheme, cfg.train_config(seed), (tr.angles(), tr.labels),
                     (te.angles(), te.labels))
        _CELLS[key] = (scheme, result)
    return _CELLS[key]


def clear_cache():
    _CELLS.clear()
    _load.cache_clear()


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_report(out_dir, experiment: str, columns, rows, cfg: ExperimentConfig | None,
                 aggregates: dict | None = None) -> Path:
    """Write <experiment>.csv and <experiment>.json; returns the CSV path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{experiment}.csv"
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])
    meta = {
        "experiment": experiment,
        "config": cfg.snapshot() if cfg is not None else {},
        "aggregates": aggregates or {},
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    (out / f"{experiment}.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return path


def _aggregate(rows, group_cols, value_col) -> dict:
    groups: dict = {}
    for r in rows:
        groups.setdefault("/".join(str(r[c]) for c in group_cols), []).append(r[value_col])
    return {g: {"mean": float(np.mean(v)), "std": float(np.std(v)), "n": len(v)}
            for g, v in sorted(groups.items())}


# ---------------------------------------------------------------- counts

COUNT_COLUMNS = ("scheme", "gates", "params", "blocks", "depth", "single_qubit",
                 "single_qubit_parameterized", "two_qubit", "expected", "match")


def cmd_counts(n_qubits: int = 16):
    """Table 1 rows for every scheme plus the Table 2 split for RX-CRX.

    Returns (rows, mismatches); mismatches lists human-readable problems.
    """
    rows, bad = [], []
    for name in SCHEMES:
        s = scheme_summary(build_scheme(name, n_qubits))
        want = TABLE1[name]
        got = (s.gates, s.params, s.blocks)
        ok = got == want
        if not ok:
            bad.append(f"{name}: got {got}, expected {want}")
        rows.append({"scheme": name, "gates": s.gates, "params": s.params, "blocks": s.blocks,
                     "depth": s.depth, "single_qubit": s.single_qubit,
                     "single_qubit_parameterized": s.single_qubit_parameterized,
                     "two_qubit": s.two_qubit, "expected": "/".join(map(str, want)),
                     "match": ok})
    s = scheme_summary(build_scheme("RX-CRX", n_qubits))
    got2 = {"single_qubit": s.single_qubit,
            "single_qubit_parameterized": s.single_qubit_parameterized,
            "two_qubit": s.two_qubit, "params": s.params, "depth": s.depth}
    for key, want in TABLE2_QMLP.items():
        if got2[key] != want:
            bad.append(f"RX-CRX {key}: got {got2[key]}, expected {want}")
    return rows, bad


# ---------------------------------------------------------------- nonlinearity

NONLINEARITY_COLUMNS = ("variant", "x", "z")

_RUU_VARIANTS = {
    "RX": RuuSpec.uniform("RX"),
    "RY": RuuSpec.uniform("RY"),
    "RZ": RuuSpec.uniform("RZ"),
    "RX-relu": RuuSpec.uniform("RX", "relu"),
}


def one_qubit_scheme(n_layers: int, ruu: RuuSpec | None = None,
                     encode_pre: str = "identity") -> CircuitScheme:
    """1-qubit circuit: RX(x), then n_layers ROT blocks with a re-upload between them.

    `encode_pre` preprocesses the first upload as well, so a ReLU variant can
    gate every upload of x rather than only the re-uploads.
    """
    cfg = SchemeConfig("1q", ruu or RuuSpec.uniform("RX"), "NONE", n_layers)
    scheme = compile_scheme(cfg, 1)
    if encode_pre == "identity":
        return scheme
    first = GateOp("RX", (0,), (InputSlot(0, encode_pre),))
    return dataclasses.replace(scheme, ops=(first,) + scheme.ops[1:])


def nonlinearity_curves(points: int = 201, seed: int = 0):
    """<Z>(x) of 2-layer 1-qubit circuits for each re-upload variant.

    "<variant>/identity" freezes both ROT blocks to identity; "<variant>/random"
    uses one fixed random draw of block angles shared by all variants. In the
    RX-relu variant both uploads see relu(x), so its curve is flat for x < 0.
    """
    xs = np.linspace(-np.pi, np.pi, points)[:, None]
    rows = []

    def emit(variant, z):
        rows.extend({"variant": variant, "x": float(x), "z": float(v)}
                    for x, v in zip(xs[:, 0], z))

    emit("no-ruu", diff.forward_batch(one_qubit_scheme(1), np.zeros(3), xs)[:, 0])
    theta = np.random.default_rng(seed).uniform(0, 2 * np.pi, 6)
    for name, ruu in _RUU_VARIANTS.items():
        scheme = one_qubit_scheme(2, ruu, ruu.pre[0])
        emit(f"{name}/identity", diff.forward_batch(scheme, np.zeros(6), xs)[:, 0])
        emit(f"{name}/random", diff.forward_batch(scheme, theta, xs)[:, 0])
    return rows


# ---------------------------------------------------------------- encoding error confinement

MSE_COLUMNS = ("encoding", "pixel", "original", "reconstructed", "sq_error")


def angle_reconstruction(image: np.ndarray, flip_qubit: int | None) -> np.ndarray:
    """Angle-encode a k x k image, optionally apply X after the encoding on one qubit,
    and read pixels back as arccos(<Z>)/pi."""
    pix = np.asarray(image, dtype=np.float64).ravel()
    n = pix.size
    ops = [GateOp("RX", (q,), (InputSlot(q),)) for q in range(n)]
    if flip_qubit is not None:
        ops.append(GateOp("X", (flip_qubit,)))
    scheme = CircuitScheme.from_ops(ops, n, input_dim=n, name="angle-encoding")
    z = diff.forward(scheme, np.zeros(0), np.pi * pix)
    return np.arccos(np.clip(z, -1.0, 1.0)) / np.pi


def amplitude_reconstruction(image: np.ndarray, flip_qubit: int | None) -> np.ndarray:
    """Amplitude-encode, optionally apply X on one qubit, read pixels back as
    sqrt(probability) times the original norm."""
    pix = np.asarray(image, dtype=np.float64).ravel()
    state = amplitude_encode(pix)
    if flip_qubit is not None:
        apply_gate(state, GateOp("X", (flip_qubit,)))
    return np.sqrt(state.probabilities()[: pix.size]) * np.linalg.norm(pix)


def encoding_mse(image: np.ndarray, noise_qubit: int | None):
    """Per-pixel squared reconstruction error for both encodings of a 4x4 image.

    The angle encoding uses one qubit per pixel, so noise_qubit addresses a
    pixel; the amplitude encoding has log2(16) = 4 qubits and receives its X
    on qubit noise_qubit mod 4.
    """
    pix = np.asarray(image, dtype=np.float64).ravel()
    n_amp = max(1, int(np.ceil(np.log2(pix.size))))
    flips = {"angle": noise_qubit,
             "amplitude": None if noise_qubit is None else noise_qubit % n_amp}
    if noise_qubit is not None and not 0 <= noise_qubit < pix.size:
        raise ConfigError(f"noise qubit must be in [0, {pix.size}), got {noise_qubit}")
    rows = []
    for enc, fn in (("angle", angle_reconstruction), ("amplitude", amplitude_reconstruction)):
        rec = fn(pix, flips[enc])
        rows.extend({"encoding": enc, "pixel": i, "original": float(pix[i]),
                     "reconstructed": float(rec[i]), "sq_error": float((rec[i] - pix[i]) ** 2)}
                    for i in range(pix.size))
    return rows


def cmd_encoding_mse(cfg: ExperimentConfig, noise_qubit: int | None):
    _, te = datasets(cfg, 4)
    if not 0 <= cfg.image_index < len(te):
        raise ConfigError(f"image index {cfg.image_index} out of range for {len(te)} test images")
    return encoding_mse(te.images[cfg.image_index], noise_qubit)


# ---------------------------------------------------------------- training studies

COMPARE_COLUMNS = ("scheme", "noise_mode", "seed", "accuracy")

# Published full-scale MNIST-10 accuracies of two earlier designs. They are
# static numbers carried into the compare report for context; nothing here
# retrains or re-evaluates those models.
EXTERNAL_REFERENCE = {
    "note": "external published figures, full-scale training; not reproduced",
    "QuantumFlow": {"none": 0.69, "noisy": 0.10},
    "QuantumNAS": {"none": 0.67, "bitflip": 0.52, "phaseflip": 0.57},
}


def _noise_eval(cfg, scheme, hp: HybridParams, te: Dataset, mode: str) -> float:
    noise = cfg.noise(mode)
    xs, ys = te.angles(), te.labels
    if noise is not None and cfg.noise_test_subset is not None:
        xs, ys = xs[:cfg.noise_test_subset], ys[:cfg.noise_test_subset]
    return evaluate(scheme, hp, xs, ys, noise).accuracy


def cmd_compare(cfg: ExperimentConfig):
    """Train each scheme noise-free per seed, evaluate under every noise mode.

    A failing cell is logged and skipped; the others still run.
    """
    rows = []
    for name in cfg.schemes:
        for seed in cfg.seed_list:
            try:
                scheme, res = train_cell(cfg, name, cfg.input_size, seed)
                _, te = datasets(cfg, cfg.input_size)
                for mode in cfg.noise_modes:
                    rows.append({"scheme": name, "noise_mode": mode, "seed": seed,
                                 "accuracy": _noise_eval(cfg, scheme, res.params, te, mode)})
            except QMLPError as e:
                log.error("compare cell %s seed %d failed: %s", name, seed, e)
    rows.sort(key=lambda r: (r["scheme"], NOISE_MODES.index(r["noise_mode"]), r["seed"]))
    return rows


DEPTH_WIDTH_COLUMNS = ("layout", "seed", "epoch", "test_acc", "n_qubits", "n_params")


def cmd_depth_width(cfg: ExperimentConfig):
    """Vertical vs horizontal layouts of `cfg.scheme` on k x k inputs, per-epoch accuracy."""
    k = cfg.depth_width_input_size
    rows = []
    for layout in ("VERTICAL", "HORIZONTAL"):
        for seed in cfg.seed_list:
            scheme, res = train_cell(cfg, cfg.scheme, k, seed, layout)
            rows.extend({"layout": layout, "seed": seed, "epoch": h["epoch"],
                         "test_acc": h["test_acc"], "n_qubits": scheme.n_qubits,
                         "n_params": scheme.n_params} for h in res.history)
    return rows


SWEEP_COLUMNS = ("input_size", "seed", "accuracy")


def cmd_input_sweep(cfg: ExperimentConfig):
    rows = []
    for k in sorted(cfg.input_sizes):
        for seed in cfg.seed_list:
            _, res = train_cell(cfg, cfg.scheme, k, seed)
            rows.append({"input_size": k, "seed": seed, "accuracy": res.best_test_acc})
    return rows


def final_accuracy(rows, **match) -> list[float]:
    """Best per-seed accuracy from depth-width rows (or any rows with test_acc)."""
    best: dict = {}
    for r in rows:
        if all(r[k] == v for k, v in match.items()):
            best[r["seed"]] = max(best.get(r["seed"], -1.0), r["test_acc"])
    return [best[s] for s in sorted(best)]
