"""QMLP circuit templates.

A vertical scheme is

    S0(x) ; U_1 ; R_2(x) ; U_2 ; ... ; R_L(x) ; U_L

where S0 is one RX(x_k) per qubit, each block U_i is a ROT on every qubit
followed by an entangler layer, and each re-uploading unit R_i puts one
input-dependent rotation on every qubit. CNOT entanglers use a chain
(n - 1 gates per block), parameterized ones a ring (n gates per block);
those are the only layouts that reproduce the Table 1 gate and parameter
totals.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .errors import CompilationError, ConfigError, EncodingError, ExecutionError
from .gates import (KIND_CODE, N_PARAMS, PREPROCESSING, GateOp, InputSlot,
                    Trainable, preprocess)

ENTANGLERS = ("NONE", "CNOT", "CRX", "CRY", "CRX_CRY")
TOPOLOGIES = ("CHAIN", "RING")
LAYOUTS = ("VERTICAL", "HORIZONTAL")
MAX_HORIZONTAL_QUBITS = 20

_PRE_CODE = {p: i for i, p in enumerate(PREPROCESSING)}


@dataclass(frozen=True)
class RuuSpec:
    """Re-uploading unit: gate and preprocessing for even and odd qubits."""

    gates: tuple[str, str] = ("RX", "RX")
    pre: tuple[str, str] = ("identity", "identity")

    def __post_init__(self):
        for g in self.gates:
            if g not in ("RX", "RY", "RZ"):
                raise ConfigError(f"re-upload gate must be RX, RY or RZ, got {g!r}")
        for p in self.pre:
            if p not in PREPROCESSING:
                raise ConfigError(f"unknown preprocessing {p!r}")

    @classmethod
    def uniform(cls, gate: str = "RX", pre: str = "identity") -> "RuuSpec":
        return cls((gate, gate), (pre, pre))

    def gate_for(self, qubit: int) -> tuple[str, str]:
        return self.gates[qubit % 2], self.pre[qubit % 2]


@dataclass(frozen=True)
class SchemeConfig:
    name: str
    ruu: RuuSpec
    entangler: str
    n_blocks: int = 2
    topology: str | None = None
    layout: str = "VERTICAL"

    def __post_init__(self):
        if self.entangler not in ENTANGLERS:
            raise ConfigError(f"unknown entangler {self.entangler!r}")
        if self.topology is not None and self.topology not in TOPOLOGIES:
            raise ConfigError(f"unknown topology {self.topology!r}")
        if self.layout not in LAYOUTS:
            raise ConfigError(f"unknown layout {self.layout!r}")
        if self.n_blocks < 1:
            raise ConfigError(f"n_blocks must be >= 1, got {self.n_blocks}")

    @property
    def resolved_topology(self) -> str:
        if self.topology is not None:
            return self.topology
        return "CHAIN" if self.entangler == "CNOT" else "RING"


_RX = RuuSpec.uniform("RX")
_RXY = RuuSpec(("RX", "RY"))

SCHEMES: dict[str, SchemeConfig] = {
    c.name: c for c in (
        SchemeConfig("RX-CNOT", _RX, "CNOT", 2),
        SchemeConfig("DEEP-RX-CNOT", _RX, "CNOT", 4),
        SchemeConfig("RX-CRX", _RX, "CRX", 2),
        SchemeConfig("DEEP-RX-CRX", _RX, "CRX", 4),
        SchemeConfig("RXY(Relu)-CRX", RuuSpec(("RX", "RY"), ("identity", "scaled_relu")), "CRX", 2),
        SchemeConfig("RXX(Relu)-CRX", RuuSpec(("RX", "RX"), ("identity", "relu")), "CRX", 2),
        SchemeConfig("RXY-CRXY", _RXY, "CRX_CRY", 2),
        SchemeConfig("RXY-CNOT", _RXY, "CNOT", 2),
    )
}

# (total gates, trainable parameters, blocks) at 16 qubits, as published
TABLE1 = {
    "RX-CNOT": (94, 96, 2),
    "DEEP-RX-CNOT": (188, 192, 4),
    "RX-CRX": (96, 128, 2),
    "DEEP-RX-CRX": (192, 256, 4),
    "RXY(Relu)-CRX": (96, 128, 2),
    "RXX(Relu)-CRX": (96, 128, 2),
    "RXY-CRXY": (96, 128, 2),
    "RXY-CNOT": (94, 96, 2),
}

# RX-CRX at 16 qubits: 1-qubit gates (parameterized), 2-qubit gates, params, depth
TABLE2_QMLP = {"single_qubit": 64, "single_qubit_parameterized": 32,
               "two_qubit": 32, "params": 128, "depth": 36}


@dataclass(frozen=True)
class CircuitScheme:
    """A compiled circuit template with trainable and input slots."""

    name: str
    n_qubits: int
    ops: tuple[GateOp, ...]
    input_dim: int = 0
    n_blocks: int = 0
    entangler: str = "NONE"
    topology: str = "CHAIN"
    ruu: tuple[RuuSpec, ...] = ()
    layout: str = "VERTICAL"
    config: SchemeConfig | None = field(default=None, compare=False)

    def __post_init__(self):
        for op in self.ops:
            for q in op.qubits:
                if q >= self.n_qubits:
                    raise CompilationError(f"{op.kind} on qubit {q} exceeds {self.n_qubits} qubits")
            for p in op.params:
                if isinstance(p, InputSlot) and p.index >= self.input_dim:
                    raise CompilationError(
                        f"input slot {p.index} out of range for input_dim {self.input_dim}")
        slots = sorted({p.index for op in self.ops for p in op.params if isinstance(p, Trainable)})
        if slots != list(range(len(slots))):
            raise CompilationError("trainable slots must be numbered 0..n_params-1")

    @classmethod
    def from_ops(cls, ops: Sequence[GateOp], n_qubits: int, input_dim: int = 0,
                 name: str = "custom") -> "CircuitScheme":
        return cls(name=name, n_qubits=n_qubits, ops=tuple(ops), input_dim=input_dim)

    @cached_property
    def n_params(self) -> int:
        return len({p.index for op in self.ops for p in op.params if isinstance(p, Trainable)})

    @cached_property
    def n_input_slots(self) -> int:
        return sum(isinstance(p, InputSlot) for op in self.ops for p in op.params)

    @property
    def n_measured(self) -> int:
        return self.n_qubits

    def bind_angles(self, params, xs) -> np.ndarray:
        """Every gate angle for a batch of inputs, shape (batch, n_ops, 3).

        Raises ExecutionError when params or inputs do not cover every slot.
        """
        params = np.asarray(params, dtype=np.float64).ravel()
        if params.size != self.n_params:
            raise ExecutionError(f"{self.name}: expected {self.n_params} parameters, got {params.size}")
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim == 1:
            xs = xs[None, :]
        if xs.ndim != 2 or (self.input_dim and xs.shape[1] != self.input_dim):
            raise ExecutionError(f"{self.name}: expected inputs of length {self.input_dim}, "
                                 f"got shape {xs.shape}")
        if not (np.all(np.isfinite(params)) and np.all(np.isfinite(xs))):
            raise ExecutionError(f"{self.name}: parameters and inputs must be finite")
        return self.program.angles(params, xs)

    @cached_property
    def program(self) -> "Program":
        return Program.compile(self)

    def summary(self) -> "SchemeSummary":
        return scheme_summary(self)


class Program:
    """Flat arrays consumed by the kernels plus the slot-binding tables."""

    def __init__(self, codes, ctrl, tgt, literal, train_idx, input_idx, input_pre):
        self.codes = codes
        self.ctrl = ctrl
        self.tgt = tgt
        self.literal = literal
        self.train_idx = train_idx
        self.input_idx = input_idx
        self.input_pre = input_pre
        self.needs_grad = (train_idx >= 0).any(axis=1)
        trainable = np.nonzero(self.needs_grad)[0]
        # reverse pass can stop at the first trainable gate
        self.first_trainable = int(trainable[0]) if trainable.size else len(codes)

    @classmethod
    def compile(cls, scheme: CircuitScheme) -> "Program":
        n = len(scheme.ops)
        codes = np.empty(n, dtype=np.int64)
        ctrl = np.full(n, -1, dtype=np.int64)
        tgt = np.empty(n, dtype=np.int64)
        literal = np.zeros((n, 3))
        train_idx = np.full((n, 3), -1, dtype=np.int64)
        input_idx = np.full((n, 3), -1, dtype=np.int64)
        input_pre = np.zeros((n, 3), dtype=np.int64)
        for k, op in enumerate(scheme.ops):
            codes[k] = KIND_CODE[op.kind]
            if op.is_two_qubit:
                ctrl[k], tgt[k] = op.qubits
            else:
                tgt[k] = op.qubits[0]
            for j, p in enumerate(op.params):
                if isinstance(p, Trainable):
                    train_idx[k, j] = p.index
                elif isinstance(p, InputSlot):
                    input_idx[k, j] = p.index
                    input_pre[k, j] = _PRE_CODE[p.pre]
                else:
                    literal[k, j] = float(p)
        return cls(codes, ctrl, tgt, literal, train_idx, input_idx, input_pre)

    @property
    def n_ops(self) -> int:
        return self.codes.size

    def angles(self, params, xs) -> np.ndarray:
        """Resolve every gate angle for a batch of inputs: shape (batch, n_ops, 3)."""
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        params = np.asarray(params, dtype=np.float64)
        out = np.broadcast_to(self.literal, (xs.shape[0],) + self.literal.shape).copy()
        tmask = self.train_idx >= 0
        if tmask.any():
            out[:, tmask] += params[self.train_idx[tmask]]
        imask = self.input_idx >= 0
        if imask.any():
            vals = xs[:, self.input_idx[imask]]
            pre = self.input_pre[imask]
            for name, code in _PRE_CODE.items():
                sel = pre == code
                if sel.any():
                    vals[:, sel] = preprocess(vals[:, sel], name)
            out[:, imask] += vals
        return out

    def param_grad(self, angle_grad: np.ndarray, n_params: int) -> np.ndarray:
        """Chain d/d(angle) (n_ops, 3) to d/d(trainable slot)."""
        g = np.zeros(n_params)
        mask = self.train_idx >= 0
        np.add.at(g, self.train_idx[mask], angle_grad[mask])
        return g


def encode_input(x, n_qubits: int | None = None) -> list[GateOp]:
    """Angle-encoding layer: RX(x_k) on qubit k."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if n_qubits is not None and x.size != n_qubits:
        raise EncodingError(f"input has {x.size} angles for {n_qubits} qubits")
    if not np.all(np.isfinite(x)):
        raise EncodingError("input angles must be finite")
    return [GateOp("RX", (k,), (float(v),)) for k, v in enumerate(x)]


def _entangler_pairs(n: int, topology: str) -> list[tuple[int, int]]:
    pairs = [(k, k + 1) for k in range(n - 1)]
    if topology == "RING" and n > 1:
        pairs.append((n - 1, 0))
    return pairs


def _entangler_kind(entangler: str, position: int) -> str:
    if entangler == "CRX_CRY":
        return "CRX" if position % 2 == 0 else "CRY"
    return entangler


class _SlotCounter:
    def __init__(self):
        self.next = 0

    def take(self) -> Trainable:
        t = Trainable(self.next)
        self.next += 1
        return t


def _block(qubits: Sequence[int], cfg: SchemeConfig, slots: _SlotCounter) -> list[GateOp]:
    ops = [GateOp("ROT", (q,), (slots.take(), slots.take(), slots.take())) for q in qubits]
    if cfg.entangler == "NONE":
        return ops
    local = _entangler_pairs(len(qubits), cfg.resolved_topology)
    for pos, (a, b) in enumerate(local):
        kind = _entangler_kind(cfg.entangler, pos)
        params = tuple(slots.take() for _ in range(N_PARAMS[kind]))
        ops.append(GateOp(kind, (qubits[a], qubits[b]), params))
    return ops


def compile_scheme(cfg: SchemeConfig, n_qubits: int, input_dim: int | None = None) -> CircuitScheme:
    """Compile a scheme config into a vertical circuit on `n_qubits` qubits."""
    if input_dim is None:
        input_dim = n_qubits
    if n_qubits < 1:
        raise ConfigError(f"need at least one qubit, got {n_qubits}")
    if input_dim != n_qubits:
        raise ConfigError(f"one input per qubit: input_dim {input_dim} != n_qubits {n_qubits}")
    qubits = list(range(n_qubits))
    slots = _SlotCounter()
    ops = [GateOp("RX", (q,), (InputSlot(q),)) for q in qubits]
    for b in range(cfg.n_blocks):
        if b > 0:
            for q in qubits:
                gate, pre = cfg.ruu.gate_for(q)
                ops.append(GateOp(gate, (q,), (InputSlot(q, pre),)))
        ops.extend(_block(qubits, cfg, slots))
    scheme = CircuitScheme(
        name=cfg.name, n_qubits=n_qubits, ops=tuple(ops), input_dim=input_dim,
        n_blocks=cfg.n_blocks, entangler=cfg.entangler, topology=cfg.resolved_topology,
        ruu=(cfg.ruu,) * (cfg.n_blocks - 1), layout="VERTICAL", config=cfg,
    )
    if cfg.layout == "HORIZONTAL":
        return build_horizontal(scheme)
    return scheme


def build_scheme(name: str, n_qubits: int = 16, input_dim: int | None = None,
                 **overrides) -> CircuitScheme:
    """Compile a Table 1 scheme by name; `overrides` replace SchemeConfig fields."""
    try:
        cfg = SCHEMES[name]
    except KeyError:
        raise ConfigError(f"unknown scheme {name!r}; choose from {sorted(SCHEMES)}") from None
    if overrides:
        cfg = replace(cfg, **overrides)
    return compile_scheme(cfg, n_qubits, input_dim)


def build_horizontal(scheme: CircuitScheme) -> CircuitScheme:
    """Trade depth for width: one register of n qubits per block.

    Every register gets its own S0(x) encoding and its own trainable block;
    register b is coupled to register b+1 by one entangler from its last
    qubit to the next register's first qubit. All qubits are measured.
    """
    if scheme.layout != "VERTICAL":
        raise ConfigError("build_horizontal expects a vertical scheme")
    cfg = scheme.config
    if cfg is None:
        raise ConfigError("scheme has no config to rebuild from")
    n, L = scheme.n_qubits, scheme.n_blocks
    total = n * L
    if total > MAX_HORIZONTAL_QUBITS:
        raise ConfigError(
            f"horizontal layout needs {total} qubits (> {MAX_HORIZONTAL_QUBITS})")
    slots = _SlotCounter()
    ops: list[GateOp] = []
    registers = [list(range(b * n, (b + 1) * n)) for b in range(L)]
    for reg in registers:
        ops.extend(GateOp("RX", (q,), (InputSlot(k),)) for k, q in enumerate(reg))
    for reg in registers:
        ops.extend(_block(reg, cfg, slots))
    if cfg.entangler != "NONE":
        for b in range(L - 1):
            kind = _entangler_kind(cfg.entangler, b)
            params = tuple(slots.take() for _ in range(N_PARAMS[kind]))
            ops.append(GateOp(kind, (registers[b][-1], registers[b + 1][0]), params))
    return CircuitScheme(
        name=f"{scheme.name}/horizontal", n_qubits=total, ops=tuple(ops),
        input_dim=scheme.input_dim, n_blocks=L, entangler=scheme.entangler,
        topology=scheme.topology, ruu=(), layout="HORIZONTAL",
        config=replace(cfg, layout="HORIZONTAL"),
    )


class SchemeSummary(NamedTuple):
    gates: int
    params: int
    blocks: int
    depth: int
    single_qubit: int = 0
    single_qubit_parameterized: int = 0
    two_qubit: int = 0


def circuit_depth(ops: Sequence[GateOp], n_qubits: int) -> int:
    """Greedy as-soon-as-possible layering: longest chain of gates sharing qubits."""
    level = [0] * n_qubits
    depth = 0
    for op in ops:
        d = 1 + max(level[q] for q in op.qubits)
        for q in op.qubits:
            level[q] = d
        depth = max(depth, d)
    return depth


def scheme_summary(scheme: CircuitScheme) -> SchemeSummary:
    ops = scheme.ops
    if not ops:
        return SchemeSummary(0, 0, 0, 0)
    single = [op for op in ops if not op.is_two_qubit]
    return SchemeSummary(
        gates=len(ops),
        params=scheme.n_params,
        blocks=scheme.n_blocks,
        depth=circuit_depth(ops, scheme.n_qubits),
        single_qubit=len(single),
        single_qubit_parameterized=sum(op.is_trainable for op in single),
        two_qubit=len(ops) - len(single),
    )
