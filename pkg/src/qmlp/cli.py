"""Command-line entry point: `qmlp <subcommand> [flags]`.

Every subcommand accepts `--config file.json`; flags given on the command
line override values from the file.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as E
from .errors import QMLPError
from .model import load_checkpoint, read_checkpoint
from .train import evaluate, fit, write_history


def _csv_list(cast):
    def parse(s):
        return tuple(cast(v) for v in s.split(",") if v)
    return parse


# flag -> (ExperimentConfig field, argparse kwargs)
_COMMON = {
    "--scheme": ("scheme", {}),
    "--input-size": ("input_size", {"type": int, "choices": (2, 3, 4)}),
    "--dataset": ("dataset", {"help": "mnist, two_gaussians, parity or constant"}),
    "--mnist-dir": ("mnist_dir", {"help": "IDX directory (fallback: $QMLP_MNIST_DIR, "
                                          "then the bundled 5000-image subset)"}),
    "--train-subset": ("train_subset", {"type": int}),
    "--test-subset": ("test_subset", {"type": int}),
    "--epochs": ("epochs", {"type": int}),
    "--seeds": ("seeds", {"type": int, "help": "number of seeds"}),
    "--seed-base": ("seed_base", {"type": int}),
    "--lr": ("learning_rate", {"type": float}),
    "--weight-decay": ("weight_decay", {"type": float}),
    "--batch-size": ("batch_size", {"type": int}),
    "--p-bitflip": ("p_bitflip", {"type": float}),
    "--p-phaseflip": ("p_phaseflip", {"type": float}),
    "--trajectories": ("trajectories", {"type": int}),
    "--noise-seed": ("noise_seed", {"type": int}),
    "--out-dir": ("out_dir", {}),
}

_EXTRA = {
    "compare": {
        "--schemes": ("schemes", {"type": _csv_list(str)}),
        "--noise-modes": ("noise_modes", {"type": _csv_list(str)}),
        "--noise-test-subset": ("noise_test_subset", {"type": int}),
    },
    "input-sweep": {"--input-sizes": ("input_sizes", {"type": _csv_list(int)})},
    "depth-width": {"--dw-input-size": ("depth_width_input_size",
                                        {"type": int, "choices": (2, 3, 4)})},
    "encoding-mse": {"--image-index": ("image_index", {"type": int})},
    "nonlinearity": {"--points": ("points", {"type": int})},
    "train": {"--layout": ("layout", {"choices": ("VERTICAL", "HORIZONTAL")})},
}


def _add_flags(p, table):
    for flag, (dest, kw) in table.items():
        p.add_argument(flag, dest=dest, default=None, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qmlp", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "counts": "gate/parameter/block counts of every scheme, checked against the reference tables",
        "train": "train one model, write history CSV and checkpoint",
        "eval": "evaluate a checkpoint, optionally under noise",
        "nonlinearity": "1-qubit re-uploading response curves",
        "encoding-mse": "pixel error of angle vs amplitude encoding under one X error",
        "compare": "train schemes and evaluate under each noise mode",
        "depth-width": "vertical vs horizontal layout accuracy",
        "input-sweep": "accuracy vs down-sampled input size",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", help="JSON config file; flags override it")
        if name != "counts":
            _add_flags(p, _COMMON)
        _add_flags(p, _EXTRA.get(name, {}))
        if name == "counts":
            p.add_argument("--out-dir", dest="out_dir", default=None)
        if name == "eval":
            p.add_argument("--checkpoint", required=True)
            p.add_argument("--noise", action="store_true", help="evaluate with bit/phase flips")
        if name == "encoding-mse":
            p.add_argument("--noise-qubit", type=int, default=5,
                           help="qubit receiving the X error; -1 for none")
    return parser


def config_from_args(args) -> E.ExperimentConfig:
    base = E.ExperimentConfig.from_file(args.config) if args.config else E.ExperimentConfig()
    names = {f.name for f in dataclasses.fields(E.ExperimentConfig)}
    overrides = {k: v for k, v in vars(args).items() if k in names and v is not None}
    return dataclasses.replace(base, **overrides)


def _print_rows(rows, columns):
    print(",".join(columns))
    for r in rows:
        print(",".join(E._fmt(r[c]) for c in columns))


def run_counts(cfg, args) -> int:
    rows, bad = E.cmd_counts()
    _print_rows(rows, E.COUNT_COLUMNS)
    if args.out_dir:
        E.write_report(args.out_dir, "counts", E.COUNT_COLUMNS, rows, cfg,
                       {"mismatches": bad})
    for b in bad:
        print(f"MISMATCH {b}", file=sys.stderr)
    return 1 if bad else 0


def run_train(cfg, args) -> int:
    scheme = E.make_scheme(cfg.scheme, cfg.input_size, cfg.layout)
    tr, te = E.datasets(cfg, cfg.input_size)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.seed_base
    ckpt = out / f"{cfg.scheme}-k{cfg.input_size}-s{seed}.ckpt.json"
    # circuit metadata lets `eval` rebuild the scheme
    meta = {"base_scheme": cfg.scheme, "input_size": cfg.input_size, "layout": cfg.layout}
    res = fit(scheme, cfg.train_config(seed), (tr.angles(), tr.labels),
              (te.angles(), te.labels), checkpoint_path=ckpt, checkpoint_extra=meta)
    write_history(out / f"{cfg.scheme}-k{cfg.input_size}-s{seed}.history.csv", res.history)
    E.write_report(out, "train", ("epoch", "test_acc"),
                   [{"epoch": h["epoch"], "test_acc": h["test_acc"]} for h in res.history], cfg,
                   {"best_epoch": res.best_epoch, "best_test_acc": res.best_test_acc,
                    "wall_ms": [h["wall_ms"] for h in res.history]})
    print(f"best test accuracy {res.best_test_acc:.4f} at epoch {res.best_epoch}; "
          f"checkpoint {ckpt}")
    return 0


def run_eval(cfg, args) -> int:
    rec = read_checkpoint(args.checkpoint)
    extra = rec["extra"]
    if "base_scheme" not in extra:
        print(f"{args.checkpoint}: missing circuit metadata", file=sys.stderr)
        return 2
    k = extra["input_size"]
    scheme = E.make_scheme(extra["base_scheme"], k, extra.get("layout", "VERTICAL"))
    hp = load_checkpoint(args.checkpoint, scheme)
    _, te = E.datasets(cfg, k)
    noise = cfg.noise("both") if args.noise else None
    res = evaluate(scheme, hp, te.angles(), te.labels, noise)
    print(f"accuracy {res.accuracy:.4f} on {len(te)} images"
          + (f" ({noise.n_trajectories} trajectories)" if noise else ""))
    np.savetxt(sys.stdout, res.confusion, fmt="%d", delimiter=",")
    return 0


def run_nonlinearity(cfg, args) -> int:
    rows = E.nonlinearity_curves(cfg.points)
    path = E.write_report(cfg.out_dir, "nonlinearity", E.NONLINEARITY_COLUMNS, rows, cfg)
    print(f"wrote {len(rows)} rows to {path}")
    return 0


def run_encoding_mse(cfg, args) -> int:
    q = None if args.noise_qubit < 0 else args.noise_qubit
    rows = E.cmd_encoding_mse(cfg, q)
    agg = {enc: float(np.mean([r["sq_error"] for r in rows if r["encoding"] == enc]))
           for enc in ("angle", "amplitude")}
    path = E.write_report(cfg.out_dir, "encoding_mse", E.MSE_COLUMNS, rows, cfg,
                          {"mean_sq_error": agg, "noise_qubit": q})
    print(f"mean squared error: angle {agg['angle']:.3g}, amplitude {agg['amplitude']:.3g}; "
          f"rows in {path}")
    return 0


def run_compare(cfg, args) -> int:
    rows = E.cmd_compare(cfg)
    agg = E._aggregate(rows, ("scheme", "noise_mode"), "accuracy")
    path = E.write_report(cfg.out_dir, "compare", E.COMPARE_COLUMNS, rows, cfg,
                          {**agg, "external_reference": E.EXTERNAL_REFERENCE})
    for g, a in agg.items():
        print(f"{g}: {a['mean']:.4f} +- {a['std']:.4f}")
    print(f"rows in {path}")
    return 0


def run_depth_width(cfg, args) -> int:
    rows = E.cmd_depth_width(cfg)
    agg = {lay: {"best_per_seed": E.final_accuracy(rows, layout=lay)}
           for lay in ("VERTICAL", "HORIZONTAL")}
    for lay, a in agg.items():
        a["mean"] = float(np.mean(a["best_per_seed"]))
        print(f"{lay}: {a['mean']:.4f}")
    path = E.write_report(cfg.out_dir, "depth_width", E.DEPTH_WIDTH_COLUMNS, rows, cfg, agg)
    print(f"rows in {path}")
    return 0


def run_input_sweep(cfg, args) -> int:
    rows = E.cmd_input_sweep(cfg)
    agg = E._aggregate(rows, ("input_size",), "accuracy")
    path = E.write_report(cfg.out_dir, "input_sweep", E.SWEEP_COLUMNS, rows, cfg, agg)
    for g, a in agg.items():
        print(f"{g}x{g}: {a['mean']:.4f} +- {a['std']:.4f}")
    print(f"rows in {path}")
    return 0


_COMMANDS = {
    "counts": run_counts, "train": run_train, "eval": run_eval,
    "nonlinearity": run_nonlinearity, "encoding-mse": run_encoding_mse,
    "compare": run_compare, "depth-width": run_depth_width, "input-sweep": run_input_sweep,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
        return _COMMANDS[args.command](cfg, args)
    except QMLPError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
