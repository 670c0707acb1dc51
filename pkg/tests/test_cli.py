import csv
import json
import subprocess
import sys

import pytest

from qmlp import ansatz, cli, experiments as E

TINY = ["--dataset", "two_gaussians", "--train-subset", "32", "--test-subset", "16",
        "--epochs", "2", "--lr", "0.05", "--trajectories", "4"]


@pytest.fixture(autouse=True)
def fresh_cache():
    E.clear_cache()
    yield
    E.clear_cache()


def rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def test_counts_exit_codes(capsys, monkeypatch, tmp_path):
    assert cli.main(["counts", "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "RX-CRX,96,128,2,36,64,32,32" in out
    assert (tmp_path / "counts.csv").exists()
    monkeypatch.setitem(ansatz.TABLE1, "RX-CNOT", (93, 96, 2))
    monkeypatch.setattr(E, "TABLE1", ansatz.TABLE1)
    assert cli.main(["counts"]) == 1
    assert "MISMATCH RX-CNOT" in capsys.readouterr().err


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "qmlp.cli", "counts"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("scheme,gates,params")


def test_flags_override_config_file(tmp_path):
    cfgfile = tmp_path / "c.json"
    cfgfile.write_text(json.dumps({"epochs": 7, "seeds": 2, "noise": {"p_phaseflip": 0.2}}))
    args = cli.build_parser().parse_args(["compare", "--config", str(cfgfile), "--epochs", "3",
                                          "--schemes", "RX-CRX,RXY-CRXY"])
    cfg = cli.config_from_args(args)
    assert (cfg.epochs, cfg.seeds, cfg.p_phaseflip) == (3, 2, 0.2)
    assert cfg.schemes == ("RX-CRX", "RXY-CRXY")


def test_train_then_eval(tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["train", "--scheme", "RX-CRX", "--input-size", "2", "--out-dir", str(out)] + TINY) == 0
    ckpt = out / "RX-CRX-k2-s0.ckpt.json"
    hist = rows(out / "RX-CRX-k2-s0.history.csv")
    assert ckpt.exists() and [h["epoch"] for h in hist] == ["1", "2"]
    capsys.readouterr()
    assert cli.main(["eval", "--checkpoint", str(ckpt)] + TINY) == 0
    first = capsys.readouterr().out
    assert first.startswith("accuracy ")
    assert cli.main(["eval", "--checkpoint", str(ckpt), "--noise"] + TINY) == 0
    assert "4 trajectories" in capsys.readouterr().out


def test_eval_errors(tmp_path, capsys):
    bad = tmp_path / "x.json"
    bad.write_text("nope")
    assert cli.main(["eval", "--checkpoint", str(bad)]) == 2
    assert "unreadable checkpoint" in capsys.readouterr().err


def test_config_error_exit_code(capsys):
    assert cli.main(["compare", "--schemes", "RX-NOPE"]) == 2
    assert "unknown scheme" in capsys.readouterr().err


def test_nonlinearity_and_encoding(tmp_path):
    assert cli.main(["nonlinearity", "--points", "11", "--out-dir", str(tmp_path)]) == 0
    nl = rows(tmp_path / "nonlinearity.csv")
    assert len(nl) == 11 * 9
    assert cli.main(["encoding-mse", "--noise-qubit", "5", "--out-dir", str(tmp_path)]) == 0
    enc = rows(tmp_path / "encoding_mse.csv")
    angle = [float(r["sq_error"]) for r in enc if r["encoding"] == "angle"]
    assert [i for i, v in enumerate(angle) if v > 1e-12] == [5]
    meta = json.loads((tmp_path / "encoding_mse.json").read_text())
    assert meta["aggregates"]["noise_qubit"] == 5


def test_studies_are_reproducible(tmp_path):
    runs = []
    for tag in ("a", "b"):
        E.clear_cache()
        out = tmp_path / tag
        common = TINY + ["--seeds", "1", "--out-dir", str(out)]
        assert cli.main(["compare", "--input-size", "2", "--noise-modes", "none,both"] + common) == 0
        assert cli.main(["input-sweep", "--input-sizes", "2,3"] + common) == 0
        assert cli.main(["depth-width", "--dw-input-size", "2"] + common) == 0
        runs.append(out)
    for name in ("compare.csv", "input_sweep.csv", "depth_width.csv"):
        assert (runs[0] / name).read_bytes() == (runs[1] / name).read_bytes()
    meta = json.loads((runs[0] / "compare.json").read_text())
    assert "external_reference" in meta["aggregates"]
    assert len(rows(runs[0] / "input_sweep.csv")) == 2
