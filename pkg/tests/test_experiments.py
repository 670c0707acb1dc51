import json

import numpy as np
import pytest

from qmlp import ansatz, experiments as E
from qmlp.errors import ConfigError


@pytest.fixture(autouse=True)
def fresh_cache():
    E.clear_cache()
    yield
    E.clear_cache()


def tiny(**kw):
    base = dict(dataset="two_gaussians", train_subset=32, test_subset=16, epochs=2, seeds=2,
                input_size=2, input_sizes=(2, 3), schemes=("RX-CRX", "RX-CNOT"),
                trajectories=4, learning_rate=0.05)
    base.update(kw)
    return E.ExperimentConfig(**base)


def test_counts_match_tables():
    rows, bad = E.cmd_counts()
    assert bad == []
    by = {r["scheme"]: r for r in rows}
    assert (by["RX-CNOT"]["gates"], by["RX-CNOT"]["params"], by["RX-CNOT"]["blocks"]) == (94, 96, 2)
    assert (by["RXY-CRXY"]["gates"], by["RXY-CRXY"]["params"]) == (96, 128)
    assert (by["DEEP-RX-CRX"]["gates"], by["DEEP-RX-CRX"]["params"], by["DEEP-RX-CRX"]["blocks"]) == (192, 256, 4)
    crx = by["RX-CRX"]
    assert (crx["single_qubit"], crx["single_qubit_parameterized"], crx["two_qubit"]) == (64, 32, 32)


def test_counts_report_mismatch(monkeypatch):
    monkeypatch.setitem(ansatz.TABLE1, "RX-CRX", (95, 128, 2))
    monkeypatch.setattr(E, "TABLE1", ansatz.TABLE1)
    _, bad = E.cmd_counts()
    assert len(bad) == 1 and bad[0].startswith("RX-CRX")


def _curve(rows, variant):
    sel = [r for r in rows if r["variant"] == variant]
    return np.array([r["x"] for r in sel]), np.array([r["z"] for r in sel])


def test_nonlinearity_curves():
    rows = E.nonlinearity_curves(201)
    x, z = _curve(rows, "RX/identity")
    assert len(x) == 201 and x[0] == -np.pi and x[-1] == np.pi
    assert np.max(np.abs(z - np.cos(2 * x))) < 1e-9
    x, z = _curve(rows, "no-ruu")
    assert np.max(np.abs(z - np.cos(x))) < 1e-12
    x, z = _curve(rows, "RX-relu/identity")
    assert np.ptp(z[x < 0]) < 1e-12
    assert np.max(np.abs(z[x >= 0] - np.cos(2 * x[x >= 0]))) < 1e-9
    # with non-trivial blocks the choice of re-upload gate matters
    _, a = _curve(rows, "RX/random")
    _, b = _curve(rows, "RZ/random")
    assert np.max(np.abs(a - b)) > 1e-3
    assert rows == E.nonlinearity_curves(201)


def test_encoding_confinement(rng):
    img = rng.uniform(0.05, 1.0, (4, 4))
    rows = E.encoding_mse(img, 5)
    ang = np.array([r["sq_error"] for r in rows if r["encoding"] == "angle"])
    amp = np.array([r["sq_error"] for r in rows if r["encoding"] == "amplitude"])
    assert ang[5] > 1e-3 and np.all(np.delete(ang, 5) < 1e-12)
    assert np.count_nonzero(amp > 1e-12) >= 8
    clean = E.encoding_mse(img, None)
    assert max(r["sq_error"] for r in clean) < 1e-12
    with pytest.raises(ConfigError):
        E.encoding_mse(img, 16)


def test_encoding_mse_on_mnist_sample():
    rows = E.cmd_encoding_mse(E.ExperimentConfig(), 5)
    amp = [r["sq_error"] for r in rows if r["encoding"] == "amplitude"]
    assert sum(v > 1e-12 for v in amp) >= 8
    with pytest.raises(ConfigError):
        E.cmd_encoding_mse(E.ExperimentConfig(image_index=10**6), 5)


def test_config_validation_and_file(tmp_path):
    with pytest.raises(ConfigError):
        E.ExperimentConfig(scheme="RX-FOO")
    with pytest.raises(ConfigError):
        E.ExperimentConfig(noise_modes=("loud",))
    with pytest.raises(ConfigError):
        E.ExperimentConfig(input_sizes=(5,))
    with pytest.raises(ConfigError):
        E.ExperimentConfig(seeds=0)
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"epochs": 2, "schemes": ["RX-CRX"],
                                "noise": {"p_bitflip": 0.05, "trajectories": 10, "seed": 9}}))
    cfg = E.ExperimentConfig.from_file(path)
    assert (cfg.epochs, cfg.schemes, cfg.p_bitflip, cfg.trajectories, cfg.noise_seed) == \
        (2, ("RX-CRX",), 0.05, 10, 9)
    assert cfg.noise("phaseflip").p_bitflip == 0.0 and cfg.noise("none") is None
    path.write_text(json.dumps({"epochz": 2}))
    with pytest.raises(ConfigError, match="epochz"):
        E.ExperimentConfig.from_file(path)
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        E.ExperimentConfig.from_file(path)


def test_compare_zero_noise_column_equals_noise_free():
    cfg = tiny(p_bitflip=0.0, p_phaseflip=0.0)
    rows = E.cmd_compare(cfg)
    assert len(rows) == 2 * 2 * 4
    acc = {(r["scheme"], r["noise_mode"], r["seed"]): r["accuracy"] for r in rows}
    for s in cfg.schemes:
        for seed in cfg.seed_list:
            assert acc[(s, "both", seed)] == acc[(s, "none", seed)]
    assert all(r["accuracy"] >= 0.0 for r in rows)
    assert rows == sorted(rows, key=lambda r: (r["scheme"], E.NOISE_MODES.index(r["noise_mode"]), r["seed"]))


def test_compare_skips_failing_cell(monkeypatch, caplog):
    real = E.train_cell

    def flaky(cfg, name, k, seed, layout="VERTICAL"):
        if name == "RX-CNOT" and seed == 1:
            raise E.QMLPError("boom")
        return real(cfg, name, k, seed, layout)

    monkeypatch.setattr(E, "train_cell", flaky)
    rows = E.cmd_compare(tiny(noise_modes=("none",)))
    assert {(r["scheme"], r["seed"]) for r in rows} == {("RX-CRX", 0), ("RX-CRX", 1), ("RX-CNOT", 0)}
    assert "boom" in caplog.text


def test_depth_width_rows():
    rows = E.cmd_depth_width(tiny(seeds=1))
    layouts = {r["layout"]: r for r in rows}
    assert layouts["VERTICAL"]["n_qubits"] == 4 and layouts["HORIZONTAL"]["n_qubits"] == 8
    assert layouts["HORIZONTAL"]["n_params"] == layouts["VERTICAL"]["n_params"] + 1
    assert len(rows) == 2 * 2
    assert len(E.final_accuracy(rows, layout="VERTICAL")) == 1


def test_input_sweep_rows_and_odd_width():
    cfg = tiny(input_sizes=(2, 3), seeds=2)
    rows = E.cmd_input_sweep(cfg)
    assert [(r["input_size"], r["seed"]) for r in rows] == [(2, 0), (2, 1), (3, 0), (3, 1)]


def test_reports_are_byte_reproducible(tmp_path):
    cfg = tiny(seeds=1, noise_modes=("none", "both"))
    paths = []
    for run in ("a", "b"):
        E.clear_cache()
        out = tmp_path / run
        paths.append([
            E.write_report(out, "compare", E.COMPARE_COLUMNS, E.cmd_compare(cfg), cfg),
            E.write_report(out, "input_sweep", E.SWEEP_COLUMNS, E.cmd_input_sweep(cfg), cfg),
            E.write_report(out, "nonlinearity", E.NONLINEARITY_COLUMNS, E.nonlinearity_curves(21), cfg),
        ])
    for a, b in zip(*paths):
        assert a.read_bytes() == b.read_bytes()
        meta = json.loads(a.with_suffix(".json").read_text())
        assert meta["config"]["seeds"] == 1 and "timestamp" in meta
