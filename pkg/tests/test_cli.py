"""CLI contract: subcommands, exit codes, file formats, determinism."""
import json
from pathlib import Path

import numpy as np
import pytest

import superconst.cli as cli
from superconst.errors import TrainingError
from superconst.evaluate import measure_ber
from superconst.modelio import load_model, save_model
from superconst.training import preset_config, train


def run(args, monkeypatch, tmp_path):
    monkeypatch.setenv("SUPERCONST_OUTDIR", str(tmp_path))
    return cli.main(args)


@pytest.fixture(scope="module")
def tiny_model(tmp_path_factory):
    """A 60-iteration model file: enough for plumbing contracts."""
    path = tmp_path_factory.mktemp("models") / "tiny.model.json"
    config = preset_config("case1", iterations=60, seed=7, batch_size=64)
    save_model(path, train(config), preset="case1")
    return path


def test_train_writes_model_and_history(monkeypatch, tmp_path):
    out = tmp_path / "m.model.json"
    code = run(["train", "--preset", "case1", "--iterations", "50", "--seed", "7",
                "--batch-size", "64", "--quiet", "--out", str(out)],
               monkeypatch, tmp_path)
    assert code == 0
    assert out.exists()
    history = out.with_suffix(".history.csv")
    rows = [l for l in history.read_text().strip().split("\n")
            if not l.startswith("#") and not l.startswith("iteration")]
    assert len(rows) == 50
    payload = json.loads(out.read_text())
    assert payload["training"]["preset"] == "case1"
    assert payload["training"]["iterations"] == 50
    assert payload["iteration"] == 50


def test_train_preset_case3_expansion(monkeypatch, tmp_path):
    out = tmp_path / "c3.model.json"
    code = run(["train", "--preset", "case3", "--iterations", "5", "--seed", "1",
                "--batch-size", "16", "--quiet", "--out", str(out)],
               monkeypatch, tmp_path)
    assert code == 0
    training = json.loads(out.read_text())["training"]
    assert training["channel"] == {"kind": "uniform", "h1": 1.0, "h2_min": 8.0, "h2_max": 12.0}
    assert training["loss_weight"] == 15.0


def test_train_same_seed_byte_identical(monkeypatch, tmp_path):
    outs = []
    for sub in ("a", "b"):
        d = tmp_path / sub
        d.mkdir()
        out = d / "m.model.json"
        code = run(["train", "--preset", "case1", "--iterations", "40", "--seed", "3",
                    "--batch-size", "64", "--quiet", "--out", str(out)],
                   monkeypatch, tmp_path)
        assert code == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_train_rejects_unknown_config_key(monkeypatch, tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"preset": "case1", "iterations": 5, "bogus": 1}))
    assert run(["train", "--config", str(cfg), "--quiet"], monkeypatch, tmp_path) == 2


def test_train_numeric_failure_exit_3(monkeypatch, tmp_path):
    config = preset_config("case1", iterations=3, seed=0, batch_size=16)
    trained = train(config)

    def boom(*args, **kwargs):
        raise TrainingError("non-finite loss", iteration=5, checkpoint=trained)

    monkeypatch.setattr(cli, "train", boom)
    out = tmp_path / "m.model.json"
    code = run(["train", "--preset", "case1", "--iterations", "10", "--quiet",
                "--out", str(out)], monkeypatch, tmp_path)
    assert code == 3
    assert Path(str(out) + ".failed.json").exists()


def test_eval_grid_rows_and_determinism(monkeypatch, tmp_path, tiny_model):
    args = ["eval", str(tiny_model), "--snr-grid", "0:20:1", "--seed", "5",
            "--max-symbols", "20000", "--min-error-events", "10",
            "--out", str(tmp_path / "curve")]
    assert run(args, monkeypatch, tmp_path) == 0
    text = (tmp_path / "curve.csv").read_text()
    lines = text.strip().split("\n")
    assert lines[1] == "snr1_db,ber1,stderr1,ber2,stderr2,n_bits"
    assert len(lines) == 2 + 21  # provenance + header + 21 points
    report = json.loads((tmp_path / "curve.json").read_text())
    assert len(report["points"]) == 21

    (tmp_path / "curve.csv").rename(tmp_path / "first.csv")
    assert run(args, monkeypatch, tmp_path) == 0
    assert (tmp_path / "curve.csv").read_bytes() == (tmp_path / "first.csv").read_bytes()


def test_eval_rejects_unreadable_model(monkeypatch, tmp_path):
    missing = tmp_path / "nope.json"
    assert run(["eval", str(missing)], monkeypatch, tmp_path) == 2
    not_model = tmp_path / "x.json"
    not_model.write_text("{}")
    assert run(["eval", str(not_model)], monkeypatch, tmp_path) == 2


def test_model_round_trip_evaluation_bit_exact(tmp_path, tiny_model):
    system, _ = load_model(tiny_model)
    before = measure_ber(system, 1.0, 2.0, [6.0, 12.0], seed=11, max_symbols=30_000)
    reloaded, _ = load_model(tiny_model)
    after = measure_ber(reloaded, 1.0, 2.0, [6.0, 12.0], seed=11, max_symbols=30_000)
    assert before == after


def test_baseline_qpsk_noma(monkeypatch, tmp_path):
    out = tmp_path / "qpsk.csv"
    code = run(["baseline", "qpsk-noma", "--alpha", "0.7", "--h1", "1", "--h2", "2",
                "--snr-grid", "0:20:2", "--out", str(out)], monkeypatch, tmp_path)
    assert code == 0
    lines = out.read_text().strip().split("\n")
    assert lines[1] == "snr1_db,ber1,ber2"
    assert len(lines) == 2 + 11


def test_baseline_alpha_guard_exit_2(monkeypatch, tmp_path):
    code = run(["baseline", "qpsk-noma", "--alpha", "0.4", "--snr-grid", "10"],
               monkeypatch, tmp_path)
    assert code == 2
    code = run(["baseline", "qpsk-noma", "--alpha", "0.4", "--snr-grid", "10",
                "--allow-low-alpha", "--out", str(tmp_path / "low.csv")],
               monkeypatch, tmp_path)
    assert code == 0


def test_baseline_16qam_symbol_snr(monkeypatch, tmp_path):
    out = tmp_path / "qam.csv"
    code = run(["baseline", "16qam", "--snr1", "10", "--h-ratio", "2",
                "--out", str(out)], monkeypatch, tmp_path)
    assert code == 0
    lines = out.read_text().strip().split("\n")
    assert lines[1] == "snr1_db,snr_symbol_db,ber"
    row = lines[2].split(",")
    assert float(row[1]) == pytest.approx(16.0206, abs=5e-5)


def test_constellation_outputs(monkeypatch, tmp_path, tiny_model):
    args = ["constellation", str(tiny_model), "--noisy", "200", "--snr", "10",
            "--user", "2", "--seed", "3", "--out", str(tmp_path / "const")]
    assert run(args, monkeypatch, tmp_path) == 0
    csv_lines = (tmp_path / "const.csv").read_text().strip().split("\n")
    data = [l for l in csv_lines if not l.startswith("#") and not l.startswith("bits1")]
    assert len(data) == 16
    footer = [l for l in csv_lines if l.startswith("# mean_power")]
    assert float(footer[0].split(",")[1]) == pytest.approx(1.0, abs=1e-9)
    svg_first = (tmp_path / "const.svg").read_bytes()
    (tmp_path / "const.svg").rename(tmp_path / "first.svg")
    assert run(args, monkeypatch, tmp_path) == 0
    assert (tmp_path / "const.svg").read_bytes() == svg_first


def test_compare_includes_literature_and_sources(monkeypatch, tmp_path, tiny_model):
    out = tmp_path / "table.csv"
    code = run(["compare", str(tiny_model), "--snr-list", "14,16,18", "--seed", "2",
                "--min-error-events", "20", "--max-symbols", "30000",
                "--out", str(out)], monkeypatch, tmp_path)
    assert code == 0
    lines = out.read_text().strip().split("\n")
    body = [l.split(",") for l in lines if not l.startswith("#")][1:]
    methods = {row[0] for row in body}
    assert {"learned", "qpsk-noma-alpha0.7", "16qam-strong-user",
            "ninkovic2023", "alberge2018"} <= methods
    lit = [row for row in body if row[0] == "ninkovic2023" and float(row[1]) == 16.0]
    assert float(lit[0][2]) == 2e-2
    assert {row[3] for row in body} == {"measured", "closed-form", "literature-constant"}


def test_gradcheck_cli(monkeypatch, tmp_path, capsys):
    code = run(["gradcheck", "--seed", "7", "--out", str(tmp_path / "gc.json")],
               monkeypatch, tmp_path)
    out1 = capsys.readouterr().out
    assert code == 0
    assert "PASS" in out1
    report = json.loads((tmp_path / "gc.json").read_text())
    assert report["max_relative_error"] < 1e-4

    assert run(["gradcheck", "--seed", "7"], monkeypatch, tmp_path) == 0
    assert capsys.readouterr().out == out1  # fixed seed -> identical report


def test_gradcheck_detects_corrupted_backprop(monkeypatch, tmp_path):
    # sabotage the ELU derivative and make sure the check trips (mutation test)
    import superconst.nn as nn

    original = nn._activation_grad

    def corrupted(tag, z):
        out = original(tag, z)
        return out * 1.01 if tag == "elu" else out

    monkeypatch.setattr(nn, "_activation_grad", corrupted)
    code = run(["gradcheck", "--seed", "7"], monkeypatch, tmp_path)
    assert code == 1


def test_default_outdir_env(monkeypatch, tmp_path):
    code = run(["baseline", "qpsk-noma", "--snr-grid", "10"], monkeypatch, tmp_path)
    assert code == 0
    assert (tmp_path / "baseline-qpsk-noma.csv").exists()


def test_parse_grid():
    assert cli.parse_grid("0:20:1") == [float(v) for v in range(21)]
    assert cli.parse_grid("4,8,12") == [4.0, 8.0, 12.0]
    assert cli.parse_grid("10") == [10.0]
    with pytest.raises(Exception):
        cli.parse_grid("5:1:1")
