import json
import subprocess
import sys

import pytest

from deep_positron import cli, network


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_dynamic_range_output(capsys):
    assert run("dynamic-range", "posit8es0", "fixed8q4", "posit7es0", "float7e3") == 0
    lines = {l.split()[0]: l.split() for l in capsys.readouterr().out.splitlines()[1:]}
    assert lines["posit8es0"][1:] == ["64", "0.015625", "3.612"]
    assert lines["fixed8q4"][3] == "2.104"
    assert float(lines["posit7es0"][3]) > float(lines["float7e3"][3])


def test_unknown_tag_is_an_error(capsys):
    assert run("dynamic-range", "posit8x1") != 0
    assert "posit8x1" in capsys.readouterr().err


def test_train_quantize_infer(tmp_path, capsys):
    fm, qm = tmp_path / "float.json", tmp_path / "q.json"
    assert run("train", "--dataset", "iris", "--out", fm) == 0
    out = capsys.readouterr().out
    assert fm.exists()
    acc = float(out.split("accuracy ")[1].split("%")[0])
    assert acc >= 96.0
    assert run("quantize", "--model", fm, "--format", "posit8es0", "--out", qm) == 0
    assert json.loads(qm.read_text())["format"] == "posit8es0"
    capsys.readouterr()
    assert run("infer", "--model", qm, "--dataset", "iris", "--format", "posit8es0") == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "row,label,prediction" and len(lines) == 52
    acc8 = float(lines[-1].split()[1].rstrip("%"))
    assert abs(acc8 - acc) <= 2.0
    assert run("infer", "--model", qm, "--dataset", "iris", "--engine", "emac") == 0
    assert capsys.readouterr().out.splitlines()[-1] == lines[-1]


def test_infer_format_mismatch(tmp_path, capsys):
    fm, qm = tmp_path / "f.json", tmp_path / "q.json"
    run("train", "--dataset", "iris", "--out", fm, "--epochs", "1")
    run("quantize", "--model", fm, "--format", "posit8es0", "--out", qm)
    capsys.readouterr()
    assert run("infer", "--model", qm, "--dataset", "iris", "--format", "posit8es1") != 0
    assert "posit8es1" in capsys.readouterr().err


def test_infer_dimension_check(tmp_path, capsys):
    fm, qm = tmp_path / "f.json", tmp_path / "q.json"
    run("train", "--dataset", "iris", "--out", fm, "--epochs", "1")
    run("quantize", "--model", fm, "--format", "fixed8q4", "--out", qm)
    assert run("infer", "--model", qm, "--dataset", "breast_cancer") != 0


def test_missing_files_are_errors(tmp_path, capsys):
    assert run("quantize", "--model", tmp_path / "none.json", "--format", "posit8es0", "--out", tmp_path / "o") != 0
    assert run("sweep", "--config", tmp_path / "none.json") != 0
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert run("sweep", "--config", bad) != 0
    assert "error:" in capsys.readouterr().err


def test_sweep_command(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "seed": 3, "train": {"epochs": 10, "hidden": [8]},
        "datasets": [{"name": "iris"}],
        "grid": {"n": [6], "posit_es": [0, 1], "float_we": [3], "fixed_q": [3]},
    }))
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert run("sweep", "--config", cfg, "--out", out1) == 0
    assert run("sweep", "--config", cfg, "--out", out2, "--jobs", "2") == 0
    assert (out1 / "sweep.csv").read_bytes() == (out2 / "sweep.csv").read_bytes()
    assert (out1 / "sweep.txt").read_bytes() == (out2 / "sweep.txt").read_bytes()
    rows = (out1 / "sweep.csv").read_text().splitlines()
    assert len(rows) == 1 + 1 + 4
    assert "seed: 3" in capsys.readouterr().out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "deep_positron", "dynamic-range", "posit8es0"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "3.612" in proc.stdout


def test_argument_errors():
    with pytest.raises(SystemExit):
        run("train", "--dataset", "iris")
    with pytest.raises(SystemExit):
        run("train", "--dataset", "iris", "--out", "x", "--hidden", "a,b")
