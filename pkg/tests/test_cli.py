import csv
import json
import subprocess
import sys

import pytest
import yaml

from simclr_har import cli
from simclr_har import train as T

# tiny but real: default encoder on 400-step synthetic windows
FAST = {"synthetic_per_class": 8, "epochs": 1, "batch": 8, "eval_epochs": 1, "eval_batch": 16}


def write_config(tmp_path, **extra):
    path = tmp_path / "exp.yaml"
    path.write_text(yaml.safe_dump({**FAST, **extra}))
    return str(path)


def test_run_smoke_and_replay(tmp_path, capsys):
    cfg = write_config(tmp_path)
    argv = ["run", "--config", cfg, "--data", "synthetic", "--pipeline", "noise,scale",
            "--protocol", "linear", "--seed", "7"]
    assert cli.main(argv + ["--out", str(tmp_path / "a")]) == 0
    assert cli.main(argv + ["--out", str(tmp_path / "b")]) == 0
    stem = "noise-scale_linear_s7"
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    for suffix in (".config.yaml", ".pretrain.json", ".pretrain.manifest", ".pretrain.bin",
                   ".linear.json", ".linear.manifest", ".linear.bin", ".confusion.csv", ".f1.txt"):
        assert stem + suffix in names
    a = (tmp_path / "a" / f"{stem}.f1.txt").read_bytes()
    assert a == (tmp_path / "b" / f"{stem}.f1.txt").read_bytes()
    assert b"weighted_f1=" in a and b"seed=7" in a
    rows = list(csv.reader(open(tmp_path / "a" / f"{stem}.confusion.csv", newline="")))
    assert rows[0][0] == "true\\pred" and len(rows) == 7
    record = json.loads((tmp_path / "a" / f"{stem}.linear.json").read_text())
    assert record["seed"] == 7 and len(record["epoch_losses"]) == 1


def test_supervised_run(tmp_path):
    cfg = write_config(tmp_path)
    assert cli.main(["run", "--config", cfg, "--protocol", "supervised", "--out", str(tmp_path)]) == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert "none_supervised_s0.f1.txt" in names
    assert not any("pretrain" in n for n in names)


def test_bad_pipeline_token_exit_2(tmp_path, capsys):
    assert cli.main(["run", "--pipeline", "rotatee", "--out", str(tmp_path)]) == 2
    assert "rotatee" in capsys.readouterr().err
    assert not any(tmp_path.iterdir())


def test_unknown_config_key_exit_2(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("epochs: 3\nepochz: 4\n")
    assert cli.main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "epochz" in capsys.readouterr().err
    path.write_text("epochs: three\n")
    assert cli.main(["run", "--config", str(path)]) == 2
    assert cli.main(["run", "--protocol", "semi"]) == 2


def test_missing_dataset_exit_3(tmp_path, capsys):
    assert cli.main(["run", "--data", str(tmp_path / "nowhere"), "--out", str(tmp_path / "o")]) == 3
    assert "data error" in capsys.readouterr().err


def test_divergence_exit_4(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise T.TrainingDiverged("non-finite loss nan at epoch 0")

    monkeypatch.setattr(T, "pretrain_simclr", boom)
    assert cli.main(["run", "--config", write_config(tmp_path), "--out", str(tmp_path / "o")]) == 4


def test_flags_override_file(tmp_path):
    cfg = cli.load_config(write_config(tmp_path, lr=0.5, seed=3), {"lr": 0.2, "seed": None})
    assert cfg.lr == 0.2 and cfg.seed == 3 and cfg.epochs == 1
    assert cli.load_config().epochs == 200


def test_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "envroot"))
    assert cli.load_config().out_dir == tmp_path / "envroot"
    assert cli.load_config(overrides={"out": str(tmp_path / "x")}).out_dir == tmp_path / "x"


def test_sweep_subgrid_and_resume(tmp_path, capsys):
    cfg = write_config(tmp_path, runs_per_cell=1)
    argv = ["sweep", "--config", cfg, "--grid", "identity,invert", "--protocol", "linear",
            "--out", str(tmp_path / "sw")]
    assert cli.main(argv) == 0
    out = capsys.readouterr().out
    assert "4 planned runs" in out
    rows = list(csv.reader(open(tmp_path / "sw" / "sweep_grid.csv", newline="")))
    assert rows[0] == ["transform_1", "identity", "invert", "row_avg"]
    assert (tmp_path / "sw" / "sweep_grid.svg").read_text().startswith("<svg")
    runs = sorted((tmp_path / "sw" / "runs").glob("*.json"))
    stamps = [json.loads(p.read_text())["finished"] for p in runs]
    runs[0].unlink()
    assert cli.main(argv + ["--resume"]) == 0
    again = [json.loads(p.read_text())["finished"] for p in sorted((tmp_path / "sw" / "runs").glob("*.json"))]
    assert again[1:] == stamps[1:] and again[0] != stamps[0]


def test_full_sweep_preamble(monkeypatch, capsys, tmp_path):
    monkeypatch.setattr(cli, "load_split", lambda cfg: (_ for _ in ()).throw(cli.D.DataError("stop")))
    assert cli.main(["sweep", "--out", str(tmp_path)]) == 3
    assert "81 cells x 5 runs = 405 planned runs" in capsys.readouterr().out


def test_sweep_rejects_supervised(tmp_path):
    assert cli.main(["sweep", "--protocol", "supervised", "--out", str(tmp_path)]) == 2


def test_gradcheck_command(capsys):
    assert cli.main(["gradcheck", "--instances", "3"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    from simclr_har.verify import KERNEL_CHECKS
    for name in KERNEL_CHECKS:
        assert sum(line.split()[0] == name for line in lines) == 1
    assert cli.main(["gradcheck", "--instances", "2", "--fault"]) == 1


def test_help_documents_every_key(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["run", "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for name, f in cli.CONFIG_KEYS.items():
        assert f"  {name} = " in text
    assert "source:" in text and cli.OUT_ENV in text


def test_console_script_entry_point():
    res = subprocess.run([sys.executable, "-m", "simclr_har.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "gradcheck" in res.stdout
