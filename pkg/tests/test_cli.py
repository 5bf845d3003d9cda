import json

import pytest

from seqdg import synthetic as S
from seqdg.cli import build_parser, main

TINY_SET = ["--set", "model.n=32", "--set", "model.L=4", "--set", "model.d=16", "--set", "model.conv_widths=[4,4,8]",
            "--set", "model.attn_layers=1", "--set", "model.heads=2", "--set", "batch_size=8",
            "--set", "data.sequences=20"]


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    assert main(["gen-data", "--out", str(d), *TINY_SET]) == 0
    return d


def test_gen_data_writes_five_domains(data_dir):
    files = sorted(p.name for p in data_dir.glob("domain_*.bin"))
    assert files == [S.domain_filename(k) for k in range(5)]
    ds = S.load_domain(data_dir / "domain_3.bin")
    assert ds.x.shape == (20, 4, 32, 2)
    cfg = json.loads((data_dir / "config.json").read_text())
    assert cfg["model"]["n"] == 32


def test_help_documents_every_flag(capsys):
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    for name, p in sub.choices.items():
        text = p.format_help()
        for action in p._actions:
            for flag in action.option_strings:
                assert flag in text, (name, flag)
    assert main(["train", "--help"]) == 0
    assert "--held-out" in capsys.readouterr().out


def test_usage_errors_exit_2(capsys):
    assert main([]) == 2
    assert main(["train", "--bogus"]) == 2
    assert main(["frobnicate"]) == 2
    assert "usage" in capsys.readouterr().err


def test_contract_errors_exit_1(tmp_path, data_dir, capsys):
    assert main(["train", "--data", str(data_dir), "--out", str(tmp_path / "r"), "--set", "arm=NOPE"]) == 1
    assert "arm" in capsys.readouterr().err
    bad = tmp_path / "c.json"
    bad.write_text('{"model": {"dd": 3}}')
    assert main(["train", "--config", str(bad), "--data", str(data_dir), "--out", str(tmp_path / "r")]) == 1
    assert "model.dd" in capsys.readouterr().err
    assert main(["loo", "--data", str(tmp_path / "missing"), "--out", str(tmp_path / "r"), *TINY_SET]) == 1


def test_train_and_export(tmp_path, data_dir):
    run = tmp_path / "run"
    assert main(["train", "--data", str(data_dir), "--out", str(run), "--epochs", "1", "--held-out", "2",
                 "--arm", "FULL", *TINY_SET]) == 0
    m = json.loads((run / "fold_2" / "metrics.json").read_text())
    assert m["held_out"] == 2 and 0 <= m["acc"] <= 1
    assert (run / "model.ckpt").exists() and (run / "run.log").exists()
    assert json.loads((run / "config.json").read_text())["arm"] == "FULL"
    out = tmp_path / "feat"
    assert main(["export-features", "--data", str(data_dir), "--out", str(out), "--checkpoint",
                 str(run / "model.ckpt"), "--domains", "0", "4", *TINY_SET]) == 0
    lines = (out / "features.csv").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 1 + 2 * 20 * 4


def test_loo_rerun_is_bit_identical(tmp_path, data_dir):
    args = ["loo", "--data", str(data_dir), "--epochs", "1", "--seed", "3", *TINY_SET]
    assert main([*args, "--out", str(tmp_path / "a")]) == 0
    assert main([*args, "--out", str(tmp_path / "b")]) == 0
    for rel in ["metrics.json", "config.json", "fold_0/metrics.json", "fold_4/losses.csv"]:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_ablate_writes_grid(tmp_path, data_dir, capsys):
    out = tmp_path / "abl"
    assert main(["ablate", "--data", str(data_dir), "--out", str(out), "--epochs", "1", "--arms", "BASE", "AE",
                 "--folds", "0", "1", "--seed", "0", "--seed", "1", *TINY_SET]) == 0
    rows = (out / "ablation.csv").read_text(encoding="utf-8").splitlines()
    assert rows[0] == "arm,seed,metric,D0,D1,avg"
    assert "BASE" in capsys.readouterr().out
    assert main(["ablate", "--data", str(data_dir), "--out", str(out), "--jobs", "0", *TINY_SET]) == 1


def test_grad_check_command(capsys):
    assert main(["grad-check", "--seeds", "1"]) == 0
    out = capsys.readouterr().out
    assert "total_model" in out and "FAIL" not in out
    assert main(["grad-check", "--seeds", "1", "--tol", "1e-30"]) == 1
