import csv
import json

import numpy as np
import pytest

from seqmix.cli import FULL_SCALE, _configs, build_parser, main
from seqmix.lambda_process import LambdaConfig, sample_trajectories
from seqmix.recurrent import load_model

TINY = ["--n", "12", "--n-test", "8", "--length", "5", "--vocab-size", "15", "--classes", "3",
        "--hidden", "4", "--embedding-dim", "4", "--epochs", "2"]

CONLL = "EU B-ORG\nrejects O\nGerman B-MISC\n\nPeter B-PER\nBlackburn I-PER\n"


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_train_then_spectrum(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["train", "--task", "tagging", "--method", "pom", *TINY, "--out", str(out)]) == 0
    model = load_model(out / "model.json")
    assert len(model.meta["labels"]) == 3
    run = json.loads((out / "run.json").read_text())
    assert run["status"] == "ok" and len(run["train_loss"]) == 2
    metrics = {(r["split"], r["metric"]) for r in _rows(out / "metrics.csv")}
    assert ("test", "token_f1") in metrics and ("dev", "nll") in metrics

    spec = tmp_path / "spec"
    assert main(["spectrum", "--model", str(out / "model.json"), "--task", "tagging", *TINY[:10],
                 "--top-k", "3", "--center", "on", "--out", str(spec)]) == 0
    rows = _rows(spec / "spectrum.csv")
    assert rows[0].keys() == {"class", "rank", "sigma", "energy_frac"}
    assert {r["class"] for r in rows} == set(model.meta["labels"])
    assert (spec / "spectrum_centered.csv").exists() and (spec / "angles_centered.csv").exists()
    assert len(_rows(spec / "angles.csv")) == 3
    assert "top-5 energy" in capsys.readouterr().out


def test_train_on_conll_with_embeddings(tmp_path):
    data = tmp_path / "train.conll"
    data.write_text(CONLL)
    vec = tmp_path / "vec.txt"
    vec.write_text("EU 1 2 3\nPeter 0 0 1\n")
    out = tmp_path / "run"
    code = main(["train", "--data", str(data), "--test", str(data), "--embeddings", str(vec), "--crf",
                 "--hidden", "3", "--epochs", "1", "--out", str(out)])
    assert code == 0
    model = load_model(out / "model.json")
    assert model.crf and model.params["embedding"].shape == (6, 3)
    assert model.meta["vocab"] == ["<unk>", "EU", "rejects", "German", "Peter", "Blackburn"]


def test_lambda_command(tmp_path, capsys):
    assert main(["lambda", "--alpha", "0.5", "--rho", "0.3", "--horizon", "4", "--seed", "9"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "t,lambda" and len(lines) == 5
    expect = sample_trajectories(LambdaConfig(0.5, 0.3, 4), 1, 9)[0]
    assert np.array_equal([float(l.split(",")[1]) for l in lines[1:]], expect)
    path = tmp_path / "lam.csv"
    assert main(["lambda", "--count", "3", "--horizon", "2", "--out", str(path)]) == 0
    rows = _rows(path)
    assert len(rows) == 6 and rows[0].keys() == {"trajectory", "t", "lambda"}
    # rho = 0 keeps each trajectory constant
    assert all(rows[2 * i]["lambda"] == rows[2 * i + 1]["lambda"] for i in range(3))


def test_sweep_command(tmp_path):
    out = tmp_path / "sweep"
    assert main(["sweep-rho", "--task", "tagging", *TINY, "--rhos", "0,1", "--methods", "pom,ttm",
                 "--repeats", "2", "--batch-size", "4", "--out", str(out)]) == 0
    rows = _rows(out / "sweep.csv")
    assert len(rows) == 4 and all(r["runs"] == "2" for r in rows)
    assert len(json.loads((out / "runs.json").read_text())) == 8


def test_probe_and_halfmoons_commands(tmp_path):
    assert main(["probe", "overreg", "--seeds", "1", "--epochs", "1", "--hidden", "2", "3",
                 "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "probe_overreg.json").read_text())
    assert {r["hidden"] for r in doc["runs"]} == {2, 3}
    assert main(["probe", "memory", "--seeds", "1", "--epochs", "1", "--hidden", "2",
                 "--out", str(tmp_path)]) == 0
    assert main(["halfmoons", "--epochs", "1", "--grid-res", "5", "--out", str(tmp_path / "hm")]) == 0
    grid = _rows(tmp_path / "hm" / "seed0" / "pom" / "grid.csv")
    assert len(grid) == 25 and grid[0].keys() == {"x", "y", "p_class0"}
    summary = json.loads((tmp_path / "hm" / "halfmoons.json").read_text())["summary"]
    assert summary["strip_points"] > 0


def test_config_errors_exit_2(tmp_path, capsys):
    assert main(["train", "--data", str(tmp_path / "missing.conll"), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.conll"
    bad.write_text("EU B-ORG\nlonely\n")
    assert main(["train", "--data", str(bad), "--out", str(tmp_path)]) == 2
    assert "bad.conll:2" in capsys.readouterr().err
    assert main(["lambda", "--rho", "2"]) == 2
    assert main(["train", "--task", "halfmoons", "--n", "7", "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit):
        main(["train", "--method", "cutmix", "--out", str(tmp_path)])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_failure_exit_3(tmp_path):
    out = tmp_path / "run"
    code = main(["train", "--task", "tagging", *TINY, "--cell", "rnn", "--lr", "1e308", "--out", str(out)])
    assert code == 3
    assert json.loads((out / "run.json").read_text())["status"] == "numeric-failure"


@pytest.mark.parametrize("crf", [False, True])
def test_full_scale_recipe_resolution(crf):
    argv = ["train", "--task", "tagging", "--paper-baseline", "--out", "x"] + (["--crf"] if crf else [])
    spec, cfg = _configs(build_parser().parse_args(argv))
    recipe = FULL_SCALE["crf" if crf else "tagger"]
    assert spec.hidden == recipe["hidden"] == 256
    assert cfg.epochs == recipe["epochs"] and cfg.batch_size == recipe["batch_size"]
    assert cfg.schedule == recipe["schedule"]
    assert spec.bidirectional == crf
