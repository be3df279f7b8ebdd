import csv
import json
import subprocess
import sys

import pytest

from pbgru.cli import main


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert main(["synth", "--out", str(data), "--stations", "5", "--days", "8", "--steps-per-day", "12",
                 "--seed", "3"]) == 0
    run = root / "run"
    assert main(["train", "--config", str(data / "config.json"), "--out", str(run), "--quiet",
                 "--set", "train.epochs=2", "--set", "model.hidden=6"]) == 0
    return root, data, run


def test_synth_writes_inputs(workspace):
    _, data, _ = workspace
    for name in ("ridership.csv", "edges.csv", "trips.csv", "config.json", "roles.json"):
        assert (data / name).exists()
    cfg = json.loads((data / "config.json").read_text())
    assert cfg["data"]["n"] == 5 and sum(cfg["data"]["split"]) == 8


def test_train_writes_run(workspace):
    _, _, run = workspace
    for name in ("checkpoint.bin", "checkpoint.json", "train_log.csv", "stats.json", "config.json",
                 "eval_test.json", "graphs/graphs.json"):
        assert (run / name).exists(), name
    cfg = json.loads((run / "config.json").read_text())
    assert cfg["train"]["epochs"] == 2 and cfg["model"]["hidden"] == 6


def test_build_graphs_prints_hash(workspace, capsys):
    root, data, _ = workspace
    assert main(["build-graphs", "--config", str(data / "config.json"), "--out", str(root / "g")]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert len(doc["graph_hash"]) == 64 and doc["k_max"] == 2


def test_evaluate_and_predict(workspace):
    root, _, run = workspace
    assert main(["evaluate", "--run", str(run), "--out", str(root / "ev"), "--split", "val"]) == 0
    report = json.loads((root / "ev" / "eval_val.json").read_text())
    assert set(report["horizons"]) == {"15min", "30min", "45min", "60min"}
    assert main(["predict", "--run", str(run), "--out", str(root / "pr")]) == 0
    with open(root / "pr" / "predictions.csv") as fh:
        rows = list(csv.DictReader(fh))
    windows = json.loads((run / "eval_test.json").read_text())["samples"]
    assert len(rows) == windows * 4 * 5 * 2
    with open(root / "pr" / "curves.csv") as fh:
        curves = list(csv.DictReader(fh))
    assert len(curves) == len(rows)
    assert [(r["y_true"], r["y_pred"]) for r in curves] == [(r["y_true"], r["y_pred"]) for r in rows]


def test_wrong_graphs_exit_with_data_error(workspace):
    root, data, run = workspace
    other = root / "other"
    assert main(["synth", "--out", str(other), "--stations", "5", "--days", "8", "--steps-per-day", "12",
                 "--seed", "4"]) == 0
    assert main(["build-graphs", "--config", str(other / "config.json"), "--out", str(other / "g")]) == 0
    assert main(["evaluate", "--run", str(run), "--graphs", str(other / "g"), "--out", str(root / "bad")]) == 3


@pytest.mark.parametrize("argv", [
    ["train", "--set", "model.hiddn=3"],
    ["train", "--set", "train.lr=-1"],
    ["train", "--set", "oops"],
    ["train", "--config", "/nonexistent/config.json"],
    ["train"],
])
def test_config_errors_exit_2(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path)]) == 2


def test_missing_data_file_exits_3(tmp_path):
    argv = ["train", "--set", f'data.ridership="{tmp_path}/none.csv"', "--set", f'data.edges="{tmp_path}/e.csv"',
            "--set", f'data.trips="{tmp_path}/t.csv"', "--out", str(tmp_path)]
    assert main(argv) == 3


def test_gradcheck_passes_and_flags_injected_fault(tmp_path, capsys):
    assert main(["gradcheck", "--skip-model", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "gradcheck.json").read_text())
    assert doc["passed"] and all(c["groups"] for c in doc["checks"])
    assert main(["gradcheck", "--skip-model", "--inject-wrong-sign", "tanh"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_sweep_and_ablate_tables(workspace):
    root, data, _ = workspace
    base = ["--config", str(data / "config.json"), "--quiet", "--set", "train.epochs=1", "--set", "model.hidden=4"]
    assert main(["sweep-k", *base, "--k-min", "1", "--k-max", "2", "--out", str(root / "sk")]) == 0
    with open(root / "sk" / "sweep_k.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["K"] for r in rows] == ["1"] * 4 + ["2"] * 4
    assert main(["ablate", *base, "--out", str(root / "ab")]) == 0
    with open(root / "ab" / "ablation.csv") as fh:
        rows = list(csv.DictReader(fh))
    counts = {r["variant"]: int(r["parameter_count"]) for r in rows}
    assert list(counts) == ["base", "p-base", "d-base", "pd-base", "full"]
    assert counts["base"] < counts["p-base"] == counts["d-base"] < counts["pd-base"] < counts["full"]


def test_module_entry_point_help():
    out = subprocess.run([sys.executable, "-m", "pbgru", "--help"], capture_output=True, text=True, check=True)
    for cmd in ("synth", "build-graphs", "train", "evaluate", "predict", "sweep-k", "ablate", "gradcheck"):
        assert cmd in out.stdout
