import json
import os

import bwma.cli as cli
from bwma.errors import NumericError


def run(args):
    return cli.main(args)


def test_train_command_outputs(tmp_path, mini_data_dir):
    out = str(tmp_path / "run")
    code = run([
        "train", "--arch", "mnist-tiny", "--epochs", "1", "--seed", "3",
        "--data-dir", mini_data_dir, "--out", out,
    ])
    assert code == 0
    assert os.path.exists(os.path.join(out, "metrics.csv"))
    assert os.path.exists(os.path.join(out, "checkpoint.bwma"))
    report = json.load(open(os.path.join(out, "train.json")))
    assert report["config"]["arch"] == "mnist-tiny"
    assert report["config"]["seed"] == 3
    first = open(os.path.join(out, "metrics.csv")).readline()
    assert first.startswith("# config:")


def test_train_twice_identical_metrics(tmp_path, mini_data_dir):
    args = ["train", "--arch", "mnist-tiny", "--epochs", "1", "--seed", "9",
            "--data-dir", mini_data_dir]
    assert run(args + ["--out", str(tmp_path / "a")]) == 0
    assert run(args + ["--out", str(tmp_path / "b")]) == 0
    a = open(tmp_path / "a" / "metrics.csv", "rb").read()
    b = open(tmp_path / "b" / "metrics.csv", "rb").read()
    assert a == b


def test_eval_command(tmp_path, mini_trained, mini_data_dir):
    out = str(tmp_path / "eval")
    ckpt = mini_trained["result"].checkpoint_path
    code = run(["eval", "--checkpoint", ckpt, "--data-dir", mini_data_dir, "--out", out])
    assert code == 0
    payload = json.load(open(os.path.join(out, "eval.json")))
    assert 0.0 <= payload["test_accuracy"] <= 1.0
    assert payload["config"]["arch"] == "mnist-tiny"


def test_map_command(tmp_path):
    out = str(tmp_path / "map")
    code = run(["map", "--arch", "vgg8-cifar", "--crossbar", "64x64", "--out", out])
    assert code == 0
    report = json.load(open(os.path.join(out, "mapping.json")))
    assert report["crossbar"]["rows"] == 64
    assert 0.25 <= report["totals"]["unused_fraction"] <= 0.36


def test_simulate_command(tmp_path, mini_trained, mini_data_dir):
    out = str(tmp_path / "sim")
    ckpt = mini_trained["result"].checkpoint_path
    code = run([
        "simulate", "--checkpoint", ckpt, "--data-dir", mini_data_dir,
        "--samples", "8", "--adc-bits", "0", "--out", out,
    ])
    assert code == 0
    payload = json.load(open(os.path.join(out, "simulate.json")))
    assert payload["max_logit_error_vs_digital"] < 1e-4


def test_cost_command_with_sweep_and_devices(tmp_path):
    out = str(tmp_path / "cost")
    code = run([
        "cost", "--arch", "vgg8-cifar", "--crossbar", "32x32", "--device", "rram",
        "--sweep-bits", "3,4,5,6", "--devices", "--svg", "--out", out,
    ])
    assert code == 0
    payload = json.load(open(os.path.join(out, "cost.json")))
    assert payload["adc_sweep"]["rows"][0]["latency"] == 1.0
    assert payload["device_energy"]["FeFET"] > payload["device_energy"]["RRAM"]
    assert os.path.exists(os.path.join(out, "cost.csv"))
    svg = open(os.path.join(out, "cost_breakdown.svg")).read()
    assert svg.startswith("<svg") and "<!-- data:" in svg


def test_sweep_command_reuse(tmp_path, mini_trained, mini_data_dir):
    out = str(tmp_path / "sweep")
    ckpt = mini_trained["result"].checkpoint_path
    code = run([
        "sweep", "--reuse", ckpt, "--bits", "2,3,4", "--data-dir", mini_data_dir, "--out", out,
    ])
    assert code == 0
    lines = [l for l in open(os.path.join(out, "sweep.csv")) if not l.startswith("#")]
    assert lines[0].strip() == "b,accuracy,norm_latency,norm_area,norm_energy"
    rows = [l.strip().split(",") for l in lines[1:]]
    assert [r[0] for r in rows] == ["2", "3", "4"]
    # cost columns non-decreasing in b
    for col in (2, 4):
        series = [float(r[col]) for r in rows]
        assert all(a <= b for a, b in zip(series, series[1:]))
    svg = open(os.path.join(out, "accuracy_vs_energy.svg")).read()
    assert "<!-- data:" in svg
    # single bitwidth -> single row
    single = str(tmp_path / "sweep1")
    assert run(["sweep", "--reuse", ckpt, "--bits", "4", "--data-dir", mini_data_dir,
                "--out", single]) == 0
    rows = [l for l in open(os.path.join(single, "sweep.csv")) if not l.startswith(("#", "b,"))]
    assert len(rows) == 1 and rows[0].startswith("4,")


def test_exit_code_config_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["train", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"act_bits": 77}))
    assert run(["eval", "--config", str(good), "--out", str(tmp_path / "o")]) == 2


def test_exit_code_data_error(tmp_path):
    cfg = tmp_path / "cifar.json"
    cfg.write_text(json.dumps({"arch": "vgg8-cifar", "dataset": "cifar10",
                               "data_dir": str(tmp_path / "nowhere"), "epochs": 1}))
    assert run(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3


def test_exit_code_numeric_error(monkeypatch, tmp_path, mini_data_dir):
    def boom(config, out_dir, datasets=None):
        raise NumericError("training aborted: non-finite loss")

    monkeypatch.setattr(cli, "train", boom)
    code = run(["train", "--arch", "mnist-tiny", "--data-dir", mini_data_dir,
                "--out", str(tmp_path / "o")])
    assert code == 4
