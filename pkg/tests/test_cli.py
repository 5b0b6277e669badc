import argparse
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml

from ihsynth.cli import (
    EXIT_CONFIG, EXIT_DEGENERATE, EXIT_DIVERGENCE, EXIT_IO, EXIT_OK, OUT_ENV, PREDICTIONS_FORMAT, main, output_dir,
)
from ihsynth.config import PipelineConfig
from ihsynth.discriminator import init_params

SMOKE = str(Path(__file__).resolve().parents[1] / "configs" / "smoke.yaml")


@pytest.fixture(scope="module")
def smoke_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("smoke")
    assert main(["run-all", "--config", SMOKE, "--out", str(out)]) == EXIT_OK
    return out


def test_run_all_outputs(smoke_run):
    for name in ("seeds.json", "initial.json", "anchors.json", "discriminator.bin", "optimized.json",
                 "library.json", "filter_report.json", "manifest.json"):
        assert (smoke_run / name).exists(), name
    man = json.loads((smoke_run / "manifest.json").read_text())
    assert man["pairs"] == man["yield"]["kept"] and man["records"] == 10 * man["pairs"]
    assert man["config_hash"] == PipelineConfig.load(SMOKE).hash()


def test_eval_against_itself(smoke_run, tmp_path, capsys):
    assert main(["eval", "--pred", str(smoke_run), "--gt", str(smoke_run), "--report", str(tmp_path / "r")]) == 0
    rep = json.loads((tmp_path / "r.json").read_text())["summary"]
    assert rep["mpjpe"] == 0.0 and rep["mrrpe"] == 0.0
    assert rep["pampjpe"] < 1e-9 and rep["smpjpe"] < 1e-9
    assert rep["cdev"] is None or rep["cdev"] == 0.0
    assert "mpjpe" in capsys.readouterr().out


def test_eval_defaults_gt_to_out_dir(smoke_run, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(smoke_run))
    assert main(["eval", "--pred", str(smoke_run)]) == EXIT_OK


def _predictions(smoke_run, transform):
    preds = []
    for f in json.loads((smoke_run / "manifest.json").read_text())["files"]:
        doc = json.loads((smoke_run / f["name"]).read_text())
        for v in doc["views"]:
            preds.append({"pair_index": doc["pair_index"], "camera_index": v["camera_index"],
                          "joints_3d": transform(np.array(v["joints_3d"])).tolist()})
    return {"format": PREDICTIONS_FORMAT, "predictions": preds}


def test_eval_predictions_file(smoke_run, tmp_path):
    doc = _predictions(smoke_run, lambda j: j + np.array([0.01, 0.0, 0.0]))
    (tmp_path / "p.json").write_text(json.dumps(doc))
    assert main(["eval", "--pred", str(tmp_path / "p.json"), "--gt", str(smoke_run),
                 "--report", str(tmp_path / "r")]) == EXIT_OK
    rep = json.loads((tmp_path / "r.json").read_text())["summary"]
    assert rep["mpjpe"] == pytest.approx(0.0, abs=1e-9) and rep["cdev"] is None


def test_eval_degenerate_prediction(smoke_run, tmp_path):
    doc = _predictions(smoke_run, lambda j: np.zeros_like(j))
    (tmp_path / "p.json").write_text(json.dumps(doc))
    assert main(["eval", "--pred", str(tmp_path / "p.json"), "--gt", str(smoke_run)]) == EXIT_DEGENERATE


def test_eval_missing_inputs(smoke_run, tmp_path):
    assert main(["eval", "--pred", str(tmp_path / "nothing"), "--gt", str(smoke_run)]) == EXIT_IO
    (tmp_path / "p.json").write_text(json.dumps({"format": PREDICTIONS_FORMAT, "predictions": []}))
    assert main(["eval", "--pred", str(tmp_path / "p.json"), "--gt", str(smoke_run)]) == EXIT_IO
    (tmp_path / "q.json").write_text("{")
    assert main(["eval", "--pred", str(tmp_path / "q.json"), "--gt", str(smoke_run)]) == EXIT_IO


def test_missing_config_writes_nothing(tmp_path):
    out = tmp_path / "out"
    assert main(["run-all", "--config", str(tmp_path / "none.yaml"), "--out", str(out)]) == EXIT_CONFIG
    assert not out.exists()
    assert main(["gen-poses", "--set", "schedule", "--out", str(out)]) == EXIT_CONFIG
    assert main(["gen-poses", "--set", "nosuch.key=1", "--out", str(out)]) == EXIT_CONFIG
    assert not out.exists()


def test_print_config(capsys):
    assert main(["print-config", "--config", SMOKE, "--set", "schedule.iterations=70", "--seed", "9"]) == 0
    doc = yaml.safe_load(capsys.readouterr().out)
    assert doc["schedule"]["iterations"] == 70 and doc["seed"] == 9 and doc["seeds"]["count"] == 2


def test_output_dir_precedence(monkeypatch):
    cfg = PipelineConfig.load(overrides={"paths": {"out_dir": "from_config"}})
    ns = argparse.Namespace(out=None)
    monkeypatch.delenv(OUT_ENV, raising=False)
    assert output_dir(ns, cfg) == Path("from_config")
    monkeypatch.setenv(OUT_ENV, "from_env")
    assert output_dir(ns, cfg) == Path("from_env")
    assert output_dir(argparse.Namespace(out="from_flag"), cfg) == Path("from_flag")


def test_stages_one_by_one(tmp_path):
    base = ["--config", SMOKE, "--out", str(tmp_path)]
    for stage in (["gen-poses"], ["select-anchors"], ["train-disc"], ["optimize", "--traces"], ["filter"],
                  ["export", "--cameras", "full"]):
        assert main(stage + base) == EXIT_OK, stage
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["records"] == 40 * man["pairs"] and man["camera_mode"] == "full"
    traces = sorted((tmp_path / "traces").glob("pair_*.csv"))
    assert len(traces) == 4
    assert len(traces[0].read_text().splitlines()) == 61
    # stage order matters: filtering before optimizing is an input error
    assert main(["filter", "--out", str(tmp_path / "empty")]) == EXIT_IO


def test_stage_outputs_are_deterministic(smoke_run, tmp_path):
    assert main(["run-all", "--config", SMOKE, "--out", str(tmp_path), "--workers", "2"]) == EXIT_OK
    for name in ("manifest.json", "library.json", "optimized.json", "anchors.json", "discriminator.bin"):
        assert (tmp_path / name).read_bytes() == (smoke_run / name).read_bytes(), name


def test_divergence_exit_code(tmp_path):
    bad = init_params(np.random.default_rng(0))
    bad.biases[0][:] = np.nan
    bad.save(tmp_path / "nan.bin")
    args = ["--config", SMOKE, "--out", str(tmp_path / "o"), "--set", f"paths.discriminator={tmp_path / 'nan.bin'}"]
    for stage in ("gen-poses", "select-anchors", "train-disc"):
        assert main([stage] + args) == EXIT_OK
    assert main(["optimize"] + args) == EXIT_DIVERGENCE


def test_bad_proportions_is_a_config_error(tmp_path):
    from ihsynth.hand_model import Proportions
    doc = Proportions().to_dict()
    doc["fingers"]["index"]["lengths"][0] = 0.0
    (tmp_path / "p.yaml").write_text(yaml.safe_dump(doc))
    assert main(["gen-poses", "--out", str(tmp_path / "o"), "--set", f"paths.proportions={tmp_path / 'p.yaml'}"]) \
        == EXIT_CONFIG


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "ihsynth.cli", "print-config"], capture_output=True, text=True)
    assert res.returncode == 0 and "schedule:" in res.stdout
    res = subprocess.run([sys.executable, "-m", "ihsynth.cli", "--help"], capture_output=True, text=True)
    for cmd in ("gen-poses", "select-anchors", "train-disc", "optimize", "filter", "export", "run-all", "eval"):
        assert cmd in res.stdout
