import json

import pandas as pd
import pytest
from openpyxl import load_workbook

from scripts.gtrack import EXIT_CONFIG, EXIT_DATA, EXIT_OK, build_parser, main

POINT = ["--scenarios", "1", "3", "--duration", "3", "--fidelity", "point_cloud", "--seed", "3"]


def test_parser_knows_every_subcommand():
    parser = build_parser()
    for cmd in ("simulate", "extract", "train", "eval", "run", "report"):
        assert parser.parse_args([cmd]).command == cmd
    args = parser.parse_args(["run", "--no-mti", "--no-feedback", "--channels", "2"])
    assert args.mti is False and args.count_feedback is False and args.n_channels == 2
    assert parser.parse_args(["run"]).mti is None


def test_simulate_writes_scenario_files(tmp_path, capsys):
    assert main(["simulate", "--output", str(tmp_path), *POINT]) == EXIT_OK
    for s in (1, 3):
        d = tmp_path / "data" / "seed_3" / f"scenario_{s}"
        assert (d / "scenario.json").exists()
        assert len((d / "truth.jsonl").read_text().splitlines()) == 30
        assert (d / "detections.jsonl").exists()
        assert not (d / "cubes.bin").exists()
    assert "scenario 3 seed 3: 30 frames, 2 people" in capsys.readouterr().out


def test_simulation_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["simulate", "--output", str(tmp_path / name), *POINT]) == EXIT_OK
    rel = "data/seed_3/scenario_3"
    for f in ("truth.jsonl", "detections.jsonl"):
        assert (tmp_path / "a" / rel / f).read_bytes() == (tmp_path / "b" / rel / f).read_bytes()


def test_tracking_only_run_and_report(tmp_path):
    assert main(["simulate", "--output", str(tmp_path), *POINT]) == EXIT_OK
    assert main(["run", "--output", str(tmp_path), "--no-classifier", *POINT]) == EXIT_OK
    reports = tmp_path / "reports"
    summary = pd.read_csv(reports / "summary.csv")
    assert summary["scenario"].astype(str).tolist() == ["1", "3", "Average"]
    assert summary["acc_bm"].isna().all()
    assert (reports / "scenario_3" / "tracks.jsonl").exists()
    assert len(pd.read_csv(reports / "scenario_1" / "ospa.csv")) == 30
    settings = json.loads((reports / "run_config.json").read_text())
    assert settings["classifier"] is False and settings["seed"] == 3
    first = (reports / "summary.csv").read_bytes()
    assert main(["run", "--output", str(tmp_path), "--no-classifier", *POINT]) == EXIT_OK
    assert (reports / "summary.csv").read_bytes() == first

    errors = pd.read_csv(reports / "track_errors.csv")
    assert errors["scenario"].tolist() == [1]
    assert errors.columns.tolist() == ["scenario", "frames", "median", "mae", "rmse"]

    assert main(["report", "--output", str(tmp_path), "--no-classifier", *POINT]) == EXIT_OK
    workbook = load_workbook(reports / "group_tracking_report_tracking_only_seed3.xlsx")
    assert {"Scenario Summary", "OSPA Over Time", "Track Errors", "Run Settings"} <= set(workbook.sheetnames)


def test_identical_seeds_give_identical_report_csvs(tmp_path):
    for name in ("a", "b"):
        out = ["--output", str(tmp_path / name)]
        assert main(["simulate", *out, *POINT]) == EXIT_OK
        assert main(["run", *out, "--no-classifier", *POINT]) == EXIT_OK
        assert main(["report", *out, "--no-classifier", *POINT]) == EXIT_OK
    files = ["summary.csv", "track_errors.csv", "confusion.csv",
             "scenario_1/ospa.csv", "scenario_3/ospa.csv", "scenario_3/tracks.jsonl"]
    for f in files:
        a = (tmp_path / "a" / "reports" / f).read_bytes()
        assert a == (tmp_path / "b" / "reports" / f).read_bytes(), f


def test_missing_config_file_is_a_config_error(tmp_path, capsys):
    code = main(["simulate", "--output", str(tmp_path), "--config", str(tmp_path / "nope.json")])
    assert code == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err


def test_unknown_config_key_is_a_config_error(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"tracker": {"gate": 9.21, "gating": 1}}))
    assert main(["run", "--output", str(tmp_path), "--config", str(path)]) == EXIT_CONFIG


def test_invalid_override_is_a_config_error(tmp_path):
    assert main(["simulate", "--output", str(tmp_path), "--scenarios", "9"]) == EXIT_CONFIG


def test_run_without_data_is_a_data_error(tmp_path, capsys):
    assert main(["run", "--output", str(tmp_path), "--no-classifier", *POINT]) == EXIT_DATA
    assert "run 'simulate' first" in capsys.readouterr().err


def test_missing_inputs_are_data_errors(tmp_path):
    assert main(["train", "--output", str(tmp_path)]) == EXIT_DATA
    assert main(["report", "--output", str(tmp_path)]) == EXIT_DATA
    assert main(["run", "--output", str(tmp_path), *POINT[:-4]]) == EXIT_DATA


@pytest.mark.slow
def test_extract_train_run_on_signal_frames(tmp_path):
    quick = ["--scenarios", "1", "3", "--duration", "4", "--seed", "5", "--no-cubes"]
    out = ["--output", str(tmp_path)]
    assert main(["simulate", *out, *quick]) == EXIT_OK
    assert main(["extract", *out, *quick, "--seeds", "5"]) == EXIT_OK
    table = pd.read_csv(tmp_path / "data" / "features.csv")
    assert set(table["label"]) <= {1, 2, 3} and len(table)
    hist = pd.read_csv(tmp_path / "data" / "feature_histograms.csv")
    assert hist.columns.tolist() == ["feature", "label", "bin_left", "bin_right", "count"]
    assert set(hist["label"]) == set(table["label"])
    assert main(["train", *out, *quick, "--methods", "knn", "--features", "spatial"]) == EXIT_OK
    assert (tmp_path / "models" / "knn_spatial.joblib").exists()
    assert main(["run", *out, *quick, "--method", "knn", "--features", "spatial"]) == EXIT_OK
    preds = (tmp_path / "reports" / "scenario_1" / "predictions.jsonl").read_text().splitlines()
    assert all(json.loads(p)["label_am"] in (1, 2, 3) for p in preds)

    # the same seed into a second report directory reproduces every byte
    second = tmp_path / "again.json"
    second.write_text(json.dumps({"report_dir": "reports_again"}))
    assert main(["run", *out, *quick, "--method", "knn", "--features", "spatial",
                 "--config", str(second)]) == EXIT_OK
    for f in ("summary.csv", "scenario_1/ospa.csv", "scenario_3/ospa.csv",
              "scenario_3/predictions.jsonl", "scenario_3/tracks.jsonl"):
        a = (tmp_path / "reports" / f).read_bytes()
        assert a == (tmp_path / "reports_again" / f).read_bytes(), f
