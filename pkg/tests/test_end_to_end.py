import numpy as np
import pandas as pd
import pytest

from models.run_config import RunConfig
from utils.commands import cmd_eval, cmd_extract, cmd_run, cmd_simulate, cmd_train
from utils.pipeline import run_scenario, scenario_config
from utils.sim import Simulator

pytestmark = pytest.mark.slow


def _run(cfg, scenario_id):
    sim = Simulator(scenario_config(cfg, scenario_id), cfg.radar, cfg.multipath, cfg.point_noise)
    return run_scenario(cfg, scenario_id, sim.frames())


def test_single_walker_from_radar_cubes():
    cfg = RunConfig(scenarios=(1,), duration_s=6.0, classifier=False, seed=21)
    result = _run(cfg, 1)
    errors = result.track_errors()
    assert errors["frames"] >= 20
    assert errors["median"] < 0.6
    assert result.report.summary.mean_ospa < 1.0


@pytest.mark.parametrize("scenario_id", [1, 2, 3, 4, 5, 6])
def test_every_scenario_tracks_from_point_clouds(scenario_id):
    cfg = RunConfig(scenarios=(scenario_id,), duration_s=10.0, fidelity="point_cloud",
                    classifier=False, seed=8)
    result = _run(cfg, scenario_id)
    ospa = result.report.ospa_table()["ospa"].to_numpy()
    assert len(ospa) == 100
    assert np.all((ospa >= 0) & (ospa <= cfg.ospa.c))
    tracked = [bool(s.confirmed) for s in result.snapshots]
    assert np.mean(tracked) >= 0.5


MULTI_TARGET = [3, 4, 5, 6]
RANDOM_WALK = [2, 5]


@pytest.fixture(scope="module")
def ablation(tmp_path_factory):
    """Full pipeline, classifier off and feedback off over the six scenarios, same seed."""
    root = tmp_path_factory.mktemp("ablation")
    cfg = RunConfig(duration_s=40.0, train_seeds=(101, 102), seed=7, write_cubes=False,
                    cvd_baseline=True)
    cmd_simulate(cfg, root)
    cmd_extract(cfg, root)
    cmd_train(cfg, root, methods=["svm"])
    cmd_eval(cfg, root, grids=("features", "cvd"), methods=["svm"])
    off = cfg.model_copy(update={"classifier": False, "report_dir": "reports_off"})
    no_feedback = cfg.model_copy(update={"count_feedback": False, "report_dir": "reports_no_feedback"})
    tables = {name: cmd_run(c, root).iloc[:-1].set_index("scenario")
              for name, c in (("full", cfg), ("off", off), ("no_feedback", no_feedback))}
    tables["cvd"] = pd.read_csv(root / "reports" / "summary_cvd.csv").iloc[:-1]
    tables["cvd"]["scenario"] = tables["cvd"]["scenario"].astype(int)
    tables["cvd"] = tables["cvd"].set_index("scenario")
    confusion = pd.read_csv(root / "reports" / "confusion.csv", index_col=0).to_numpy()
    evaluation = pd.read_csv(root / "reports" / "eval.csv")
    return tables, confusion, evaluation


def test_classifier_lowers_ospa_on_multi_target_scenarios(ablation):
    tables, _, _ = ablation
    for s in MULTI_TARGET:
        assert tables["full"].loc[s, "mean_ospa"] < tables["off"].loc[s, "mean_ospa"], s


def test_count_feedback_does_not_raise_ospa(ablation):
    tables, _, _ = ablation
    with_feedback = tables["full"].loc[MULTI_TARGET, "mean_ospa"].mean()
    without = tables["no_feedback"].loc[MULTI_TARGET, "mean_ospa"].mean()
    assert with_feedback <= without


def test_smoothed_counting_accuracy(ablation):
    tables, confusion, _ = ablation
    assert np.trace(confusion) / confusion.sum() >= 0.9
    full = tables["full"]
    for s in (1, 2, 3, 6):
        assert full.loc[s, "acc_am"] >= full.loc[s, "acc_bm"], s


def test_wavelet_features_match_or_beat_cvd_on_random_walks(ablation):
    tables, _, _ = ablation
    for s in RANDOM_WALK:
        assert tables["full"].loc[s, "acc_am"] >= tables["cvd"].loc[s, "acc_am"], s


def test_eval_grid_covers_wavelet_and_cvd_feature_sets(ablation):
    _, _, evaluation = ablation
    assert evaluation["feature_set"].tolist() == ["both", "spatial", "frequency", "pca80",
                                                  "cvd_both", "cvd_spatial", "cvd_frequency", "cvd_pca80"]
    assert ((evaluation["acc_am"] >= 0) & (evaluation["acc_am"] <= 100)).all()
