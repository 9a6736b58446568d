from collections import defaultdict

import numpy as np
import pytest

from models.radar import Detection
from utils.commands import fit_seamless
from utils.errors import ConfigError
from utils.pipeline import CountingPipeline, run_scenario, scenario_config
from utils.sim import FrameSample, Simulator


def _frames(cfg, scenario_id):
    return Simulator(scenario_config(cfg, scenario_id), cfg.radar, cfg.multipath,
                     cfg.point_noise).frames()


def test_point_cloud_single_walker_is_tracked(point_config):
    result = run_scenario(point_config, 1, _frames(point_config, 1))
    assert len(result.snapshots) == 60
    errors = result.track_errors()
    assert errors["frames"] >= 40
    assert errors["median"] < 0.5
    assert result.report is not None
    assert result.report.summary.mean_ospa < 1.0
    assert result.predictions == [] and result.feature_rows == []


def test_track_log_records_are_frame_ordered(point_config):
    result = run_scenario(point_config, 3, _frames(point_config, 3))
    frames = [r["frame"] for r in result.track_log]
    assert frames == sorted(frames)
    ids = {r["id"] for r in result.track_log if r["status"] == "confirmed"}
    assert ids


def test_room_clip_drops_outside_detections(point_config):
    pipeline = CountingPipeline(point_config)
    inside = Detection(range_m=3.0, azimuth_deg=0.0)
    behind_wall = Detection(range_m=9.0, azimuth_deg=0.0)
    assert pipeline.clip_to_room([inside, behind_wall]) == [inside]
    assert pipeline.clip_to_room([]) == []


def test_feature_collection_needs_signal_frames(point_config):
    with pytest.raises(ConfigError):
        CountingPipeline(point_config, collect_features=True)


def test_frame_without_data_is_rejected(point_config):
    truth = next(iter(_frames(point_config, 1))).truth
    with pytest.raises(ConfigError):
        CountingPipeline(point_config).step(FrameSample(truth=truth))


@pytest.mark.slow
def test_feature_vectors_follow_the_seamless_contract(quick_config):
    cfg = quick_config.model_copy(update={"classifier": False})
    result = run_scenario(cfg, 1, _frames(cfg, 1), collect_features=True)
    assert result.feature_rows
    modes = defaultdict(list)
    for row in result.feature_rows:
        modes[row["track_id"]].append(row["mode"])
        assert row["label"] == 1
        assert np.isfinite([row[k] for k in ("az_width", "pixels")]).all()
    for seq in modes.values():
        # spatial-only until the window fills, full afterwards
        first_full = seq.index("full") if "full" in seq else len(seq)
        assert set(seq[:first_full]) <= {"spatial_only"}
        assert set(seq[first_full:]) <= {"full"}
        assert first_full <= cfg.feature.window_frames


@pytest.mark.slow
@pytest.mark.parametrize("scenario_id", [1, 2, 3])
def test_every_confirmed_frame_gets_a_prediction(quick_config, labeled_features, scenario_id):
    cfg = quick_config.model_copy(update={"duration_s": 6.0})
    classifier = fit_seamless(labeled_features, "knn", "both", cfg)
    result = run_scenario(cfg, scenario_id, _frames(cfg, scenario_id), classifier=classifier)
    confirmed = defaultdict(list)
    for r in result.track_log:
        if r["status"] == "confirmed":
            confirmed[r["id"]].append(r["frame"])
    predicted = defaultdict(list)
    modes = defaultdict(list)
    for p in result.predictions:
        predicted[p["track_id"]].append(p["frame"])
        modes[p["track_id"]].append(p["mode"])
    assert confirmed
    assert set(predicted) == set(confirmed)
    for tid, frames in confirmed.items():
        # no gap between confirmation and deletion
        assert frames == list(range(frames[0], frames[-1] + 1))
        assert sorted(predicted[tid]) == frames
        seq = [m for _, m in sorted(zip(predicted[tid], modes[tid]))]
        first_full = seq.index("full") if "full" in seq else len(seq)
        assert set(seq[:first_full]) <= {"spatial_only"}
        assert set(seq[first_full:]) <= {"full"}
    assert all(p["label_am"] in (1, 2, 3) for p in result.predictions)
