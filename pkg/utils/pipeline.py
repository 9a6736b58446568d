"""
Streaming composition of the per-frame chain:

    cube -> MTI -> RD map -> CFAR -> azimuth -> room clip -> DBSCAN
         -> EKF/GNN tracker -> track buffers -> feature vector
         -> classifier -> count feedback into the tracker

One CountingPipeline instance holds the state of one scenario stream and must
be stepped in frame order.
"""
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from models.radar import Detection
from models.run_config import RunConfig
from models.scenario import ScenarioConfig
from utils.classify import SeamlessClassifier
from utils.cluster import cluster_detections, to_cartesian
from utils.datacube import (
    RadarCube,
    cfar_detect,
    mti_suppress,
    range_azimuth_map,
    range_doppler_transform,
    range_profile,
    select_channels,
)
from utils.errors import ConfigError
from utils.features import FeatureVector, TrackBuffer, build_feature_vector, track_entry
from utils.metrics import ScenarioReport, match_tracks_to_groups, scenario_report, smooth_prediction_log
from utils.sim import FrameSample, TruthFrame, inside_room
from utils.track import Tracker, TrackerSnapshot, track_errors

logger = logging.getLogger(__name__)


def scenario_config(cfg: RunConfig, scenario_id: int, seed: Optional[int] = None) -> ScenarioConfig:
    return ScenarioConfig(
        scenario_id=scenario_id,
        duration_s=cfg.duration_s,
        room=cfg.room,
        group_spacing_m=cfg.group_spacing_m,
        seed=cfg.seed if seed is None else seed,
        fidelity=cfg.fidelity,
    )


@dataclass
class FrameOutput:
    snapshot: TrackerSnapshot
    detections: list[Detection]
    predictions: list[dict] = field(default_factory=list)
    cvd_predictions: list[dict] = field(default_factory=list)
    feature_rows: list[dict] = field(default_factory=list)


def _prediction(fv: FeatureVector, label: int, scores: dict[int, float]) -> dict:
    return {"frame": fv.frame, "track_id": fv.track_id, "label_bm": int(label),
            "label_am": int(label), "scores": {str(k): v for k, v in sorted(scores.items())},
            "mode": fv.mode}


class CountingPipeline:
    """
    Per-scenario streaming state: tracker, one feature buffer per live track,
    optional classifiers.

    `classifier` drives the count feedback; `cvd_classifier` only runs in
    parallel for the baseline prediction log. With `collect_features` every
    confirmed track yields a labeled feature row per frame (labels come from
    the ground truth passed to `step`).
    """

    def __init__(self, cfg: RunConfig, classifier: Optional[SeamlessClassifier] = None,
                 cvd_classifier: Optional[SeamlessClassifier] = None,
                 collect_features: bool = False, scenario_id: int = 0, seed: int = 0):
        if (classifier or cvd_classifier or collect_features) and cfg.fidelity != "signal":
            raise ConfigError("feature extraction needs signal-level frames (fidelity='signal')")
        self.cfg = cfg
        self.tracker = Tracker(cfg.tracker_config())
        self.classifier = classifier
        self.cvd_classifier = cvd_classifier
        self.collect_features = collect_features
        self.scenario_id = scenario_id
        self.seed = seed
        self.buffers: dict[int, TrackBuffer] = {}
        self.dt = cfg.radar.frame_interval

    @property
    def needs_buffers(self) -> bool:
        return bool(self.classifier or self.cvd_classifier or self.collect_features)

    def detect(self, cube: RadarCube) -> tuple[list[Detection], Optional[np.ndarray], object]:
        if self.cfg.n_channels is not None:
            cube = select_channels(cube, self.cfg.n_channels)
        if self.cfg.mti:
            cube = mti_suppress(cube)
        detections = cfar_detect(range_doppler_transform(cube), self.cfg.cfar)
        if not self.needs_buffers:
            return detections, None, None
        return detections, range_profile(cube), range_azimuth_map(cube)

    def clip_to_room(self, detections: list[Detection]) -> list[Detection]:
        if not detections:
            return detections
        xy = np.array([to_cartesian(d) for d in detections])
        keep = inside_room(xy, self.cfg.room)
        return [d for d, k in zip(detections, keep) if k]

    def _update_buffers(self, snapshot: TrackerSnapshot, frame: int, profile, ra_map):
        for view in snapshot.tracks:
            if view.status == "deleted":
                self.buffers.pop(view.id, None)
                continue
            state = self.tracker.track(view.id)
            hit = state is not None and state.history[-1]
            buffer = self.buffers.setdefault(
                view.id, TrackBuffer(view.id, self.cfg.feature.window_frames))
            entry = (track_entry(profile, ra_map, view.position, frame, ra_map.params, self.cfg.feature)
                     if hit else None)
            buffer.push(frame, entry)

    def step(self, sample: FrameSample) -> FrameOutput:
        frame = sample.truth.frame_index if sample.truth is not None else sample.cube.frame_index
        profile = ra_map = None
        if sample.cube is not None:
            detections, profile, ra_map = self.detect(sample.cube)
        elif sample.detections is not None:
            detections = list(sample.detections)
        else:
            raise ConfigError(f"frame {frame}: neither a cube nor detections")
        detections = self.clip_to_room(detections)
        clusters = cluster_detections(detections, self.cfg.cluster).clusters
        snapshot = self.tracker.step(clusters, self.dt, frame)
        out = FrameOutput(snapshot, detections)
        if not self.needs_buffers:
            return out
        if profile is None:
            raise ConfigError(f"frame {frame}: feature extraction needs a radar cube")

        self._update_buffers(snapshot, frame, profile, ra_map)
        truth_counts = (match_tracks_to_groups(snapshot.confirmed, sample.truth)
                        if self.collect_features and sample.truth is not None else {})
        for view in snapshot.confirmed:
            fv = build_feature_vector(self.buffers[view.id], True, self.cfg.feature,
                                      with_cvd=self.cfg.cvd_baseline, frame=frame)
            if self.classifier is not None:
                label, scores = self.classifier.predict(fv)
                self.tracker.feed_count(view.id, label)
                out.predictions.append(_prediction(fv, label, scores))
            if self.cvd_classifier is not None:
                label, scores = self.cvd_classifier.predict(fv)
                out.cvd_predictions.append(_prediction(fv, label, scores))
            if self.collect_features:
                label = truth_counts.get(view.id)
                if label is not None:
                    out.feature_rows.append({"scenario": self.scenario_id, "seed": self.seed,
                                             **fv.to_row(label)})
        return out


@dataclass
class RunResult:
    scenario: int
    truth: list[TruthFrame] = field(default_factory=list)
    snapshots: list[TrackerSnapshot] = field(default_factory=list)
    predictions: list[dict] = field(default_factory=list)
    cvd_predictions: list[dict] = field(default_factory=list)
    feature_rows: list[dict] = field(default_factory=list)
    report: Optional[ScenarioReport] = None
    cvd_report: Optional[ScenarioReport] = None

    @property
    def track_log(self) -> list[dict]:
        return [r for s in self.snapshots for r in s.to_records()]

    def track_errors(self) -> dict:
        return track_errors([t.positions for t in self.truth], self.snapshots)


def run_scenario(cfg: RunConfig, scenario_id: int, frames: Iterable[FrameSample],
                 classifier: Optional[SeamlessClassifier] = None,
                 cvd_classifier: Optional[SeamlessClassifier] = None,
                 collect_features: bool = False, seed: Optional[int] = None) -> RunResult:
    """Drive one scenario stream through the pipeline and score it against its ground truth."""
    seed = cfg.seed if seed is None else seed
    pipeline = CountingPipeline(cfg, classifier, cvd_classifier, collect_features, scenario_id, seed)
    result = RunResult(scenario_id)
    for sample in frames:
        out = pipeline.step(sample)
        result.truth.append(sample.truth)
        result.snapshots.append(out.snapshot)
        result.predictions.extend(out.predictions)
        result.cvd_predictions.extend(out.cvd_predictions)
        result.feature_rows.extend(out.feature_rows)
        logger.debug("scenario %d frame %d: %d detections, %d confirmed tracks", scenario_id,
                     out.snapshot.frame, len(out.detections), len(out.snapshot.confirmed))

    window = cfg.classifier_params.median_window
    result.predictions = smooth_prediction_log(result.predictions, window)
    result.cvd_predictions = smooth_prediction_log(result.cvd_predictions, window)
    if result.truth and result.truth[0] is not None:
        result.report = scenario_report(scenario_id, result.truth, result.track_log,
                                        result.predictions, cfg.ospa, use_counts=classifier is not None)
        if cvd_classifier is not None:
            result.cvd_report = scenario_report(scenario_id, result.truth, result.track_log,
                                                result.cvd_predictions, cfg.ospa)
    logger.info("scenario %d: %d frames, %d predictions, %d feature rows", scenario_id,
                len(result.snapshots), len(result.predictions), len(result.feature_rows))
    return result
