"""
Batch operations shared by the command line and the HTTP routes.

Every command takes a RunConfig and the output root; relative directories in
the config resolve against that root:

    <root>/<data_dir>/seed_<seed>/scenario_<id>/{scenario.json, truth.jsonl,
                                               cubes.bin | detections.jsonl}
    <root>/<data_dir>/features.csv
    <root>/<model_dir>/<method>_<feature set>.joblib
    <root>/<report_dir>/...
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Sequence

import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict

from models.classifier import METHODS, FeatureSet
from models.radar import Detection, RadarParams
from models.run_config import RunConfig
from models.scenario import SCENARIO_CATALOG, MultipathConfig, PointNoise, ScenarioConfig
from utils import dataset
from utils.classify import (
    SeamlessClassifier,
    evaluate,
    load_model,
    save_model,
    split_dataset,
    train,
)
from utils.errors import ConfigError, DataError
from utils.excel import build_report_workbook
from utils.metrics import OSPA_COLUMNS, summary_table, write_csv
from utils.pipeline import RunResult, run_scenario, scenario_config
from utils.records import iter_cubes, read_jsonl, write_cubes, write_jsonl
from utils.sim import FrameSample, Simulator, TruthFrame

logger = logging.getLogger(__name__)

EVAL_GRIDS: dict[str, tuple[str, ...]] = {
    "methods": ("both",),
    "levels": ("approx", "level4", "level3", "level2", "level1"),
    "features": ("both", "spatial", "frequency", "pca80"),
    "cvd": ("cvd_both", "cvd_spatial", "cvd_frequency", "cvd_pca80"),
}


class ScenarioFile(BaseModel):
    """Everything needed to re-synthesize a stored scenario frame by frame."""

    model_config = ConfigDict(extra="forbid")

    scenario: ScenarioConfig
    radar: RadarParams = RadarParams()
    multipath: MultipathConfig = MultipathConfig()
    point_noise: PointNoise = PointNoise()
    frames: int = 0
    has_cubes: bool = False


@dataclass(frozen=True)
class Layout:
    root: Path
    cfg: RunConfig

    def _resolve(self, d: str) -> Path:
        p = Path(d)
        return p if p.is_absolute() else self.root / p

    @property
    def data(self) -> Path:
        return self._resolve(self.cfg.data_dir)

    @property
    def models(self) -> Path:
        return self._resolve(self.cfg.model_dir)

    @property
    def reports(self) -> Path:
        return self._resolve(self.cfg.report_dir)

    def scenario_dir(self, scenario_id: int, seed: int) -> Path:
        return self.data / f"seed_{seed}" / f"scenario_{scenario_id}"

    @property
    def features(self) -> Path:
        return self.data / "features.csv"

    def model_path(self, method: str, feature_set: str) -> Path:
        return self.models / f"{method}_{feature_set}.joblib"

    def run_dir(self, scenario_id: int) -> Path:
        return self.reports / f"scenario_{scenario_id}"


def _simulator(cfg: RunConfig, scenario_id: int, seed: int) -> Simulator:
    return Simulator(scenario_config(cfg, scenario_id, seed), cfg.radar, cfg.multipath, cfg.point_noise)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def simulate_one(cfg: RunConfig, root: Path, scenario_id: int, seed: int) -> dict:
    layout = Layout(root, cfg)
    out = layout.scenario_dir(scenario_id, seed)
    out.mkdir(parents=True, exist_ok=True)
    sim = _simulator(cfg, scenario_id, seed)
    n = write_jsonl(out / "truth.jsonl", (t.to_record() for t in sim.truth))
    has_cubes = cfg.fidelity == "signal" and cfg.write_cubes
    if has_cubes:
        write_cubes(out / "cubes.bin", (sim.cube(k) for k in range(n)))
    elif cfg.fidelity == "point_cloud":
        write_jsonl(out / "detections.jsonl",
                    (d.to_record() for k in range(n) for d in sim.point_cloud(k)))
    meta = ScenarioFile(scenario=sim.config, radar=cfg.radar, multipath=cfg.multipath,
                        point_noise=cfg.point_noise, frames=n, has_cubes=has_cubes)
    (out / "scenario.json").write_text(meta.model_dump_json(indent=2))
    summary = {"scenario": scenario_id, "seed": seed, "frames": n,
               "people": sim.config.n_people, "motion": sim.config.motion_kind,
               "fidelity": cfg.fidelity, "dir": str(out)}
    logger.info("simulated scenario %d seed %d: %d frames -> %s", scenario_id, seed, n, out)
    return summary


def cmd_simulate(cfg: RunConfig, root: Path, seeds: Optional[Sequence[int]] = None) -> list[dict]:
    """Write ground truth plus cubes or point clouds for every configured scenario and seed."""
    seeds = list(seeds) if seeds is not None else [cfg.seed]
    return [simulate_one(cfg, root, s, seed) for seed in seeds for s in cfg.scenarios]


def load_frames(scenario_dir: Path) -> tuple[ScenarioFile, Iterator[FrameSample]]:
    """Stream a stored scenario; cubes that were not written are synthesized again from the seed."""
    meta_path = scenario_dir / "scenario.json"
    if not meta_path.exists():
        raise DataError(f"no simulated data in {scenario_dir}")
    meta = ScenarioFile.model_validate_json(meta_path.read_text())
    fr = meta.radar.frame_rate
    radius = meta.scenario.grouping_radius_m
    truth = [TruthFrame.from_record(r, fr, radius) for r in read_jsonl(scenario_dir / "truth.jsonl")]
    if len(truth) != meta.frames:
        raise DataError(f"{scenario_dir}: expected {meta.frames} truth frames, found {len(truth)}")

    def stream() -> Iterator[FrameSample]:
        if meta.scenario.fidelity == "point_cloud":
            by_frame: dict[int, list[Detection]] = {}
            path = scenario_dir / "detections.jsonl"
            records = read_jsonl(path) if path.exists() else []
            for r in records:
                d = Detection.from_record(r)
                by_frame.setdefault(d.frame_index, []).append(d)
            for t in truth:
                yield FrameSample(truth=t, detections=by_frame.get(t.frame_index, []))
        elif meta.has_cubes:
            cubes = iter_cubes(scenario_dir / "cubes.bin", meta.radar)
            for t, cube in zip(truth, cubes):
                if cube.frame_index != t.frame_index:
                    raise DataError(f"{scenario_dir}: cube frame {cube.frame_index} "
                                    f"does not match truth frame {t.frame_index}")
                yield FrameSample(truth=t, cube=cube)
        else:
            sim = Simulator(meta.scenario, meta.radar, meta.multipath, meta.point_noise)
            for t in truth:
                yield FrameSample(truth=t, cube=sim.cube(t.frame_index))

    return meta, stream()


def _frames(cfg: RunConfig, root: Path, scenario_id: int, seed: int,
            simulate_missing: bool) -> Iterator[FrameSample]:
    scenario_dir = Layout(root, cfg).scenario_dir(scenario_id, seed)
    if (scenario_dir / "scenario.json").exists():
        return load_frames(scenario_dir)[1]
    if not simulate_missing:
        raise DataError(f"scenario {scenario_id} seed {seed}: run 'simulate' first ({scenario_dir})")
    logger.info("scenario %d seed %d: no stored data, simulating in memory", scenario_id, seed)
    return _simulator(cfg, scenario_id, seed).frames(with_cubes=True)


# ---------------------------------------------------------------------------
# extract / train / eval
# ---------------------------------------------------------------------------

def _extract_one(cfg: RunConfig, root: Path, scenario_id: int, seed: int) -> list[dict]:
    frames = _frames(cfg, root, scenario_id, seed, simulate_missing=True)
    return run_scenario(cfg, scenario_id, frames, collect_features=True, seed=seed).feature_rows


def cmd_extract(cfg: RunConfig, root: Path, seeds: Optional[Sequence[int]] = None) -> Path:
    """Track every training scenario (no feedback) and write the labeled feature table."""
    seeds = list(seeds) if seeds is not None else list(cfg.train_seeds)
    cfg = cfg.model_copy(update={"cvd_baseline": True, "classifier": False})
    jobs = [(s, seed) for seed in seeds for s in cfg.scenarios]
    chunks = Parallel(n_jobs=cfg.workers)(delayed(_extract_one)(cfg, root, s, seed) for s, seed in jobs)
    rows = [r for chunk in chunks for r in chunk]
    if not rows:
        raise DataError("feature extraction produced no labeled rows")
    table = dataset.feature_table(rows, cfg.feature.levels, with_cvd=True)
    path = dataset.write_features(table, Layout(root, cfg).features)
    hist = dataset.feature_histograms(dataset.drop_unlabeled(table))
    write_csv(hist, path.with_name("feature_histograms.csv"))
    return path


def _training_table(layout: Layout, path: Optional[Path]) -> pd.DataFrame:
    return dataset.drop_unlabeled(dataset.read_features(path or layout.features))


def fit_seamless(table: pd.DataFrame, method: str, feature_set: str, cfg: RunConfig) -> SeamlessClassifier:
    levels = cfg.feature.levels
    spatial_set = "cvd_spatial" if feature_set.startswith("cvd") else "spatial"
    spatial = train(table, method, spatial_set, cfg.classifier_params, levels)
    full = spatial if feature_set == spatial_set else train(table, method, feature_set,
                                                            cfg.classifier_params, levels)
    return SeamlessClassifier(spatial, full)


def cmd_train(cfg: RunConfig, root: Path, methods: Optional[Sequence[str]] = None,
              features_path: Optional[Path] = None) -> list[Path]:
    """One seamless model file per method (plus a CVD-baseline file when enabled)."""
    layout = Layout(root, cfg)
    table = _training_table(layout, features_path)
    layout.models.mkdir(parents=True, exist_ok=True)
    written = []
    for method in methods or METHODS:
        sets = [cfg.features] + (["cvd_both"] if cfg.cvd_baseline else [])
        for feature_set in sets:
            path = layout.model_path(method, feature_set)
            save_model(fit_seamless(table, method, feature_set, cfg), path)
            written.append(path)
            logger.info("saved %s", path)
    return written


def eval_grid(table: pd.DataFrame, cfg: RunConfig, grid: str,
              methods: Optional[Sequence[str]] = None) -> pd.DataFrame:
    if grid not in EVAL_GRIDS:
        raise ConfigError(f"unknown evaluation grid {grid!r}; choose from {sorted(EVAL_GRIDS)}")
    methods = list(methods or (METHODS if grid == "methods" else [cfg.method]))
    train_rows, test_rows = split_dataset(table, 0.3, cfg.classifier_params.seed)
    rows = []
    for method in methods:
        for feature_set in EVAL_GRIDS[grid]:
            model = train(train_rows, method, feature_set, cfg.classifier_params, cfg.feature.levels)
            ev = evaluate(model, test_rows)
            rows.append({"grid": grid, "method": method, "feature_set": feature_set,
                         "acc_bm": ev.accuracy_bm, "acc_am": ev.accuracy_am, "n_test": ev.n})
    return pd.DataFrame(rows, columns=["grid", "method", "feature_set", "acc_bm", "acc_am", "n_test"])


def cmd_eval(cfg: RunConfig, root: Path, grids: Sequence[str] = ("methods",),
             methods: Optional[Sequence[str]] = None, features_path: Optional[Path] = None) -> Path:
    """70/30 stratified comparison grids written to <report_dir>/eval.csv."""
    layout = Layout(root, cfg)
    table = _training_table(layout, features_path)
    result = pd.concat([eval_grid(table, cfg, g, methods) for g in grids], ignore_index=True)
    layout.reports.mkdir(parents=True, exist_ok=True)
    path = layout.reports / "eval.csv"
    write_csv(result, path)
    logger.info("evaluation grid %s -> %s", list(grids), path)
    return path


# ---------------------------------------------------------------------------
# run / report
# ---------------------------------------------------------------------------

def _load_classifier(layout: Layout, method: str, feature_set: FeatureSet) -> SeamlessClassifier:
    path = layout.model_path(method, feature_set)
    if not path.exists():
        raise DataError(f"missing model {path}; run 'train' first")
    model = load_model(path)
    if not isinstance(model, SeamlessClassifier):
        raise DataError(f"{path} does not hold a seamless classifier")
    return model


def _run_one(cfg: RunConfig, root: Path, scenario_id: int,
             classifier: Optional[SeamlessClassifier],
             cvd_classifier: Optional[SeamlessClassifier]) -> RunResult:
    frames = _frames(cfg, root, scenario_id, cfg.seed, simulate_missing=False)
    result = run_scenario(cfg, scenario_id, frames, classifier, cvd_classifier)
    out = Layout(root, cfg).run_dir(scenario_id)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(out / "tracks.jsonl", result.track_log)
    write_jsonl(out / "predictions.jsonl", result.predictions)
    if cvd_classifier is not None:
        write_jsonl(out / "predictions_cvd.jsonl", result.cvd_predictions)
    write_csv(result.report.ospa_table(), out / "ospa.csv")
    return result


TRACK_ERROR_COLUMNS = ["scenario", "frames", "median", "mae", "rmse"]


def track_error_table(results: Sequence[RunResult]) -> pd.DataFrame:
    """Position error of the confirmed track for the single-person scenarios."""
    rows = [{"scenario": r.scenario, **r.track_errors()} for r in results
            if SCENARIO_CATALOG[r.scenario]["n_people"] == 1]
    return pd.DataFrame(rows, columns=TRACK_ERROR_COLUMNS)


def cmd_run(cfg: RunConfig, root: Path) -> pd.DataFrame:
    """Stream every scenario through the pipeline; writes logs, per-frame OSPA and summary.csv."""
    layout = Layout(root, cfg)
    classifier = _load_classifier(layout, cfg.method, cfg.features) if cfg.classifier else None
    cvd = (_load_classifier(layout, cfg.method, "cvd_both")
           if cfg.classifier and cfg.cvd_baseline else None)
    results = Parallel(n_jobs=cfg.workers)(
        delayed(_run_one)(cfg, root, s, classifier, cvd) for s in cfg.scenarios)
    table = summary_table([r.report for r in results])
    write_csv(table, layout.reports / "summary.csv")
    if cvd is not None:
        write_csv(summary_table([r.cvd_report for r in results]), layout.reports / "summary_cvd.csv")
    settings = cfg.model_dump(mode="json")
    (layout.reports / "run_config.json").write_text(json.dumps(settings, indent=2, sort_keys=True))
    errors = track_error_table(results)
    if len(errors):
        write_csv(errors, layout.reports / "track_errors.csv")
    confusion = sum(r.report.confusion for r in results)
    pd.DataFrame(confusion, index=[1, 2, 3], columns=[1, 2, 3]).to_csv(
        layout.reports / "confusion.csv", lineterminator="\n")
    logger.info("run finished: mean OSPA %.3f over %d scenarios",
                float(table["mean_ospa"].iloc[-1]), len(results))
    return table


def cmd_report(cfg: RunConfig, root: Path) -> tuple[Path, str]:
    """Collect the CSV outputs of `run` (and `eval` when present) into an Excel workbook."""
    layout = Layout(root, cfg)
    summary_path = layout.reports / "summary.csv"
    if not summary_path.exists():
        raise DataError(f"{summary_path} not found; run 'run' first")
    summary = pd.read_csv(summary_path)
    ospa = []
    for s in cfg.scenarios:
        p = layout.run_dir(s) / "ospa.csv"
        if p.exists():
            ospa.append(pd.read_csv(p).assign(scenario=s)[["scenario", *OSPA_COLUMNS]])
    ospa_table = pd.concat(ospa, ignore_index=True) if ospa else pd.DataFrame(columns=["scenario", *OSPA_COLUMNS])
    confusion_path = layout.reports / "confusion.csv"
    confusion = pd.read_csv(confusion_path, index_col=0) if confusion_path.exists() else None
    eval_path = layout.reports / "eval.csv"
    evaluation = pd.read_csv(eval_path) if eval_path.exists() else None
    errors_path = layout.reports / "track_errors.csv"
    errors = pd.read_csv(errors_path) if errors_path.exists() else None
    output, filename = build_report_workbook(summary, ospa_table, confusion, cfg, evaluation, errors)
    path = layout.reports / filename
    path.write_bytes(output.getvalue())
    return path, filename
