"""
Counting-aware OSPA and per-scenario reports.

The localization and cardinality terms follow the modified OSPA used for
group tracking: a track whose classifier count is k stands for k people, so
the effective number of estimated objects is the sum of the track counts.
"""
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd

from models.metrics import OspaConfig, OspaFrame, ScenarioSummary
from utils.classify import median_smooth, score_predictions
from utils.errors import DataError
from utils.sim import TruthFrame
from utils.track import associate_gnn

logger = logging.getLogger(__name__)

MATCH_RADIUS_M = 1.5
OSPA_COLUMNS = ["frame", "ospa", "d_loc", "d_card"]
SUMMARY_COLUMNS = ["scenario", "acc_bm", "acc_am", "mean_ospa", "mean_dloc", "mean_dcard"]


def _points(a) -> np.ndarray:
    return np.asarray(a, dtype=float).reshape(-1, 2)


def cutoff_costs(truth: np.ndarray, tracks: np.ndarray, cfg: OspaConfig) -> np.ndarray:
    """d_c^p between every truth (rows) and track (columns)."""
    d = np.linalg.norm(truth[:, None, :] - tracks[None, :, :], axis=-1)
    return np.minimum(d, cfg.c) ** cfg.p


def optimal_cost(costs: np.ndarray) -> float:
    if costs.size == 0:
        return 0.0
    # every pair is admissible under the cutoff
    assignment = associate_gnn(costs, gate=float(costs.max()) + 1.0)
    return float(sum(costs[i, j] for i, j in assignment.pairs))


def expand_tracks(positions, counts: Optional[Sequence[int]] = None) -> np.ndarray:
    """Repeat each track position by its count."""
    positions = _points(positions)
    if counts is None:
        return positions
    counts = np.asarray(counts, dtype=int)
    if len(counts) != len(positions):
        raise DataError("one count per track expected")
    if (counts < 0).any():
        raise DataError("track counts must be non-negative")
    return np.repeat(positions, counts, axis=0)


def ospa_frame(truth, tracks, counts: Optional[Sequence[int]] = None, q: int = 0,
               cfg: OspaConfig = OspaConfig(), frame: int = 0) -> OspaFrame:
    """
    Modified OSPA for one frame.

    `tracks` are confirmed track positions, `counts` their classifier counts
    (default one person each). q is the classifier excess: sum(counts) - n,
    plus any extra `q` given. The effective estimate N = n + q is compared
    with the m truth positions; both terms are divided by max(N, m), which is
    N whenever the estimate over-counts. No estimate at all saturates at c.
    """
    truth = _points(truth)
    n = len(_points(tracks))
    replicated = expand_tracks(tracks, counts)
    q = int(q) + (len(replicated) - n)
    m = len(truth)
    N = n + q
    if N <= 0 and m == 0:
        return OspaFrame(frame=frame, d_loc=0.0, d_card=0.0, ospa=0.0, n=n, m=m, q=q)
    if N <= 0:
        return OspaFrame(frame=frame, d_loc=0.0, d_card=cfg.c, ospa=cfg.c, n=n, m=m, q=q)
    D = max(N, m)
    loc = optimal_cost(cutoff_costs(truth, replicated, cfg)) / D
    card = cfg.c ** cfg.p * abs(N - m) / D
    d_loc = loc ** (1.0 / cfg.p)
    d_card = card ** (1.0 / cfg.p)
    ospa = min((loc + card) ** (1.0 / cfg.p), cfg.c)
    return OspaFrame(frame=frame, d_loc=d_loc, d_card=d_card, ospa=ospa, n=n, m=m, q=q)


def ospa_standard(truth, tracks, cfg: OspaConfig = OspaConfig(), frame: int = 0) -> OspaFrame:
    """Textbook OSPA, symmetric in its arguments."""
    X, Y = _points(truth), _points(tracks)
    m, n = len(X), len(Y)
    if m == 0 and n == 0:
        return OspaFrame(frame=frame, d_loc=0.0, d_card=0.0, ospa=0.0, n=n, m=m, q=0)
    if m == 0 or n == 0:
        return OspaFrame(frame=frame, d_loc=0.0, d_card=cfg.c, ospa=cfg.c, n=n, m=m, q=0)
    big = max(m, n)
    loc = optimal_cost(cutoff_costs(X, Y, cfg)) / big
    card = cfg.c ** cfg.p * abs(m - n) / big
    return OspaFrame(frame=frame, d_loc=loc ** (1.0 / cfg.p), d_card=card ** (1.0 / cfg.p),
                     ospa=(loc + card) ** (1.0 / cfg.p), n=n, m=m, q=0)


def match_tracks_to_groups(tracks, truth: TruthFrame, radius: float = MATCH_RADIUS_M) -> dict[int, Optional[int]]:
    """
    True count for each track: the size of the nearest ground-truth group
    within `radius`, None when no group is that close.
    """
    centroids = truth.group_centroids
    counts = truth.group_counts
    out: dict[int, Optional[int]] = {}
    for t in tracks:
        if len(centroids) == 0:
            out[t.id] = None
            continue
        d = np.linalg.norm(centroids - np.array([t.x, t.y]), axis=1)
        g = int(np.argmin(d))
        out[t.id] = int(counts[g]) if d[g] <= radius else None
    return out


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class ScenarioReport:
    summary: ScenarioSummary
    frames: list[OspaFrame] = field(default_factory=list)
    confusion: np.ndarray = field(default_factory=lambda: np.zeros((3, 3), dtype=int))

    def ospa_table(self) -> pd.DataFrame:
        columns = OSPA_COLUMNS + (["ospa_standard"] if self.summary.mean_ospa_standard is not None else [])
        return pd.DataFrame([f.to_row() for f in self.frames], columns=columns)


@dataclass(frozen=True)
class _TrackPoint:
    id: int
    x: float
    y: float


def _by_frame(records: Iterable[dict], key: str = "frame") -> dict[int, list[dict]]:
    grouped: dict[int, list[dict]] = {}
    for r in records:
        grouped.setdefault(int(r[key]), []).append(r)
    return grouped


def smooth_prediction_log(predictions: list[dict], window: int = 25) -> list[dict]:
    """Fill label_am with the centred median of each track's label_bm sequence."""
    by_track: dict[int, list[dict]] = {}
    for p in predictions:
        by_track.setdefault(int(p["track_id"]), []).append(p)
    out = []
    for tid in sorted(by_track):
        seq = sorted(by_track[tid], key=lambda p: p["frame"])
        am = median_smooth([p["label_bm"] for p in seq], window)
        out.extend({**p, "label_am": int(a)} for p, a in zip(seq, am))
    return sorted(out, key=lambda p: (p["frame"], p["track_id"]))


def scenario_report(scenario: int, truth: Sequence[TruthFrame], track_log: Iterable[dict],
                    prediction_log: Iterable[dict], cfg: OspaConfig = OspaConfig(),
                    use_counts: bool = True) -> ScenarioReport:
    """
    Frame-aligned OSPA series and counting accuracy for one scenario run.

    OSPA uses confirmed tracks, each weighted by its smoothed predicted count
    when `use_counts` is set and a prediction exists. Accuracy is scored on
    every prediction whose track lies near a truth group.
    """
    truth_by_frame = {t.frame_index: t for t in truth}
    tracks = _by_frame(track_log)
    preds = _by_frame(prediction_log)
    stray = (set(tracks) | set(preds)) - set(truth_by_frame)
    if stray:
        raise DataError(f"scenario {scenario}: frames {sorted(stray)[:5]} have no ground truth")

    frames, y_true, y_bm, y_am = [], [], [], []
    for k in sorted(truth_by_frame):
        gt = truth_by_frame[k]
        confirmed = [_TrackPoint(int(r["id"]), float(r["x"]), float(r["y"]))
                     for r in tracks.get(k, []) if r["status"] == "confirmed"]
        frame_preds = {int(p["track_id"]): p for p in preds.get(k, [])}
        counts = [int(frame_preds[t.id]["label_am"]) if use_counts and t.id in frame_preds else 1
                  for t in confirmed]
        positions = [(t.x, t.y) for t in confirmed]
        frame = ospa_frame(gt.positions, positions, counts, cfg=cfg, frame=k)
        if cfg.standard:
            frame = frame.model_copy(update={"ospa_standard": ospa_standard(gt.positions, positions, cfg).ospa})
        frames.append(frame)

        present = [_TrackPoint(int(r["id"]), float(r["x"]), float(r["y"])) for r in tracks.get(k, [])]
        truth_counts = match_tracks_to_groups(present, gt)
        for tid, p in frame_preds.items():
            if tid not in truth_counts:
                raise DataError(f"frame {k}: prediction for track {tid} without a track record")
            label = truth_counts[tid]
            if label is None:
                continue
            y_true.append(label)
            y_bm.append(int(p["label_bm"]))
            y_am.append(int(p["label_am"]))

    if y_true:
        ev = score_predictions(y_true, y_bm, y_am)
        acc_bm, acc_am, confusion = ev.accuracy_bm, ev.accuracy_am, ev.confusion
    else:
        acc_bm = acc_am = float("nan")
        confusion = np.zeros((3, 3), dtype=int)
    ospa = np.array([f.ospa for f in frames]) if frames else np.array([np.nan])
    summary = ScenarioSummary(
        scenario=scenario,
        acc_bm=acc_bm,
        acc_am=acc_am,
        mean_ospa=float(np.mean(ospa)),
        mean_dloc=float(np.mean([f.d_loc for f in frames])) if frames else float("nan"),
        mean_dcard=float(np.mean([f.d_card for f in frames])) if frames else float("nan"),
        mean_ospa_standard=(float(np.mean([f.ospa_standard for f in frames]))
                            if cfg.standard and frames else None),
    )
    logger.info("scenario %d: acc %.2f/%.2f, mean OSPA %.3f over %d frames",
                scenario, acc_bm, acc_am, summary.mean_ospa, len(frames))
    return ScenarioReport(summary, frames, confusion)


def summary_table(reports: Sequence[ScenarioReport]) -> pd.DataFrame:
    """Per-scenario rows plus an Average row."""
    columns = SUMMARY_COLUMNS + (["mean_ospa_standard"] if any(
        r.summary.mean_ospa_standard is not None for r in reports) else [])
    table = pd.DataFrame([r.summary.to_row() for r in reports], columns=columns)
    if len(table):
        avg = table[columns[1:]].mean(numeric_only=True).to_dict()
        table = pd.concat([table, pd.DataFrame([{"scenario": "Average", **avg}])], ignore_index=True)
    return table


def write_csv(table: pd.DataFrame, path) -> None:
    table.to_csv(path, index=False, float_format="%.6f", lineterminator="\n")
