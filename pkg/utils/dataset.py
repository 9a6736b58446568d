"""Labeled feature tables: one row per (scenario, track, frame) feature vector."""
import logging
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd

from utils.errors import DataError
from utils.features import SPATIAL_NAMES, cvd_feature_names, feature_names

logger = logging.getLogger(__name__)

META_COLUMNS = ["scenario", "seed", "track_id", "frame", "mode", "label"]


def table_columns(levels: int = 4, with_cvd: bool = False) -> list[str]:
    return META_COLUMNS + feature_names(levels) + (cvd_feature_names() if with_cvd else [])


def feature_table(rows: Iterable[dict], levels: int = 4, with_cvd: bool = False) -> pd.DataFrame:
    """Rows from FeatureVector.to_row(label) plus scenario/seed, in a fixed column order."""
    df = pd.DataFrame(list(rows))
    columns = table_columns(levels, with_cvd)
    for col in columns:
        if col not in df.columns:
            df[col] = np.nan
    if len(df):
        df = df.sort_values(["scenario", "seed", "track_id", "frame"], kind="stable")
    return df[columns].reset_index(drop=True)


def write_features(df: pd.DataFrame, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
    logger.info("wrote %d feature rows to %s", len(df), path)
    return path


def read_features(path: str | Path) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise DataError(f"feature file not found: {path}")
    try:
        df = pd.read_csv(path)
    except pd.errors.EmptyDataError as e:
        raise DataError(f"{path}: empty feature file") from e
    if df.empty:
        raise DataError(f"{path}: empty feature file")
    missing = [c for c in ("label", "mode", *SPATIAL_NAMES) if c not in df.columns]
    if missing:
        raise DataError(f"{path}: missing columns {missing}")
    return df


def combine(paths: Sequence[str | Path]) -> pd.DataFrame:
    if not paths:
        raise DataError("no feature files given")
    return pd.concat([read_features(p) for p in paths], ignore_index=True)


def drop_unlabeled(df: pd.DataFrame) -> pd.DataFrame:
    kept = df[df["label"].notna()].copy()
    if len(kept) < len(df):
        logger.warning("dropped %d rows without a ground-truth label", len(df) - len(kept))
    kept["label"] = kept["label"].astype(int)
    return kept


def feature_histograms(df: pd.DataFrame, columns: Optional[Sequence[str]] = None,
                       bins: int = 30) -> pd.DataFrame:
    """
    Per-label histograms over shared bin edges, long format
    (feature, label, bin_left, bin_right, count), for distribution plots.
    """
    columns = list(columns) if columns is not None else list(SPATIAL_NAMES)
    out = []
    for col in columns:
        values = df[col].to_numpy(dtype=float)
        finite = values[np.isfinite(values)]
        if len(finite) == 0:
            continue
        edges = np.histogram_bin_edges(finite, bins=bins)
        for label, group in df.groupby("label", sort=True):
            v = group[col].to_numpy(dtype=float)
            counts, _ = np.histogram(v[np.isfinite(v)], bins=edges)
            out.extend({"feature": col, "label": int(label), "bin_left": float(lo),
                        "bin_right": float(hi), "count": int(c)}
                       for lo, hi, c in zip(edges[:-1], edges[1:], counts))
    return pd.DataFrame(out, columns=["feature", "label", "bin_left", "bin_right", "count"])
