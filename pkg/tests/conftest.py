import numpy as np
import pandas as pd
import pytest

from models.radar import RadarParams
from models.run_config import RunConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def params():
    return RadarParams()


@pytest.fixture
def quick_config():
    """Short signal-level runs for command and route tests."""
    return RunConfig(scenarios=(1,), duration_s=4.0, train_seeds=(11,), seed=5)


@pytest.fixture
def point_config():
    return RunConfig(scenarios=(1, 3), duration_s=6.0, fidelity="point_cloud", classifier=False,
                     seed=5)


@pytest.fixture
def labeled_features():
    """
    Synthetic feature table with three well separated counts; every fifth row
    is a spatial-only vector (frequency columns empty).
    """
    from utils.dataset import table_columns
    from utils.features import SPATIAL_NAMES

    gen = np.random.default_rng(99)
    columns = table_columns()
    rows = []
    for label in (1, 2, 3):
        for k in range(60):
            row = {"scenario": label, "seed": 11, "track_id": label, "frame": k, "label": label,
                   "mode": "spatial_only" if k % 5 == 0 else "full"}
            for c in columns[6:]:
                if row["mode"] == "spatial_only" and c not in SPATIAL_NAMES:
                    row[c] = np.nan
                else:
                    row[c] = 3.0 * label + gen.normal(0.0, 0.3)
            rows.append(row)
    return pd.DataFrame(rows, columns=columns)
