"""
People-count classifiers trained on track feature vectors.

KNN, Gaussian naive Bayes and random forest come from scikit-learn. The RBF
SVM is trained here by sequential minimal optimisation (maximal violating
pair selection) and extended to several classes by one-vs-one voting.
"""
import logging
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Optional, Sequence

import joblib
import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.ensemble import RandomForestClassifier
from sklearn.metrics import confusion_matrix
from sklearn.metrics.pairwise import pairwise_kernels
from sklearn.model_selection import train_test_split
from sklearn.naive_bayes import GaussianNB
from sklearn.neighbors import KNeighborsClassifier
from sklearn.pipeline import Pipeline
from sklearn.preprocessing import StandardScaler

from models.classifier import ClassifierParams, FeatureSet, Method
from utils.errors import ConfigError, DataError
from utils.features import SPATIAL_NAMES, STAT_NAMES, cvd_feature_names

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
COUNT_LABELS = (1, 2, 3)


# ---------------------------------------------------------------------------
# SVM
# ---------------------------------------------------------------------------

class BinarySMO(BaseEstimator, ClassifierMixin):
    """
    Soft-margin kernel SVM for labels in {-1, +1}.

    Solves max_a sum(a) - 1/2 sum_ij a_i a_j y_i y_j K_ij subject to
    0 <= a_i <= C and sum_i a_i y_i = 0. Each iteration moves the maximal
    violating pair by the exact line-search step clipped to the box, so the
    dual objective never decreases. Training stops when the KKT gap m - M
    drops below `tol`.
    """

    def __init__(self, C: float = 1.0, gamma: float = 1.0 / 4.5 ** 2, tol: float = 1e-3,
                 max_iter: int = 100_000):
        self.C = C
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter

    def _kernel(self, A, B):
        return pairwise_kernels(A, B, metric="rbf", gamma=self.gamma)

    def _violating_pair(self, alpha, y, G):
        minus_yg = -y * G
        up = ((y > 0) & (alpha < self.C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < self.C)) | ((y > 0) & (alpha > 0))
        i = int(np.flatnonzero(up)[np.argmax(minus_yg[up])])
        j = int(np.flatnonzero(low)[np.argmin(minus_yg[low])])
        return i, j, float(minus_yg[i]), float(minus_yg[j])

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if not set(np.unique(y)) <= {-1.0, 1.0} or len(np.unique(y)) < 2:
            raise DataError("BinarySMO needs both labels -1 and +1")
        n = len(y)
        K = self._kernel(X, X)
        Q = (y[:, None] * y[None, :]) * K
        alpha = np.zeros(n)
        G = -np.ones(n)  # gradient of 1/2 a'Qa - e'a
        self.objective_history_ = [0.0]
        self.n_iter_ = 0
        converged = False
        for it in range(self.max_iter):
            i, j, m, M = self._violating_pair(alpha, y, G)
            if m - M < self.tol:
                converged = True
                break
            a = K[i, i] + K[j, j] - 2.0 * K[i, j]
            b = m - M
            t = b / max(a, 1e-12)
            t = min(t, self.C - alpha[i] if y[i] > 0 else alpha[i],
                    alpha[j] if y[j] > 0 else self.C - alpha[j])
            alpha[i] += t * y[i]
            alpha[j] -= t * y[j]
            G += t * (y[i] * Q[:, i] - y[j] * Q[:, j])
            self.objective_history_.append(float(-(0.5 * alpha @ (G - 1.0))))
            self.n_iter_ = it + 1
        if not converged:
            logger.warning("SMO stopped at max_iter=%d before reaching tol=%g", self.max_iter, self.tol)
        i, j, m, M = self._violating_pair(alpha, y, G)
        self.kkt_gap_ = m - M
        free = (alpha > 1e-12) & (alpha < self.C - 1e-12)
        self.intercept_ = float(np.mean(-y[free] * G[free])) if free.any() else 0.5 * (m + M)
        support = alpha > 1e-12
        self.alpha_ = alpha[support]
        self.support_y_ = y[support]
        self.support_vectors_ = X[support]
        self.dual_coef_ = self.alpha_ * self.support_y_
        self.classes_ = np.array([-1.0, 1.0])
        return self

    def dual_objective(self) -> float:
        return self.objective_history_[-1]

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if len(self.support_vectors_) == 0:
            return np.full(len(X), self.intercept_)
        return self._kernel(X, self.support_vectors_) @ self.dual_coef_ + self.intercept_

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision_function(X) >= 0, 1.0, -1.0)


class SVMClassifier(BaseEstimator, ClassifierMixin):
    """One-vs-one multiclass wrapper around BinarySMO; scores are vote fractions."""

    def __init__(self, C: float = 1.0, kernel_scale: float = 4.5, tol: float = 1e-3,
                 max_iter: int = 100_000):
        self.C = C
        self.kernel_scale = kernel_scale
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        self.classes_ = np.unique(y)
        self.machines_ = {}
        for a, b in combinations(range(len(self.classes_)), 2):
            rows = (y == self.classes_[a]) | (y == self.classes_[b])
            target = np.where(y[rows] == self.classes_[a], 1.0, -1.0)
            smo = BinarySMO(self.C, 1.0 / self.kernel_scale ** 2, self.tol, self.max_iter)
            self.machines_[(a, b)] = smo.fit(X[rows], target)
        return self

    def _votes(self, X):
        X = np.asarray(X, dtype=float)
        votes = np.zeros((len(X), len(self.classes_)))
        confidence = np.zeros_like(votes)
        for (a, b), smo in self.machines_.items():
            d = smo.decision_function(X)
            win_a = d >= 0
            votes[:, a] += win_a
            votes[:, b] += ~win_a
            confidence[:, a] += d
            confidence[:, b] -= d
        return votes, confidence

    def predict_proba(self, X) -> np.ndarray:
        votes, _ = self._votes(X)
        return votes / max(len(self.machines_), 1)

    def predict(self, X) -> np.ndarray:
        votes, confidence = self._votes(X)
        # most votes, then largest summed decision value, then lowest class
        idx = np.array([
            max(range(len(self.classes_)), key=lambda c: (votes[r, c], confidence[r, c], -c))
            for r in range(len(votes))
        ], dtype=int)
        return self.classes_[idx]


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------

class PcaTransform(BaseEstimator, TransformerMixin):
    """Smallest number of principal components whose explained variance reaches `retained`."""

    def __init__(self, retained: float = 0.8):
        self.retained = retained

    def fit(self, X, y=None):
        if not 0 < self.retained <= 1:
            raise ConfigError("retained variance must be within (0, 1]")
        X = np.asarray(X, dtype=float)
        self.mean_ = X.mean(axis=0)
        centered = X - self.mean_
        _, s, vt = np.linalg.svd(centered, full_matrices=False)
        variance = s ** 2
        total = variance.sum()
        if total <= 1e-12 * max(1.0, float(np.abs(X).max(initial=0.0))) ** 2:
            raise DataError("PCA on a zero-variance dataset")
        ratio = np.cumsum(variance) / total
        k = min(int(np.searchsorted(ratio, self.retained - 1e-12)) + 1, len(s))
        signs = np.sign(vt[np.arange(len(vt)), np.argmax(np.abs(vt), axis=1)])
        signs[signs == 0] = 1.0
        self.components_ = (vt * signs[:, None])[:k]
        self.explained_variance_ratio_ = variance[:k] / total
        self.retained_variance_ = float(ratio[k - 1])
        self.n_components_ = k
        return self

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean_) @ self.components_.T

    def inverse_transform(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) @ self.components_ + self.mean_


def pca_fit_transform(X, retained: float = 0.8) -> tuple[PcaTransform, np.ndarray]:
    pca = PcaTransform(retained).fit(X)
    return pca, pca.transform(X)


# ---------------------------------------------------------------------------
# feature subsets
# ---------------------------------------------------------------------------

def _level(name: str) -> list[str]:
    return [f"{name}_{s}" for s in STAT_NAMES]


def feature_columns(feature_set: FeatureSet, levels: int = 4) -> tuple[list[str], bool]:
    """Columns used by a feature set and whether it applies PCA (80 % retained)."""
    spatial = list(SPATIAL_NAMES)
    level_names = [f"level{j}" for j in range(1, levels + 1)] + ["approx"]
    frequency = [c for lvl in level_names for c in _level(lvl)]
    cvd = cvd_feature_names()
    table = {
        "both": (spatial + frequency, False),
        "spatial": (spatial, False),
        "frequency": (frequency, False),
        "pca80": (spatial + frequency, True),
        "cvd_both": (spatial + cvd, False),
        "cvd_spatial": (spatial, False),
        "cvd_frequency": (cvd, False),
        "cvd_pca80": (spatial + cvd, True),
    }
    if feature_set in table:
        return table[feature_set]
    if feature_set.startswith("spatial+"):
        return spatial + _level(feature_set.split("+", 1)[1]), False
    if feature_set in level_names:
        return _level(feature_set), False
    raise ConfigError(f"unknown feature set {feature_set!r}")


def needs_full_window(columns: Sequence[str]) -> bool:
    return any(c not in SPATIAL_NAMES for c in columns)


# ---------------------------------------------------------------------------
# training / prediction
# ---------------------------------------------------------------------------

def make_estimator(method: Method, params: ClassifierParams = ClassifierParams()):
    if method == "knn":
        return KNeighborsClassifier(n_neighbors=params.knn_k, weights=params.knn_weights)
    if method == "naive_bayes":
        return GaussianNB()
    if method == "svm":
        return SVMClassifier(C=params.svm_c, kernel_scale=params.svm_kernel_scale,
                             tol=params.svm_tol, max_iter=params.svm_max_iter)
    if method == "random_forest":
        return RandomForestClassifier(n_estimators=params.rf_trees, criterion=params.rf_criterion,
                                      max_features="sqrt", random_state=params.seed)
    raise ConfigError(f"unknown method {method!r}")


@dataclass
class TrainedModel:
    method: str
    feature_set: str
    columns: list[str]
    pipeline: Pipeline
    classes: list[int]
    params: ClassifierParams = field(default_factory=ClassifierParams)
    format_version: int = MODEL_FORMAT_VERSION

    @property
    def full_window(self) -> bool:
        return needs_full_window(self.columns)

    def matrix(self, rows: pd.DataFrame) -> np.ndarray:
        missing = [c for c in self.columns if c not in rows.columns]
        if missing:
            raise DataError(f"feature table lacks columns {missing[:5]}")
        return rows[self.columns].to_numpy(dtype=float)

    def predict_matrix(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        labels = self.pipeline.predict(X)
        scores = self.pipeline.predict_proba(X)
        return labels.astype(int), scores

    def predict(self, fv) -> tuple[int, dict[int, float]]:
        """Label and per-class scores for one FeatureVector."""
        if self.full_window and fv.mode != "full":
            raise DataError(f"{self.method}/{self.feature_set} needs a full-window feature vector, "
                            f"got {fv.mode}")
        row = fv.to_row()
        X = np.array([[row[c] for c in self.columns]], dtype=float)
        labels, scores = self.predict_matrix(X)
        return int(labels[0]), {int(c): float(s) for c, s in zip(self.classes, scores[0])}


def check_training_rows(X: np.ndarray, y: np.ndarray):
    if len(X) == 0:
        raise DataError("empty training set")
    if len(np.unique(y)) < 2:
        raise DataError(f"training needs at least 2 classes, got {sorted(set(y.tolist()))}")
    bad = np.flatnonzero(~np.isfinite(X).all(axis=1))
    if len(bad):
        raise DataError(f"{len(bad)} rows hold non-finite features, first rows: {bad[:10].tolist()}")


def train(dataset: pd.DataFrame, method: Method = "svm", feature_set: FeatureSet = "both",
          params: ClassifierParams = ClassifierParams(), levels: int = 4) -> TrainedModel:
    columns, use_pca = feature_columns(feature_set, levels)
    rows = dataset
    if needs_full_window(columns) and "mode" in dataset.columns:
        rows = dataset[dataset["mode"] == "full"]
    X = rows[columns].to_numpy(dtype=float) if len(rows) else np.zeros((0, len(columns)))
    y = rows["label"].to_numpy(dtype=int) if len(rows) else np.zeros(0, dtype=int)
    check_training_rows(X, y)
    steps = [("scale", StandardScaler())]
    retained = params.pca_retained if params.pca_retained is not None else (0.8 if use_pca else None)
    if retained is not None:
        steps.append(("pca", PcaTransform(retained)))
    steps.append(("clf", make_estimator(method, params)))
    pipeline = Pipeline(steps).fit(X, y)
    logger.info("trained %s on %s: %d rows, %d features", method, feature_set, len(X), len(columns))
    return TrainedModel(method, feature_set, columns, pipeline,
                        [int(c) for c in pipeline.classes_], params)


@dataclass
class SeamlessClassifier:
    """Spatial-only model for the filling window, full-feature model afterwards."""

    spatial: TrainedModel
    full: TrainedModel

    def predict(self, fv) -> tuple[int, dict[int, float]]:
        model = self.full if fv.mode == "full" else self.spatial
        return model.predict(fv)


def save_model(model, path: str | Path):
    joblib.dump({"format_version": MODEL_FORMAT_VERSION, "model": model}, path)


def load_model(path: str | Path):
    try:
        payload = joblib.load(path)
    except FileNotFoundError as e:
        raise DataError(f"model file not found: {path}") from e
    if not isinstance(payload, dict) or payload.get("format_version") != MODEL_FORMAT_VERSION:
        raise DataError(f"{path}: unsupported model format")
    return payload["model"]


# ---------------------------------------------------------------------------
# smoothing and evaluation
# ---------------------------------------------------------------------------

def median_smooth(labels: Sequence[int], window: int = 25) -> np.ndarray:
    """
    Centred running median; near the ends the window is truncated to the
    available samples (lower middle element for even lengths).
    """
    if window < 1 or window % 2 == 0:
        raise ConfigError("median window must be a positive odd number")
    x = np.asarray(labels)
    half = window // 2
    out = np.empty_like(x)
    for i in range(len(x)):
        seg = np.sort(x[max(0, i - half):i + half + 1])
        out[i] = seg[(len(seg) - 1) // 2]
    return out


def split_dataset(dataset: pd.DataFrame, test_fraction: float = 0.3,
                  seed: int = 7) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Stratified split by label."""
    if not 0 < test_fraction < 1:
        raise ConfigError("test_fraction must be within (0, 1)")
    train_rows, test_rows = train_test_split(dataset, test_size=test_fraction, random_state=seed,
                                             stratify=dataset["label"])
    return train_rows.sort_index(), test_rows.sort_index()


def smooth_per_track(frame: pd.DataFrame, column: str = "label_bm", window: int = 25) -> pd.Series:
    """Median-smooth a label column along time within every (scenario, track) sequence."""
    keys = [k for k in ("scenario", "track_id") if k in frame.columns]
    ordered = frame.sort_values(keys + ["frame"]) if keys else frame.sort_values("frame")
    smoothed = pd.Series(0, index=ordered.index, dtype=int)
    groups = ordered.groupby(keys, sort=True) if keys else [(None, ordered)]
    for _, group in groups:
        smoothed.loc[group.index] = median_smooth(group[column].to_numpy(dtype=int), window)
    return smoothed.loc[frame.index].astype(int)


@dataclass(frozen=True)
class Evaluation:
    accuracy_bm: float
    accuracy_am: float
    confusion: np.ndarray
    labels: tuple[int, ...] = COUNT_LABELS
    n: int = 0

    def as_dict(self) -> dict:
        return {"acc_bm": self.accuracy_bm, "acc_am": self.accuracy_am, "n": self.n,
                "confusion": self.confusion.tolist(), "labels": list(self.labels)}


def score_predictions(truth: Sequence[int], label_bm: Sequence[int], label_am: Sequence[int],
                      labels: Sequence[int] = COUNT_LABELS) -> Evaluation:
    truth = np.asarray(truth, dtype=int)
    if len(truth) == 0:
        raise DataError("nothing to evaluate")
    bm = np.asarray(label_bm, dtype=int)
    am = np.asarray(label_am, dtype=int)
    return Evaluation(
        accuracy_bm=100.0 * float(np.mean(bm == truth)),
        accuracy_am=100.0 * float(np.mean(am == truth)),
        confusion=confusion_matrix(truth, am, labels=list(labels)),
        labels=tuple(labels),
        n=len(truth),
    )


def evaluate(model: TrainedModel, dataset: pd.DataFrame, window: Optional[int] = None) -> Evaluation:
    """Frame-level accuracy before and after the median label filter."""
    window = window or model.params.median_window
    rows = dataset
    if model.full_window and "mode" in dataset.columns:
        rows = dataset[dataset["mode"] == "full"]
    if len(rows) == 0:
        raise DataError("test split is empty")
    labels, _ = model.predict_matrix(model.matrix(rows))
    scored = rows.assign(label_bm=labels)
    am = smooth_per_track(scored, "label_bm", window)
    return score_predictions(rows["label"], labels, am)
