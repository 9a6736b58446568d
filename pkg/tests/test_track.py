from itertools import permutations

import numpy as np
import pytest
from scipy import stats

from models.tracking import TrackerConfig
from utils.track import (
    GroupSpawnInhibition,
    Measurement,
    NoFeedback,
    Tracker,
    associate_gnn,
    condition_covariance,
    fed_back_count,
    initiate,
    innovation,
    measure,
    predict,
    track_errors,
    update,
)

DT = 0.1


def brute_force(cost, gate):
    n, m = cost.shape
    best = (-1, np.inf)
    for perm in permutations(range(max(n, m)), min(n, m)):
        pairs = [(i, j) for i, j in zip(range(n), perm)] if n <= m else [(i, j) for j, i in zip(range(m), perm)]
        ok = [(i, j) for i, j in pairs if cost[i, j] <= gate]
        total = sum(cost[i, j] for i, j in ok)
        if len(ok) > best[0] or (len(ok) == best[0] and total < best[1] - 1e-12):
            best = (len(ok), total)
    return best


def test_gnn_matches_exhaustive_search():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n, m = int(rng.integers(1, 7)), int(rng.integers(1, 7))
        cost = rng.uniform(0, 20, size=(n, m))
        a = associate_gnn(cost, gate=9.21)
        count, total = brute_force(cost, 9.21)
        assert len(a.pairs) == count
        assert sum(cost[i, j] for i, j in a.pairs) == pytest.approx(total, abs=1e-9)


def test_gnn_prefers_more_gated_pairs():
    cost = np.array([[1.0, 2.0], [2.0, 100.0]])
    # (0,0) alone is cheaper but leaves track 1 unmatched; two gated pairs win
    a = associate_gnn(cost, gate=50.0)
    assert a.pairs == [(0, 1), (1, 0)]
    assert a.unmatched_tracks == [] and a.unmatched_clusters == []
    assert sum(cost[i, j] for i, j in a.pairs) == 4.0
    # when only the cheap pair passes the gate the lone match is kept
    b = associate_gnn(cost, gate=1.5)
    assert b.pairs == [(0, 0)]
    assert b.unmatched_tracks == [1] and b.unmatched_clusters == [1]


def test_gnn_handles_empty_sides():
    a = associate_gnn(np.zeros((0, 3)))
    assert a.pairs == [] and a.unmatched_clusters == [0, 1, 2]
    b = associate_gnn(np.zeros((2, 0)))
    assert b.unmatched_tracks == [0, 1]


def test_gnn_is_one_to_one():
    a = associate_gnn(np.ones((4, 3)), gate=9.21)
    tracks = [i for i, _ in a.pairs]
    clusters = [j for _, j in a.pairs]
    assert len(set(tracks)) == len(tracks) == 3
    assert len(set(clusters)) == len(clusters)


def test_predict_rejects_non_positive_dt():
    cfg = TrackerConfig()
    track = initiate(1, Measurement.from_xy(0.0, 3.0, cfg), cfg)
    with pytest.raises(ValueError):
        predict(track, 0.0)


def test_covariance_stays_symmetric_positive_definite():
    cfg = TrackerConfig()
    track = initiate(1, Measurement.from_xy(0.5, 3.0, cfg), cfg)
    for k in range(30):
        track = predict(track, DT, cfg)
        track = update(track, Measurement.from_xy(0.5, 3.0 + 0.1 * k, cfg), cfg)
        assert np.allclose(track.P, track.P.T)
        assert np.linalg.eigvalsh(track.P).min() > 0


def test_condition_covariance_repairs_indefinite_matrix():
    P = np.diag([1.0, -1e-3, 1.0, 1.0])
    fixed, flagged = condition_covariance(P, 1e-9)
    assert flagged
    assert np.linalg.eigvalsh(fixed).min() >= 1e-9 - 1e-15


def test_noise_free_constant_velocity_target_converges():
    tiny = TrackerConfig(sigma_range_m=1e-4, sigma_azimuth_deg=1e-3, sigma_accel=0.01)
    x0 = np.array([-1.0, 3.0, 0.4, 0.3])
    track = initiate(1, Measurement.from_xy(x0[0], x0[1], tiny), tiny)
    for k in range(1, 51):
        truth = x0[:2] + k * DT * x0[2:]
        track = predict(track, DT, tiny)
        track = update(track, Measurement.from_xy(*truth, tiny), tiny)
    assert np.linalg.norm(track.x[:2] - truth) < 1e-3


def test_nis_is_chi_square_consistent():
    """500 matched-model frames: average NIS inside the chi-square band."""
    cfg = TrackerConfig(sigma_accel=0.5, initial_velocity_std=0.3)
    rng = np.random.default_rng(7)
    R = np.diag([cfg.sigma_range_m ** 2, np.radians(cfg.sigma_azimuth_deg) ** 2])
    nis = []
    for _ in range(10):
        x = np.r_[0.0, 5.0, rng.normal(0.0, cfg.initial_velocity_std, size=2)]
        z0 = measure(x) + rng.multivariate_normal(np.zeros(2), R)
        track = initiate(1, Measurement(z0[0], np.degrees(z0[1]), R), cfg)
        for _ in range(50):
            q = rng.normal(0.0, cfg.sigma_accel, size=2)
            x = np.r_[x[:2] + DT * x[2:] + 0.5 * DT ** 2 * q, x[2:] + DT * q]
            z = measure(x) + rng.multivariate_normal(np.zeros(2), R)
            track = predict(track, DT, cfg)
            m = Measurement(z[0], np.degrees(z[1]), R)
            nu, S, _ = innovation(track, m)
            nis.append(float(nu @ np.linalg.solve(S, nu)))
            track = update(track, m, cfg)
    lo, hi = stats.chi2.ppf([0.001, 0.999], df=2 * len(nis)) / len(nis)
    assert lo <= np.mean(nis) <= hi


def _cfg(**kw):
    return TrackerConfig(feedback="none", **kw)


def test_track_confirms_on_third_hit():
    cfg = _cfg()
    tracker = Tracker(cfg)
    statuses = []
    for k in range(4):
        snap = tracker.step([Measurement.from_xy(0.0, 3.0 + 0.05 * k, cfg)], DT, k)
        statuses.append(snap.tracks[0].status)
    assert statuses == ["tentative", "tentative", "confirmed", "confirmed"]


def test_tentative_track_dies_when_window_fills_without_confirmation():
    cfg = _cfg()
    tracker = Tracker(cfg)
    tracker.step([Measurement.from_xy(0.0, 3.0, cfg)], DT, 0)
    statuses = [tracker.step([], DT, k).tracks[0].status for k in range(1, 5)]
    assert statuses == ["tentative", "tentative", "tentative", "deleted"]
    assert tracker.step([], DT, 5).tracks == ()


def test_confirmed_track_deleted_after_five_misses():
    cfg = _cfg()
    tracker = Tracker(cfg)
    for k in range(3):
        tracker.step([Measurement.from_xy(0.0, 3.0, cfg)], DT, k)
    statuses = [tracker.step([], DT, k).tracks[0].status for k in range(3, 8)]
    assert statuses == ["confirmed"] * 4 + ["deleted"]


def test_track_ids_are_never_reused():
    cfg = _cfg()
    tracker = Tracker(cfg)
    seen = set()
    for k in range(40):
        zs = [Measurement.from_xy(0.0, 3.0, cfg)] if k % 10 < 3 else []
        for t in tracker.step(zs, DT, k).tracks:
            seen.add(t.id)
    assert seen == {1, 2, 3, 4}


def test_feedback_count_is_trailing_median():
    assert fed_back_count([]) == 1
    assert fed_back_count([2, 2, 1, 3, 2]) == 2
    assert fed_back_count([1, 2]) == 2


def _split_cluster_run(policy):
    cfg = TrackerConfig(feedback="none")
    tracker = Tracker(cfg, policy)
    for k in range(5):
        tracker.step([Measurement.from_xy(0.0, 3.0, cfg)], DT, k)
    group_id = tracker.step([Measurement.from_xy(0.0, 3.0, cfg)], DT, 5).confirmed[0].id
    for _ in range(5):
        tracker.feed_count(group_id, 2)
    confirmed_extra = set()
    for k in range(6, 12):
        snap = tracker.step([Measurement.from_xy(-0.4, 3.0, cfg), Measurement.from_xy(0.4, 3.0, cfg)], DT, k)
        confirmed_extra |= {t.id for t in snap.confirmed if t.id != group_id}
    return confirmed_extra


def test_group_spawn_inhibition_prevents_split_tracks():
    assert _split_cluster_run(NoFeedback())
    assert not _split_cluster_run(GroupSpawnInhibition(gate=9.21, extent_m=0.8))


def test_track_errors_summary():
    cfg = _cfg()
    tracker = Tracker(cfg)
    snaps, truth = [], []
    for k in range(10):
        snaps.append(tracker.step([Measurement.from_xy(0.0, 3.0, cfg)], DT, k))
        truth.append(np.array([[0.0, 3.0]]))
    errs = track_errors(truth, snaps)
    assert errs["frames"] == 8
    assert errs["rmse"] < 1e-6
