"""
Multi-target tracker: constant-velocity EKF on (range, azimuth) measurements,
global-nearest-neighbour association, M-of-N lifecycle, and a pluggable
count-feedback policy that decides whether an unmatched cluster may spawn a
new track.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Protocol, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from models.tracking import TrackerConfig, TrackRecord, TrackStatus
from utils.cluster import Cluster

logger = logging.getLogger(__name__)

I4 = np.eye(4)


@dataclass(frozen=True)
class Measurement:
    range_m: float
    azimuth_deg: float
    R: np.ndarray
    doppler_mps: Optional[float] = None

    @property
    def z(self) -> np.ndarray:
        return np.array([self.range_m, np.radians(self.azimuth_deg)])

    @property
    def xy(self) -> np.ndarray:
        az = np.radians(self.azimuth_deg)
        return self.range_m * np.array([np.sin(az), np.cos(az)])

    @classmethod
    def from_cluster(cls, cluster: Cluster, cfg: TrackerConfig) -> "Measurement":
        return cls(cluster.mean_range, cluster.mean_azimuth_deg, measurement_cov(cfg),
                   cluster.mean_doppler)

    @classmethod
    def from_xy(cls, x: float, y: float, cfg: TrackerConfig) -> "Measurement":
        return cls(float(np.hypot(x, y)), float(np.degrees(np.arctan2(x, y))), measurement_cov(cfg))


@dataclass(frozen=True)
class TrackState:
    id: int
    x: np.ndarray  # (x, y, vx, vy)
    P: np.ndarray
    status: TrackStatus = "tentative"
    hits: int = 1
    misses: int = 0
    age: int = 1
    history: tuple[bool, ...] = (True,)  # hit/miss of the most recent frames
    count_estimate: int = 1
    labels: tuple[int, ...] = ()
    reconditioned: bool = False
    innovation: Optional[np.ndarray] = None
    S: Optional[np.ndarray] = None

    @property
    def position(self) -> np.ndarray:
        return self.x[:2]

    @property
    def confirmed(self) -> bool:
        return self.status == "confirmed"


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

def transition(dt: float) -> np.ndarray:
    F = np.eye(4)
    F[0, 2] = F[1, 3] = dt
    return F


def process_noise(dt: float, sigma_accel: float) -> np.ndarray:
    """Discrete white-noise acceleration, independent per axis."""
    q = sigma_accel ** 2
    Q = np.zeros((4, 4))
    for pos, vel in ((0, 2), (1, 3)):
        Q[pos, pos] = q * dt ** 4 / 4
        Q[pos, vel] = Q[vel, pos] = q * dt ** 3 / 2
        Q[vel, vel] = q * dt ** 2
    return Q


def measurement_cov(cfg: TrackerConfig) -> np.ndarray:
    return np.diag([cfg.sigma_range_m ** 2, np.radians(cfg.sigma_azimuth_deg) ** 2])


def measure(x: np.ndarray) -> np.ndarray:
    return np.array([np.hypot(x[0], x[1]), np.arctan2(x[0], x[1])])


def jacobian(x: np.ndarray) -> np.ndarray:
    px, py = x[0], x[1]
    r2 = max(px ** 2 + py ** 2, 1e-12)
    r = np.sqrt(r2)
    return np.array([
        [px / r, py / r, 0.0, 0.0],
        [py / r2, -px / r2, 0.0, 0.0],
    ])


def wrap_angle(a):
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


def condition_covariance(P: np.ndarray, floor: float = 1e-9) -> tuple[np.ndarray, bool]:
    """Symmetrize; if Cholesky fails or an eigenvalue is below `floor`, clip the spectrum."""
    P = 0.5 * (P + P.T)
    try:
        np.linalg.cholesky(P)
        if np.linalg.eigvalsh(P).min() >= floor:
            return P, False
    except np.linalg.LinAlgError:
        pass
    w, V = np.linalg.eigh(P)
    P = (V * np.maximum(w, floor)) @ V.T
    return 0.5 * (P + P.T), True


# ---------------------------------------------------------------------------
# EKF
# ---------------------------------------------------------------------------

def initiate(track_id: int, z: Measurement, cfg: TrackerConfig) -> TrackState:
    r, az = z.range_m, np.radians(z.azimuth_deg)
    x = np.array([r * np.sin(az), r * np.cos(az), 0.0, 0.0])
    J = np.array([[np.sin(az), r * np.cos(az)], [np.cos(az), -r * np.sin(az)]])
    P = np.zeros((4, 4))
    P[:2, :2] = J @ z.R @ J.T
    P[2, 2] = P[3, 3] = cfg.initial_velocity_std ** 2
    P, _ = condition_covariance(P, cfg.eigen_floor)
    return TrackState(id=track_id, x=x, P=P, history=(True,))


def predict(track: TrackState, dt: float, cfg: TrackerConfig = TrackerConfig()) -> TrackState:
    if dt <= 0:
        raise ValueError("dt must be positive")
    F = transition(dt)
    P, flagged = condition_covariance(F @ track.P @ F.T + process_noise(dt, cfg.sigma_accel),
                                      cfg.eigen_floor)
    if flagged:
        logger.warning("track %d: covariance re-conditioned after predict", track.id)
    return replace(track, x=F @ track.x, P=P, reconditioned=track.reconditioned or flagged,
                   innovation=None, S=None)


def innovation(track: TrackState, z: Measurement) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    H = jacobian(track.x)
    nu = z.z - measure(track.x)
    nu[1] = wrap_angle(nu[1])
    S = H @ track.P @ H.T + z.R
    return nu, 0.5 * (S + S.T), H


def _is_singular(S: np.ndarray) -> bool:
    return not np.all(np.isfinite(S)) or np.linalg.cond(S) > 1e12


def mahalanobis2(nu: np.ndarray, S: np.ndarray) -> float:
    if _is_singular(S):
        return np.inf
    return float(nu @ np.linalg.solve(S, nu))


def update(track: TrackState, z: Measurement, cfg: TrackerConfig = TrackerConfig()) -> TrackState:
    """
    Joseph-form EKF update. A singular innovation covariance skips the update
    and counts a miss instead.
    """
    nu, S, H = innovation(track, z)
    if _is_singular(S):
        logger.warning("track %d: singular innovation covariance, update skipped", track.id)
        return replace(track, misses=track.misses + 1, innovation=nu, S=S)
    K = np.linalg.solve(S, H @ track.P).T
    x = track.x + K @ nu
    A = I4 - K @ H
    P, flagged = condition_covariance(A @ track.P @ A.T + K @ z.R @ K.T, cfg.eigen_floor)
    if flagged:
        logger.warning("track %d: covariance re-conditioned after update", track.id)
    return replace(track, x=x, P=P, innovation=nu, S=S,
                   reconditioned=track.reconditioned or flagged)


# ---------------------------------------------------------------------------
# association
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Assignment:
    pairs: list[tuple[int, int]] = field(default_factory=list)  # (track index, cluster index)
    unmatched_tracks: list[int] = field(default_factory=list)
    unmatched_clusters: list[int] = field(default_factory=list)


def cost_matrix(tracks: Sequence[TrackState], measurements: Sequence[Measurement]) -> np.ndarray:
    cost = np.full((len(tracks), len(measurements)), np.inf)
    for i, track in enumerate(tracks):
        for j, z in enumerate(measurements):
            nu, S, _ = innovation(track, z)
            cost[i, j] = mahalanobis2(nu, S)
    return cost


def associate_gnn(cost: np.ndarray, gate: float = 9.21) -> Assignment:
    """
    Hard one-to-one assignment over pairs with cost <= gate.

    Among assignments with the largest number of gated pairs, the one with the
    smallest total cost is returned. Gated-out pairs get a cost larger than any
    feasible total, so the solver only uses them when nothing else is left.

    For cost [[1, 2], [2, 100]] with gate 50 this gives (0, 1), (1, 0) at total
    cost 4 rather than the cheaper lone pair (0, 0), which would leave track 1
    and cluster 1 unmatched.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        cost = cost.reshape(0, 0) if cost.size == 0 else np.atleast_2d(cost)
    n_tracks, n_clusters = cost.shape
    if n_tracks == 0 or n_clusters == 0:
        return Assignment([], list(range(n_tracks)), list(range(n_clusters)))
    allowed = np.isfinite(cost) & (cost <= gate)
    big = gate * (min(n_tracks, n_clusters) + 1) + 1.0
    rows, cols = linear_sum_assignment(np.where(allowed, cost, big))
    pairs = sorted((int(r), int(c)) for r, c in zip(rows, cols) if allowed[r, c])
    matched_t = {r for r, _ in pairs}
    matched_c = {c for _, c in pairs}
    return Assignment(
        pairs=pairs,
        unmatched_tracks=[i for i in range(n_tracks) if i not in matched_t],
        unmatched_clusters=[j for j in range(n_clusters) if j not in matched_c],
    )


# ---------------------------------------------------------------------------
# count feedback
# ---------------------------------------------------------------------------

class CountFeedbackPolicy(Protocol):
    def allows_spawn(self, z: Measurement, tracks: Sequence[TrackState]) -> bool:
        ...


class NoFeedback:
    """Every unmatched cluster spawns a tentative track."""

    def allows_spawn(self, z: Measurement, tracks: Sequence[TrackState]) -> bool:
        return True


@dataclass(frozen=True)
class GroupSpawnInhibition:
    """
    A confirmed track carrying a count k >= 2 owns every cluster inside its
    gate, with the gate widened by the lateral extent of a k-person group.
    """

    gate: float = 9.21
    extent_m: float = 0.8

    def group_gate_distance(self, z: Measurement, track: TrackState) -> float:
        nu, S, H = innovation(track, z)
        sigma = self.extent_m * (track.count_estimate - 1) / 2.0
        Hp = H[:, :2]
        return mahalanobis2(nu, S + sigma ** 2 * Hp @ Hp.T)

    def allows_spawn(self, z: Measurement, tracks: Sequence[TrackState]) -> bool:
        for track in tracks:
            if track.confirmed and track.count_estimate >= 2:
                if self.group_gate_distance(z, track) <= self.gate:
                    return False
        return True


def make_policy(cfg: TrackerConfig) -> CountFeedbackPolicy:
    if cfg.feedback == "group_spawn_inhibition":
        return GroupSpawnInhibition(cfg.gate, cfg.group_extent_m)
    return NoFeedback()


def fed_back_count(labels: Sequence[int]) -> int:
    """Trailing median (upper) of the recent classifier labels."""
    if not labels:
        return 1
    return int(np.sort(np.asarray(labels))[len(labels) // 2])


# ---------------------------------------------------------------------------
# lifecycle
# ---------------------------------------------------------------------------

def _record(track: TrackState, hit: bool, cfg: TrackerConfig) -> TrackState:
    history = (track.history + (hit,))[-cfg.confirm_window:]
    return replace(
        track,
        history=history,
        hits=track.hits + int(hit),
        misses=0 if hit else track.misses + 1,
        age=track.age + 1,
    )


def _transition(track: TrackState, cfg: TrackerConfig) -> TrackState:
    if track.status == "tentative":
        if sum(track.history) >= cfg.confirm_hits:
            return replace(track, status="confirmed")
        if len(track.history) >= cfg.confirm_window or track.misses >= cfg.max_misses:
            return replace(track, status="deleted")
    elif track.status == "confirmed" and track.misses >= cfg.max_misses:
        return replace(track, status="deleted")
    return track


def manage_lifecycle(tracks: Sequence[TrackState], assignment: Assignment,
                     measurements: Sequence[Measurement], policy: CountFeedbackPolicy,
                     cfg: TrackerConfig, next_id: int,
                     skipped: Iterable[int] = ()) -> tuple[list[TrackState], int]:
    """
    Apply hit/miss accounting, status transitions and spawning for one frame.

    `tracks` are already updated; `skipped` holds indices whose update was
    rejected (singular S) and therefore count as misses. Returns the new track
    list (deleted tracks included with status 'deleted') and the next free id.
    """
    skipped = set(skipped)
    hit_idx = {i for i, _ in assignment.pairs} - skipped
    out = []
    for i, track in enumerate(tracks):
        if track.status == "deleted":
            continue
        track = _transition(_record(track, i in hit_idx, cfg), cfg)
        if track.status == "deleted":
            logger.debug("track %d deleted after %d frames", track.id, track.age)
        out.append(track)

    live = [t for t in out if t.status != "deleted"]
    for j in assignment.unmatched_clusters:
        z = measurements[j]
        if policy.allows_spawn(z, live):
            new = initiate(next_id, z, cfg)
            out.append(new)
            next_id += 1
        else:
            logger.debug("cluster at %.2f m / %.1f deg absorbed by a group track",
                         z.range_m, z.azimuth_deg)
    return out, next_id


# ---------------------------------------------------------------------------
# tracker state machine
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrackView:
    id: int
    x: float
    y: float
    vx: float
    vy: float
    status: TrackStatus
    count: int
    P: np.ndarray

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @classmethod
    def of(cls, track: TrackState) -> "TrackView":
        x, y, vx, vy = (float(v) for v in track.x)
        return cls(track.id, x, y, vx, vy, track.status, track.count_estimate, track.P.copy())


@dataclass(frozen=True)
class TrackerSnapshot:
    frame: int
    tracks: tuple[TrackView, ...] = ()

    @property
    def confirmed(self) -> list[TrackView]:
        return [t for t in self.tracks if t.status == "confirmed"]

    @property
    def live(self) -> list[TrackView]:
        return [t for t in self.tracks if t.status != "deleted"]

    def to_records(self) -> list[dict]:
        return [
            TrackRecord(frame=self.frame, id=t.id, x=t.x, y=t.y, vx=t.vx, vy=t.vy,
                        status=t.status, count=t.count).model_dump()
            for t in self.tracks
        ]


class Tracker:
    """Single-stream tracker. `step` is the only state transition."""

    def __init__(self, cfg: TrackerConfig = TrackerConfig(),
                 policy: Optional[CountFeedbackPolicy] = None):
        self.cfg = cfg
        self.policy = policy if policy is not None else make_policy(cfg)
        self.tracks: list[TrackState] = []
        self.frame = -1
        self._next_id = 1

    def step(self, clusters: Sequence[Cluster | Measurement], dt: float,
             frame_index: Optional[int] = None) -> TrackerSnapshot:
        self.frame = self.frame + 1 if frame_index is None else frame_index
        measurements = [c if isinstance(c, Measurement) else Measurement.from_cluster(c, self.cfg)
                        for c in clusters]
        live = [predict(t, dt, self.cfg) for t in self.tracks if t.status != "deleted"]
        assignment = associate_gnn(cost_matrix(live, measurements), self.cfg.gate)
        skipped = []
        for i, j in assignment.pairs:
            updated = update(live[i], measurements[j], self.cfg)
            if updated.misses > live[i].misses:
                skipped.append(i)
                updated = replace(updated, misses=live[i].misses)
            live[i] = updated
        tracks, self._next_id = manage_lifecycle(live, assignment, measurements, self.policy,
                                                 self.cfg, self._next_id, skipped)
        snapshot = TrackerSnapshot(self.frame, tuple(TrackView.of(t) for t in tracks))
        self.tracks = [t for t in tracks if t.status != "deleted"]
        return snapshot

    def feed_count(self, track_id: int, label: int):
        """Classifier feedback: append a label and refresh the track's count estimate."""
        for i, track in enumerate(self.tracks):
            if track.id == track_id:
                labels = (track.labels + (int(label),))[-self.cfg.feedback_window:]
                self.tracks[i] = replace(track, labels=labels, count_estimate=fed_back_count(labels))
                return

    def track(self, track_id: int) -> Optional[TrackState]:
        return next((t for t in self.tracks if t.id == track_id), None)


# ---------------------------------------------------------------------------
# single-target error summary
# ---------------------------------------------------------------------------

def track_errors(truth_positions: Sequence[np.ndarray], snapshots: Sequence[TrackerSnapshot]) -> dict:
    """
    Distance between each frame's single truth position and the nearest
    confirmed track: median, mean absolute and RMS over frames that have one.
    """
    errors = []
    for truth, snap in zip(truth_positions, snapshots):
        truth = np.asarray(truth, dtype=float).reshape(-1, 2)
        confirmed = snap.confirmed
        if len(truth) == 0 or not confirmed:
            continue
        center = truth.mean(axis=0)
        errors.append(min(float(np.linalg.norm(t.position - center)) for t in confirmed))
    if not errors:
        return {"frames": 0, "median": float("nan"), "mae": float("nan"), "rmse": float("nan")}
    e = np.asarray(errors)
    return {"frames": len(e), "median": float(np.median(e)), "mae": float(e.mean()),
            "rmse": float(np.sqrt(np.mean(e ** 2)))}
