import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from models.radar import Detection
from models.tracking import ClusterConfig

logger = logging.getLogger(__name__)

NOISE = -1


@dataclass(frozen=True)
class Cluster:
    members: tuple[int, ...]
    centroid_xy: tuple[float, float]
    mean_doppler: float = 0.0
    mean_range: float = 0.0
    mean_azimuth_deg: float = 0.0

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class ClusterResult:
    clusters: list[Cluster] = field(default_factory=list)
    noise: list[int] = field(default_factory=list)
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    core: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    def __len__(self) -> int:
        return len(self.clusters)


def to_cartesian(det: Detection) -> tuple[float, float]:
    az = np.radians(det.azimuth_deg)
    return float(det.range_m * np.sin(az)), float(det.range_m * np.cos(az))


def dbscan_labels(points: np.ndarray, eps: float, min_pts: int) -> tuple[np.ndarray, np.ndarray]:
    """
    DBSCAN labels (-1 = noise) and core mask.

    A point is core when at least `min_pts` points, itself included, lie within
    distance `eps`. Clusters are grown breadth-first in input order, so a
    border point reachable from several clusters joins the first one found.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(points)
    labels = np.full(n, NOISE, dtype=int)
    if n == 0:
        return labels, np.zeros(0, dtype=bool)

    neighborhoods = cKDTree(points).query_ball_point(points, r=eps)
    core = np.array([len(nb) >= min_pts for nb in neighborhoods])

    cluster_id = 0
    for i in range(n):
        if labels[i] != NOISE or not core[i]:
            continue
        labels[i] = cluster_id
        queue = deque([i])
        while queue:
            j = queue.popleft()
            for k in sorted(neighborhoods[j]):
                if labels[k] != NOISE:
                    continue
                labels[k] = cluster_id
                if core[k]:
                    queue.append(k)
        cluster_id += 1
    return labels, core


def dbscan(points, eps: float = 0.9, min_pts: int = 3, dopplers=None) -> ClusterResult:
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    labels, core = dbscan_labels(points, eps, min_pts)
    dopplers = np.zeros(len(points)) if dopplers is None else np.asarray(dopplers, dtype=float)
    clusters = []
    for c in range(labels.max(initial=NOISE) + 1):
        members = np.flatnonzero(labels == c)
        centroid = points[members].mean(axis=0)
        clusters.append(Cluster(
            members=tuple(int(m) for m in members),
            centroid_xy=(float(centroid[0]), float(centroid[1])),
            mean_doppler=float(dopplers[members].mean()),
            mean_range=float(np.hypot(*centroid)),
            mean_azimuth_deg=float(np.degrees(np.arctan2(centroid[0], centroid[1]))),
        ))
    noise = [int(i) for i in np.flatnonzero(labels == NOISE)]
    return ClusterResult(clusters=clusters, noise=noise, labels=labels, core=core)


def cluster_detections(detections: list[Detection], cfg: ClusterConfig = ClusterConfig()) -> ClusterResult:
    points = np.array([to_cartesian(d) for d in detections], dtype=float).reshape(-1, 2)
    result = dbscan(points, cfg.eps_m, cfg.min_pts, [d.radial_velocity for d in detections])
    if detections:
        logger.debug("frame %d: %d detections -> %d clusters, %d noise", detections[0].frame_index,
                     len(detections), len(result.clusters), len(result.noise))
    return result
