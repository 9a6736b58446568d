"""
Scenario simulator: ground-truth trajectories for the six movement scenarios,
signal-level radar cubes with gait micro-Doppler and wall multipath, and a
point-cloud fast path that skips the DSP chain.

Coordinates are radar-centric: radar at the origin, boresight along +y. The
room is the square u = (x + y)/sqrt(2) in [0, W], v = (y - x)/sqrt(2) in
[0, D], so the radar sits in a corner looking along the room diagonal.
"""
import logging
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from models.radar import Detection, RadarParams
from models.scenario import GaitModel, MultipathConfig, PointNoise, Room, ScenarioConfig
from utils.datacube import RadarCube
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

SQRT_HALF = np.sqrt(0.5)
U_AXIS = np.array([SQRT_HALF, SQRT_HALF])
V_AXIS = np.array([-SQRT_HALF, SQRT_HALF])

MIN_RANGE_M = 1.5
MAX_RANGE_M = 6.0
MAX_AZIMUTH_DEG = 30.0
WALL_MARGIN_M = 0.5
RAMP_S = 0.5
JITTER_M = 0.025  # per sinusoid, two per axis
MIN_SEPARATION_M = 0.2  # closest approach of two people in the following scenario
MIN_STEP_M = 1.5


# ---------------------------------------------------------------------------
# ground truth containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TruthFrame:
    frame_index: int
    time_s: float
    positions: np.ndarray  # (persons, 2)
    velocities: np.ndarray  # (persons, 2)
    group_labels: np.ndarray  # (persons,)

    @property
    def person_ids(self) -> list[int]:
        return list(range(len(self.positions)))

    @property
    def group_counts(self) -> list[int]:
        if len(self.group_labels) == 0:
            return []
        return [int(c) for c in np.bincount(self.group_labels)]

    @property
    def group_centroids(self) -> np.ndarray:
        counts = self.group_counts
        out = np.zeros((len(counts), 2))
        for g in range(len(counts)):
            out[g] = self.positions[self.group_labels == g].mean(axis=0)
        return out

    def to_record(self) -> dict:
        return {
            "frame": self.frame_index,
            "persons": [
                {"id": i, "x": float(p[0]), "y": float(p[1]),
                 "vx": float(v[0]), "vy": float(v[1]), "group": int(g)}
                for i, (p, v, g) in enumerate(zip(self.positions, self.velocities, self.group_labels))
            ],
            "true_count_per_group": self.group_counts,
        }

    @classmethod
    def from_record(cls, record: dict, frame_rate: float = 10.0,
                    grouping_radius_m: float = 1.1) -> "TruthFrame":
        persons = sorted(record["persons"], key=lambda p: p["id"])
        positions = np.array([[p["x"], p["y"]] for p in persons], dtype=float).reshape(-1, 2)
        velocities = np.array([[p.get("vx", 0.0), p.get("vy", 0.0)] for p in persons],
                              dtype=float).reshape(-1, 2)
        if persons and all("group" in p for p in persons):
            labels = np.array([p["group"] for p in persons], dtype=int)
        else:
            labels = group_labels(positions, grouping_radius_m)
        frame = int(record["frame"])
        return cls(frame, frame / frame_rate, positions, velocities, labels)


@dataclass(frozen=True)
class GroundTruth:
    config: ScenarioConfig
    times: np.ndarray  # (frames,)
    positions: np.ndarray  # (frames, persons, 2)
    velocities: np.ndarray  # (frames, persons, 2)
    labels: np.ndarray  # (frames, persons)

    def __len__(self) -> int:
        return len(self.times)

    def frame(self, k: int) -> TruthFrame:
        return TruthFrame(k, float(self.times[k]), self.positions[k], self.velocities[k], self.labels[k])

    def __iter__(self) -> Iterator[TruthFrame]:
        return (self.frame(k) for k in range(len(self)))


def group_labels(positions: np.ndarray, radius: float) -> np.ndarray:
    """Connected components of the 'within radius' graph; person 0 is always in group 0."""
    n = len(positions)
    if n == 0:
        return np.zeros(0, dtype=int)
    dist = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=-1)
    _, labels = connected_components(csr_matrix(dist <= radius), directed=False)
    return labels.astype(int)


# ---------------------------------------------------------------------------
# room geometry
# ---------------------------------------------------------------------------

def room_coords(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    points = np.atleast_2d(points)
    return points @ U_AXIS, points @ V_AXIS


def inside_room(points: np.ndarray, room: Room, margin: float = 0.0) -> np.ndarray:
    u, v = room_coords(points)
    return ((u >= margin) & (u <= room.width_m - margin)
            & (v >= margin) & (v <= room.depth_m - margin))


def in_walk_area(center: np.ndarray, members: np.ndarray, room: Room) -> bool:
    r = float(np.hypot(*center))
    az = float(np.degrees(np.arctan2(center[0], center[1])))
    if not (MIN_RANGE_M <= r <= MAX_RANGE_M and abs(az) <= MAX_AZIMUTH_DEG):
        return False
    return bool(inside_room(center, room, WALL_MARGIN_M).all()
                and inside_room(members, room, WALL_MARGIN_M * 0.6).all())


def mirror(points: np.ndarray, velocities: np.ndarray, room: Room, wall: str):
    """Image of points/velocities across one of the two far walls."""
    if wall == "far_width":
        normal, extent = U_AXIS, room.width_m
    elif wall == "far_depth":
        normal, extent = V_AXIS, room.depth_m
    else:
        raise ConfigError(f"unknown wall {wall!r}")
    offset = extent - points @ normal
    images = points + 2.0 * offset[:, None] * normal
    image_vel = velocities - 2.0 * (velocities @ normal)[:, None] * normal
    return images, image_vel


# ---------------------------------------------------------------------------
# kinematics: piecewise legs with trapezoidal speed and dwells
# ---------------------------------------------------------------------------

@dataclass
class _Leg:
    t0: float
    start: np.ndarray
    direction: np.ndarray  # unit vector; zero for a dwell
    length: float
    s0: float  # cumulative arc length at leg start
    duration: float
    v_peak: float = 0.0
    t_acc: float = 0.0
    t_cruise: float = 0.0

    @property
    def accel(self) -> float:
        return self.v_peak / self.t_acc if self.t_acc > 0 else 0.0

    def distance(self, tau: float) -> tuple[float, float]:
        """Distance travelled and speed, tau seconds into the leg."""
        if self.length == 0.0:
            return 0.0, 0.0
        tau = min(max(tau, 0.0), self.duration)
        a = self.accel
        if tau <= self.t_acc:
            return 0.5 * a * tau ** 2, a * tau
        if tau <= self.t_acc + self.t_cruise:
            return 0.5 * self.v_peak * self.t_acc + self.v_peak * (tau - self.t_acc), self.v_peak
        rest = self.duration - tau
        return self.length - 0.5 * a * rest ** 2, a * rest


class Path:
    """A walked path: consecutive legs and dwells starting at t = 0."""

    def __init__(self, start):
        self.legs: list[_Leg] = []
        self.start = np.asarray(start, dtype=float)
        self.end = self.start.copy()
        self.t_end = 0.0
        self.s_end = 0.0
        self.heading: Optional[np.ndarray] = None

    def move_to(self, target, speed: float, ramp_s: float = RAMP_S):
        target = np.asarray(target, dtype=float)
        delta = target - self.end
        length = float(np.linalg.norm(delta))
        if length < 1e-9:
            return
        direction = delta / length
        if length >= speed * ramp_s:
            v_peak, t_acc = speed, ramp_s
            t_cruise = (length - speed * ramp_s) / speed
        else:
            a = speed / ramp_s
            v_peak = np.sqrt(length * a)
            t_acc, t_cruise = v_peak / a, 0.0
        leg = _Leg(self.t_end, self.end.copy(), direction, length, self.s_end,
                   2 * t_acc + t_cruise, v_peak, t_acc, t_cruise)
        self.legs.append(leg)
        self.t_end += leg.duration
        self.s_end += length
        self.end = target
        self.heading = direction

    def dwell(self, duration: float):
        if duration <= 0:
            return
        self.legs.append(_Leg(self.t_end, self.end.copy(), np.zeros(2), 0.0, self.s_end, duration))
        self.t_end += duration

    @property
    def n_moves(self) -> int:
        return sum(1 for leg in self.legs if leg.length > 0)

    def pop_move(self):
        """Undo the most recent move_to together with any dwell after it."""
        while self.legs and self.legs[-1].length == 0.0:
            self.legs.pop()
        if self.legs:
            self.legs.pop()
        self.t_end = self.legs[-1].t0 + self.legs[-1].duration if self.legs else 0.0
        moving = [leg for leg in self.legs if leg.length > 0]
        if moving:
            last = moving[-1]
            self.end = last.start + last.length * last.direction
            self.s_end = last.s0 + last.length
            self.heading = last.direction
        else:
            self.end, self.s_end, self.heading = self.start.copy(), 0.0, None

    def _leg_at(self, t: float) -> _Leg:
        starts = [leg.t0 for leg in self.legs]
        return self.legs[max(int(np.searchsorted(starts, t, side="right")) - 1, 0)]

    def state(self, t: float) -> tuple[np.ndarray, np.ndarray, float]:
        """Position, velocity and cumulative arc length at time t."""
        if not self.legs or t >= self.t_end:
            return self.end.copy(), np.zeros(2), self.s_end
        leg = self._leg_at(t)
        s, speed = leg.distance(t - leg.t0)
        return leg.start + s * leg.direction, speed * leg.direction, leg.s0 + s

    def point_at(self, s: float) -> tuple[np.ndarray, np.ndarray]:
        """Position and unit tangent at arc length s; s < 0 extends back along the first leg."""
        moving = [leg for leg in self.legs if leg.length > 0]
        if not moving:
            return self.start.copy(), np.zeros(2)
        if s <= 0:
            first = moving[0]
            return first.start + s * first.direction, first.direction
        for leg in moving:
            if s <= leg.s0 + leg.length:
                return leg.start + (s - leg.s0) * leg.direction, leg.direction
        last = moving[-1]
        return last.start + last.length * last.direction, last.direction


# ---------------------------------------------------------------------------
# trajectory generation
# ---------------------------------------------------------------------------

def formation_offsets(n_people: int, spacing: float, lateral: np.ndarray,
                      longitudinal: np.ndarray) -> np.ndarray:
    """Side-by-side pair or triangle, centred on the group position."""
    if n_people == 1:
        local = np.zeros((1, 2))
    elif n_people == 2:
        local = np.array([[-spacing / 2, 0.0], [spacing / 2, 0.0]])
    else:
        local = np.array([[-spacing / 2, 0.0], [spacing / 2, 0.0], [0.0, -spacing * np.sqrt(3) / 2]])
    local = local - local.mean(axis=0)
    return local[:, :1] * lateral + local[:, 1:] * longitudinal


def sample_gaits(cfg: ScenarioConfig) -> list[GaitModel]:
    rng = np.random.default_rng([cfg.seed, 1])
    return [
        GaitModel(
            torso_speed=float(rng.uniform(0.8, 1.3)),
            step_cadence=float(rng.uniform(1.6, 2.0)),
            limb_doppler_amplitude=float(rng.uniform(1.0, 1.5)),
            rcs_torso=float(rng.uniform(0.8, 1.2)),
            rcs_limbs=float(rng.uniform(0.2, 0.3)),
        )
        for _ in range(cfg.n_people)
    ]


def _check_room(cfg: ScenarioConfig):
    needed = 2.0 + cfg.group_spacing_m * (cfg.n_people - 1)
    if min(cfg.room.width_m, cfg.room.depth_m) < needed:
        raise ConfigError(
            f"room {cfg.room.width_m}x{cfg.room.depth_m} m is too small for "
            f"{cfg.n_people} people at {cfg.group_spacing_m} m spacing"
        )


def _forward_backward_path(cfg: ScenarioConfig, speed: float, rng: np.random.Generator):
    azimuth = np.radians(rng.uniform(-10.0, 10.0))
    axis = np.array([np.sin(azimuth), np.cos(azimuth)])
    lateral = np.array([np.cos(azimuth), -np.sin(azimuth)])
    offsets = formation_offsets(cfg.n_people, cfg.group_spacing_m, lateral, axis)
    ranges = np.arange(MIN_RANGE_M, MAX_RANGE_M + 1e-9, 0.05)
    valid = [r for r in ranges if in_walk_area(r * axis, r * axis + offsets, cfg.room)]
    if not valid or valid[-1] - valid[0] < 1.5:
        raise ConfigError(f"room too small for a forward-backward leg with {cfg.n_people} people")
    near, far = valid[0], valid[-1]
    path = Path(near * axis)
    heading_out = True
    while path.t_end < cfg.duration_s:
        path.move_to((far if heading_out else near) * axis, speed)
        path.dwell(float(rng.uniform(0.3, 0.6)))
        heading_out = not heading_out
    return path, offsets


def _sample_center(cfg: ScenarioConfig, offsets: np.ndarray, rng: np.random.Generator,
                   tries: int = 1000) -> np.ndarray:
    for _ in range(tries):
        r = rng.uniform(MIN_RANGE_M, MAX_RANGE_M)
        az = np.radians(rng.uniform(-MAX_AZIMUTH_DEG, MAX_AZIMUTH_DEG))
        center = r * np.array([np.sin(az), np.cos(az)])
        if in_walk_area(center, center + offsets, cfg.room):
            return center
    raise ConfigError("room too small: no valid position for the group")


def turn_deg(heading: Optional[np.ndarray], delta: np.ndarray) -> float:
    """Heading change in degrees when leaving along `delta` (0 = straight on, 180 = reversal)."""
    if heading is None:
        return 0.0
    cos = float(heading @ delta) / float(np.linalg.norm(delta))
    return float(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))


def following_max_turn_deg(spacing: float) -> float:
    """
    Sharpest corner two people `spacing` apart along a path may take while
    staying MIN_SEPARATION_M apart in a straight line (with 10 % margin).
    Across a single corner of turn angle phi the chord is at least
    spacing * cos(phi / 2).
    """
    ratio = 1.1 * MIN_SEPARATION_M / spacing
    if ratio >= 1.0:
        return 0.0
    return 2.0 * float(np.degrees(np.arccos(ratio)))


def _next_waypoint(cfg, path: Path, offsets, rng, max_turn_deg: float = 180.0,
                   min_step: float = MIN_STEP_M) -> Optional[np.ndarray]:
    heading = path.heading
    for _ in range(200):
        if heading is None:
            angle = rng.uniform(-np.pi, np.pi)
        else:
            angle = np.arctan2(heading[1], heading[0]) + np.radians(rng.uniform(-120.0, 120.0))
        step = rng.uniform(1.5, 3.5)
        candidate = path.end + step * np.array([np.cos(angle), np.sin(angle)])
        if (step >= min_step and turn_deg(heading, candidate - path.end) <= max_turn_deg
                and in_walk_area(candidate, candidate + offsets, cfg.room)):
            return candidate
    for _ in range(200):
        candidate = _sample_center(cfg, offsets, rng)
        delta = candidate - path.end
        if np.linalg.norm(delta) >= min_step and turn_deg(heading, delta) <= max_turn_deg:
            return candidate
    return None


def _random_walk_path(cfg: ScenarioConfig, n_people: int, speed: float,
                      rng: np.random.Generator, lead_in: float = 0.0,
                      max_turn_deg: float = 180.0, min_step: float = MIN_STEP_M):
    """
    Waypoint walk with optional dwells. A waypoint with no admissible
    successor is dropped and the previous leg is drawn again.
    """
    offsets = formation_offsets(n_people, cfg.group_spacing_m, np.array([1.0, 0.0]),
                                np.array([0.0, 1.0]))
    for _ in range(200):
        path = Path(_sample_center(cfg, offsets, rng))
        first = _next_waypoint(cfg, path, offsets, rng, max_turn_deg, min_step)
        if first is None:
            continue
        back = path.start - lead_in * (first - path.start) / np.linalg.norm(first - path.start)
        if lead_in == 0.0 or inside_room(back, cfg.room, WALL_MARGIN_M * 0.6).all():
            break
    else:
        raise ConfigError("room too small for the follower lead-in")
    path.move_to(first, speed)
    backtracks = 0
    while path.t_end < cfg.duration_s + lead_in / max(speed, 1e-6):
        if rng.random() < 0.5:
            path.dwell(float(rng.uniform(0.5, 2.0)))
        target = _next_waypoint(cfg, path, offsets, rng, max_turn_deg, min_step)
        if target is not None:
            path.move_to(target, speed)
            continue
        backtracks += 1
        if backtracks > 500 or path.n_moves <= 1:
            raise ConfigError("room too small: cannot place the next waypoint")
        path.pop_move()
    return path, offsets


def _jitter(n_people: int, rng: np.random.Generator):
    """Smooth per-person wobble: amplitudes, frequencies (Hz) and phases for 2 axes x 2 tones."""
    amp = np.full((n_people, 2, 2), JITTER_M)
    freq = rng.uniform(0.1, 0.3, size=(n_people, 2, 2))
    phase = rng.uniform(0.0, 2 * np.pi, size=(n_people, 2, 2))
    if n_people == 1:
        amp[:] = 0.0
    return amp, freq, phase


def gen_trajectories(cfg: ScenarioConfig, params: RadarParams = RadarParams()) -> GroundTruth:
    _check_room(cfg)
    rng = np.random.default_rng([cfg.seed, 0])
    gaits = sample_gaits(cfg)
    speed = gaits[0].torso_speed
    n_frames = int(round(cfg.duration_s * params.frame_rate))
    times = np.arange(n_frames) / params.frame_rate
    positions = np.zeros((n_frames, cfg.n_people, 2))
    velocities = np.zeros_like(positions)

    if cfg.motion_kind == "following":
        line = (cfg.n_people - 1) * cfg.group_spacing_m
        if cfg.group_spacing_m < 2 * MIN_SEPARATION_M:
            raise ConfigError(f"following needs group_spacing_m >= {2 * MIN_SEPARATION_M} m, "
                              f"got {cfg.group_spacing_m}")
        # legs longer than the line of walkers keep at most one corner between any two of them
        path, _ = _random_walk_path(cfg, 1, speed, rng, lead_in=line,
                                    max_turn_deg=following_max_turn_deg(cfg.group_spacing_m),
                                    min_step=max(MIN_STEP_M, 1.05 * line))
        for k, t in enumerate(times):
            pos, vel, s = path.state(t)
            positions[k, 0], velocities[k, 0] = pos, vel
            speed_now = float(np.linalg.norm(vel))
            for i in range(1, cfg.n_people):
                p, tangent = path.point_at(s - i * cfg.group_spacing_m)
                positions[k, i], velocities[k, i] = p, speed_now * tangent
    else:
        if cfg.motion_kind == "forward_backward":
            path, offsets = _forward_backward_path(cfg, speed, rng)
        else:
            path, offsets = _random_walk_path(cfg, cfg.n_people, speed, rng)
        amp, freq, phase = _jitter(cfg.n_people, rng)
        for k, t in enumerate(times):
            pos, vel, _ = path.state(t)
            arg = 2 * np.pi * freq * t + phase
            wobble = (amp * np.sin(arg)).sum(axis=2)
            wobble_rate = (amp * 2 * np.pi * freq * np.cos(arg)).sum(axis=2)
            positions[k] = pos + offsets + wobble
            velocities[k] = vel + wobble_rate

    labels = np.stack([group_labels(p, cfg.grouping_radius_m) for p in positions]) \
        if n_frames else np.zeros((0, cfg.n_people), dtype=int)
    logger.info("scenario %d: %d frames, %d people, %s", cfg.scenario_id, n_frames,
                cfg.n_people, cfg.motion_kind)
    return GroundTruth(cfg, times, positions, velocities, labels)


# ---------------------------------------------------------------------------
# signal-level synthesis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scatterers:
    """Point scatterers of one frame, with their range-rate over the frame's chirps."""

    positions: np.ndarray  # (k, 2)
    amplitudes: np.ndarray  # (k,)
    displacement: np.ndarray  # (k, chirps) range change since frame start, meters


def _scatterers(truth: TruthFrame, gaits: list[GaitModel], params: RadarParams,
                chirp_times: np.ndarray) -> Scatterers:
    positions, amplitudes, displacement = [], [], []
    tau = chirp_times - chirp_times[0]
    for i, (p, v) in enumerate(zip(truth.positions, truth.velocities)):
        gait = gaits[i % len(gaits)]
        r = max(float(np.hypot(*p)), 0.5)
        v_r = float(v @ p) / r
        speed = float(np.hypot(*v))
        limb_amp = gait.limb_doppler_amplitude * min(speed / gait.torso_speed, 1.5)
        w = 2 * np.pi * gait.step_cadence
        positions.append(p)
        amplitudes.append(np.sqrt(gait.rcs_torso) / r ** 2)
        displacement.append(v_r * tau)
        for phi in (0.0, np.pi):
            swing = -(limb_amp / w) * (np.cos(w * chirp_times + phi) - np.cos(w * chirp_times[0] + phi))
            positions.append(p)
            amplitudes.append(np.sqrt(gait.rcs_limbs) / r ** 2)
            displacement.append(v_r * tau + swing)
    if not positions:
        return Scatterers(np.zeros((0, 2)), np.zeros(0), np.zeros((0, len(tau))))
    return Scatterers(np.array(positions), np.array(amplitudes), np.array(displacement))


def _with_ghosts(scat: Scatterers, truth: TruthFrame, gaits: list[GaitModel], params: RadarParams,
                 chirp_times: np.ndarray, multipath: MultipathConfig, room: Room) -> Scatterers:
    if not multipath.enabled or len(truth.positions) == 0:
        return scat
    gain = 10.0 ** (-multipath.attenuation_db / 20.0)
    parts = [scat]
    for wall in multipath.walls:
        images, image_vel = mirror(truth.positions, truth.velocities, room, wall)
        ghost_truth = TruthFrame(truth.frame_index, truth.time_s, images, image_vel, truth.group_labels)
        ghost = _scatterers(ghost_truth, gaits, params, chirp_times)
        parts.append(Scatterers(ghost.positions, gain * ghost.amplitudes, ghost.displacement))
    return Scatterers(
        np.concatenate([s.positions for s in parts]),
        np.concatenate([s.amplitudes for s in parts]),
        np.concatenate([s.displacement for s in parts]),
    )


def synthesize_frame(truth: TruthFrame, gaits: list[GaitModel], params: RadarParams = RadarParams(),
                     multipath: MultipathConfig = MultipathConfig(), room: Room = Room(),
                     rng: Optional[np.random.Generator] = None) -> RadarCube:
    """
    Beat-signal cube for one frame.

    Each scatterer contributes amp * exp(j2pi (R/dR) n/N) * exp(j4pi R(t_c)/lambda)
    * exp(j2pi d m sin(az)). Receiver noise is complex white with the configured
    power; `rng` defaults to a stream derived from the frame index.
    """
    n_samples, n_chirps, n_channels = (params.samples_per_chirp, params.chirps_per_frame,
                                       params.n_virtual_channels)
    chirp_times = truth.time_s + np.arange(n_chirps) * params.chirp_repetition_interval
    scat = _with_ghosts(_scatterers(truth, gaits, params, chirp_times), truth, gaits, params,
                        chirp_times, multipath, room)
    statics = np.array(multipath.static_reflectors, dtype=float).reshape(-1, 3)
    if len(statics):
        static_r = np.maximum(np.hypot(statics[:, 0], statics[:, 1]), 0.5)
        scat = Scatterers(
            np.concatenate([scat.positions, statics[:, :2]]),
            np.concatenate([scat.amplitudes, np.sqrt(statics[:, 2]) / static_r ** 2]),
            np.concatenate([scat.displacement, np.zeros((len(statics), n_chirps))]),
        )

    ranges = np.hypot(scat.positions[:, 0], scat.positions[:, 1])
    azimuths = np.arctan2(scat.positions[:, 0], scat.positions[:, 1])
    n = np.arange(n_samples)
    m = np.arange(n_channels)
    fast = np.exp(2j * np.pi * np.outer(ranges / params.range_resolution, n) / n_samples)
    slow = np.exp(4j * np.pi * (ranges[:, None] + scat.displacement) / params.wavelength)
    array = np.exp(2j * np.pi * params.element_spacing * np.outer(np.sin(azimuths), m))
    data = np.einsum("k,ks,kc,kv->scv", scat.amplitudes.astype(complex), fast, slow, array)

    if multipath.noise_power_db is not None:
        rng = rng if rng is not None else np.random.default_rng(truth.frame_index)
        sigma = np.sqrt(10.0 ** (multipath.noise_power_db / 10.0) / 2.0)
        data = data + sigma * (rng.standard_normal(data.shape) + 1j * rng.standard_normal(data.shape))
    return RadarCube(data=data, frame_index=truth.frame_index, params=params)


# ---------------------------------------------------------------------------
# point-cloud fast path
# ---------------------------------------------------------------------------

def gen_point_cloud(truth: TruthFrame, noise: PointNoise = PointNoise(),
                    rng: Optional[np.random.Generator] = None,
                    params: RadarParams = RadarParams()) -> list[Detection]:
    rng = rng if rng is not None else np.random.default_rng(truth.frame_index)
    center = params.chirps_per_frame // 2
    detections = []

    def emit(range_m, azimuth_deg, velocity):
        range_m = max(float(range_m), 0.0)
        azimuth_deg = float(np.clip(azimuth_deg, -90.0, 90.0))
        detections.append(Detection(
            range_bin=int(round(range_m / params.range_resolution)),
            doppler_bin=int(round(velocity / params.velocity_resolution)) + center,
            range_m=range_m,
            radial_velocity=float(velocity),
            azimuth_deg=azimuth_deg,
            snr_db=noise.snr_db,
            frame_index=truth.frame_index,
        ))

    for p, v in zip(truth.positions, truth.velocities):
        if rng.random() < noise.miss_probability:
            continue
        r = float(np.hypot(*p))
        az = float(np.degrees(np.arctan2(p[0], p[1])))
        v_r = float(v @ p) / max(r, 1e-9)
        for _ in range(int(rng.integers(noise.min_points, noise.max_points + 1))):
            emit(r + noise.sigma_range_m * rng.standard_normal(),
                 az + noise.sigma_azimuth_deg * rng.standard_normal(),
                 v_r + noise.sigma_velocity_mps * rng.standard_normal())
    for _ in range(int(rng.poisson(noise.clutter_rate))):
        emit(rng.uniform(0.5, MAX_RANGE_M + 1.0),
             rng.uniform(-params.beamwidth_deg / 2, params.beamwidth_deg / 2),
             0.5 * rng.standard_normal())
    return detections


# ---------------------------------------------------------------------------
# scenario streaming
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrameSample:
    truth: TruthFrame
    cube: Optional[RadarCube] = None
    detections: Optional[list[Detection]] = None


@dataclass
class Simulator:
    """Seeded scenario stream. Frame k draws from its own child stream, so frames are independent."""

    config: ScenarioConfig
    params: RadarParams = field(default_factory=RadarParams)
    multipath: MultipathConfig = field(default_factory=MultipathConfig)
    point_noise: PointNoise = field(default_factory=PointNoise)

    def __post_init__(self):
        self.truth = gen_trajectories(self.config, self.params)
        self.gaits = sample_gaits(self.config)

    def cube(self, k: int) -> RadarCube:
        rng = np.random.default_rng([self.config.seed, 2, k])
        return synthesize_frame(self.truth.frame(k), self.gaits, self.params, self.multipath,
                                self.config.room, rng)

    def point_cloud(self, k: int) -> list[Detection]:
        rng = np.random.default_rng([self.config.seed, 3, k])
        return gen_point_cloud(self.truth.frame(k), self.point_noise, rng, self.params)

    def frames(self, with_cubes: Optional[bool] = None) -> Iterator[FrameSample]:
        signal_level = self.config.fidelity == "signal"
        with_cubes = signal_level if with_cubes is None else with_cubes
        for k in range(len(self.truth)):
            yield FrameSample(
                truth=self.truth.frame(k),
                cube=self.cube(k) if with_cubes else None,
                detections=None if signal_level else self.point_cloud(k),
            )


def simulate_scenario(cfg: ScenarioConfig, params: RadarParams = RadarParams(),
                      multipath: MultipathConfig = MultipathConfig(),
                      point_noise: PointNoise = PointNoise(),
                      with_cubes: Optional[bool] = None) -> Iterator[FrameSample]:
    return Simulator(cfg, params, multipath, point_noise).frames(with_cubes)
