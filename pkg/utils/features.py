"""
Per-track feature extraction.

Spatial features come from the range-azimuth footprint of a track; frequency
features are statistics of a MODWT decomposition of the track's slow-time
signal over an observation window. The cadence-velocity diagram (CVD) gives
the baseline frequency feature set.
"""
import logging
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Literal, Optional, Sequence

import numpy as np
import pywt
from scipy import stats

from models.features import PYWT_NAMES, FeatureConfig
from models.radar import RadarParams, WindowKind
from utils.datacube import DB_FLOOR, RAMap, taper
from utils.errors import DataError

logger = logging.getLogger(__name__)

STAT_NAMES = ("var", "std", "mean", "median", "rms", "skew", "kurtosis", "entropy")
SPATIAL_NAMES = (
    "az_width", "range_length", "az_bin_mean", "az_bin_median", "az_bin_var",
    "az_bins", "az_profile_mean", "az_profile_median", "az_profile_var", "pixels",
)
LEVEL_NAMES = ("level1", "level2", "level3", "level4", "approx")
ENTROPY_FLOOR = 1e-12

Mode = Literal["spatial_only", "full"]


def feature_names(levels: int = 4) -> list[str]:
    """Fixed ordering: 10 spatial names then 8 statistics per level (level1..levelJ, approx)."""
    level_names = [f"level{j}" for j in range(1, levels + 1)] + ["approx"]
    return list(SPATIAL_NAMES) + [f"{lvl}_{s}" for lvl in level_names for s in STAT_NAMES]


def cvd_feature_names() -> list[str]:
    return [f"cvd_{s}" for s in STAT_NAMES]


# ---------------------------------------------------------------------------
# MODWT
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModwtDecomposition:
    details: tuple[np.ndarray, ...]  # W_1 .. W_J
    approx: np.ndarray  # V_J
    wavelet: str
    h: np.ndarray  # rescaled wavelet filter
    g: np.ndarray  # rescaled scaling filter

    @property
    def levels(self) -> int:
        return len(self.details)

    @property
    def series(self) -> list[np.ndarray]:
        """Level 1..J then the approximation."""
        return list(self.details) + [self.approx]

    def energies(self) -> np.ndarray:
        return np.array([np.sum(np.abs(s) ** 2) for s in self.series])

    @staticmethod
    def bands(fs: float, levels: int = 4) -> list[tuple[float, float]]:
        """Nominal pass bands (Hz) of level 1..J and the approximation."""
        out = [(fs / 2 ** (j + 1), fs / 2 ** j) for j in range(1, levels + 1)]
        return out + [(0.0, fs / 2 ** (levels + 1))]


def modwt_filters(wavelet: str = "d4") -> tuple[np.ndarray, np.ndarray]:
    w = pywt.Wavelet(PYWT_NAMES.get(wavelet, wavelet))
    return np.array(w.dec_hi) / np.sqrt(2), np.array(w.dec_lo) / np.sqrt(2)


def support_length(filter_length: int, levels: int) -> int:
    return (2 ** levels - 1) * (filter_length - 1) + 1


def _circular_filter(kernel: np.ndarray, signal: np.ndarray, level: int) -> np.ndarray:
    n = len(signal)
    idx = np.mod(np.arange(n)[:, None] - 2 ** (level - 1) * np.arange(len(kernel))[None, :], n)
    return (signal[idx] * kernel[None, :]).sum(axis=1)


def modwt(series, levels: int = 4, wavelet: str = "d4") -> ModwtDecomposition:
    """
    Pyramid MODWT with circular boundary: W_j[t] = sum_l h_l V_{j-1}[t - 2^(j-1) l mod N].

    The filters are real, so a complex series decomposes as its in-phase and
    quadrature parts independently.
    """
    x = np.asarray(series)
    if x.ndim != 1:
        raise DataError("modwt expects a 1-D series")
    h, g = modwt_filters(wavelet)
    needed = support_length(len(h), levels)
    if len(x) < needed:
        raise DataError(f"series of length {len(x)} is shorter than the level-{levels} "
                        f"filter support ({needed})")
    approx = x.astype(complex) if np.iscomplexobj(x) else x.astype(float)
    details = []
    for j in range(1, levels + 1):
        details.append(_circular_filter(h, approx, j))
        approx = _circular_filter(g, approx, j)
    return ModwtDecomposition(tuple(details), approx, wavelet, h, g)


def level_stats(coeffs) -> np.ndarray:
    """variance, std, mean, median, RMS, skewness, kurtosis, entropy of coefficient magnitudes."""
    m = np.abs(np.asarray(coeffs))
    if m.size == 0:
        raise DataError("level_stats needs a nonempty series")
    var = float(np.var(m))
    std = float(np.sqrt(var))
    flat = std <= 1e-12 * max(float(np.max(m)), 1.0)
    skew = 0.0 if flat else float(stats.skew(m))
    kurt = 0.0 if flat else float(stats.kurtosis(m))
    energy = m ** 2
    total = float(energy.sum())
    if total > 0:
        p = energy / total
        entropy = float(-np.sum(p * np.log(np.maximum(p, ENTROPY_FLOOR))))
    else:
        entropy = 0.0
    return np.array([var, std, float(m.mean()), float(np.median(m)),
                     float(np.sqrt(np.mean(energy))), skew, kurt, entropy])


def modwt_features(series, levels: int = 4, wavelet: str = "d4") -> np.ndarray:
    return np.concatenate([level_stats(s) for s in modwt(series, levels, wavelet).series])


# ---------------------------------------------------------------------------
# spatial features
# ---------------------------------------------------------------------------

def footprint_mask(patch_db: np.ndarray, threshold_db: float = -6.0) -> np.ndarray:
    patch_db = np.asarray(patch_db, dtype=float)
    if patch_db.size == 0 or not np.isfinite(patch_db).any() or np.nanmax(patch_db) <= DB_FLOOR:
        return np.zeros(patch_db.shape, dtype=bool)
    return patch_db >= np.nanmax(patch_db) + threshold_db


def spatial_features(patch_db: np.ndarray, az_offset: int = 0,
                     threshold_db: float = -6.0) -> tuple[np.ndarray, bool]:
    """
    10 footprint features of one RA patch (rows = range bins, columns = azimuth bins).

    Angle-bin features use absolute azimuth-bin indices (`az_offset` is the
    index of patch column 0). The azimuth profile is the per-column maximum
    in linear power, normalised to its peak and read on the occupied columns.
    Returns (features, empty_flag).
    """
    mask = footprint_mask(patch_db, threshold_db)
    if not mask.any():
        return np.zeros(len(SPATIAL_NAMES)), True
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    bins = cols + az_offset
    linear = 10.0 ** (np.asarray(patch_db, dtype=float) / 10.0)
    profile = linear.max(axis=0)
    profile = profile[cols] / profile.max()
    return np.array([
        cols.max() - cols.min() + 1,
        rows.max() - rows.min() + 1,
        bins.mean(),
        np.median(bins),
        bins.var(),
        len(cols),
        profile.mean(),
        np.median(profile),
        profile.var(),
        mask.sum(),
    ], dtype=float), False


# ---------------------------------------------------------------------------
# CVD baseline
# ---------------------------------------------------------------------------

def spectrogram(series, n_fft: int = 64, hop: int = 16,
                window: WindowKind | str = WindowKind.hann) -> np.ndarray:
    """|STFT| with zero Doppler centred, shape (time frames, Doppler bins)."""
    x = np.asarray(series)
    if len(x) < n_fft:
        raise DataError(f"series of length {len(x)} is shorter than n_fft={n_fft}")
    segments = np.lib.stride_tricks.sliding_window_view(x, n_fft)[::hop]
    spec = np.fft.fftshift(np.fft.fft(segments * taper(window, n_fft), axis=1), axes=1)
    return np.abs(spec)


def cvd(spec_mag: np.ndarray, window: WindowKind | str = WindowKind.rect,
        n_w: Optional[int] = None) -> np.ndarray:
    """S_C(eps, k) = sum_l w(l) |S(l, k)| exp(-j 2 pi eps l / N_w), over the time axis."""
    spec_mag = np.abs(np.asarray(spec_mag, dtype=float))
    n_frames = spec_mag.shape[0]
    n_w = n_frames if n_w is None else n_w
    if n_w < 2:
        raise DataError("CVD needs N_w >= 2")
    weighted = spec_mag * taper(window, n_frames)[:, None]
    return np.fft.fft(weighted, n=n_w, axis=0)


def cadence_axis(n_w: int, frame_rate: float) -> np.ndarray:
    return np.fft.fftfreq(n_w, d=1.0 / frame_rate)


def dominant_cadence(cvd_map: np.ndarray) -> int:
    """Strongest positive cadence bin, excluding eps = 0."""
    half = cvd_map.shape[0] // 2
    if half < 1:
        return 0
    energy = np.abs(cvd_map[1:half + 1]).sum(axis=1)
    return int(np.argmax(energy)) + 1


def cvd_features_from_series(series, cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    spec = spectrogram(series, cfg.cvd_nfft, cfg.cvd_hop)
    cvd_map = cvd(spec, cfg.cvd_window)
    return level_stats(cvd_map[dominant_cadence(cvd_map)])


# ---------------------------------------------------------------------------
# track buffers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BufferEntry:
    frame: int
    series: np.ndarray  # complex slow-time samples of this frame
    patch_db: np.ndarray  # RA footprint patch
    az_offset: int
    range_m: float

    @property
    def az_profile(self) -> np.ndarray:
        linear = 10.0 ** (self.patch_db / 10.0)
        profile = linear.max(axis=0)
        return profile / profile.max() if profile.max() > 0 else profile


@dataclass
class TrackBuffer:
    track_id: int
    capacity: int = 20
    entries: deque = field(default=None)
    frames: deque = field(default=None)

    def __post_init__(self):
        if self.entries is None:
            self.entries = deque(maxlen=self.capacity)
        if self.frames is None:
            self.frames = deque(maxlen=self.capacity)

    def push(self, frame: int, entry: Optional[BufferEntry]):
        """Append one frame; `None` marks a missed detection."""
        self.entries.append(entry)
        self.frames.append(frame)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def mask(self) -> np.ndarray:
        return np.array([e is not None for e in self.entries], dtype=bool)

    @property
    def present(self) -> list[BufferEntry]:
        return [e for e in self.entries if e is not None]

    @property
    def is_full(self) -> bool:
        return len(self.entries) == self.capacity

    @property
    def frame_span(self) -> tuple[int, int]:
        return (self.frames[0], self.frames[-1]) if self.frames else (-1, -1)

    def snapshot(self) -> "TrackBuffer":
        return TrackBuffer(self.track_id, self.capacity, deque(self.entries, maxlen=self.capacity),
                           deque(self.frames, maxlen=self.capacity))


def fill_missing(buffer: TrackBuffer) -> tuple[TrackBuffer, np.ndarray]:
    """Replace missing frames by the elementwise mean of the present ones; returns (buffer, mask)."""
    present = buffer.present
    mask = buffer.mask
    if not present:
        raise DataError(f"track {buffer.track_id}: every buffered frame is missing")
    if mask.all():
        return buffer, mask
    mean_entry = BufferEntry(
        frame=-1,
        series=np.mean([e.series for e in present], axis=0),
        patch_db=np.mean([e.patch_db for e in present], axis=0),
        az_offset=int(round(np.mean([e.az_offset for e in present]))),
        range_m=float(np.mean([e.range_m for e in present])),
    )
    filled = TrackBuffer(buffer.track_id, buffer.capacity)
    for frame, entry in zip(buffer.frames, buffer.entries):
        filled.push(frame, entry if entry is not None else replace(mean_entry, frame=frame))
    return filled, mask


def window_series(buffer: TrackBuffer) -> np.ndarray:
    """Concatenated slow-time series of the window, treated as uniformly sampled."""
    return np.concatenate([e.series for e in buffer.entries])


def cvd_features(buffer: TrackBuffer, cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    filled, _ = fill_missing(buffer)
    return cvd_features_from_series(window_series(filled), cfg)


# ---------------------------------------------------------------------------
# per-frame entries
# ---------------------------------------------------------------------------

def _crop(power_db: np.ndarray, row: int, col: int, half_rows: int, half_cols: int) -> np.ndarray:
    padded = np.pad(power_db, ((half_rows, half_rows), (half_cols, half_cols)),
                    constant_values=DB_FLOOR)
    return padded[row:row + 2 * half_rows + 1, col:col + 2 * half_cols + 1]


def track_entry(profile: np.ndarray, ra_map: RAMap, position, frame: int,
                params: RadarParams = RadarParams(), cfg: FeatureConfig = FeatureConfig()) -> BufferEntry:
    """
    Buffer entry for a track at `position` (x, y): beamformed slow-time series
    around the peak range bin, plus the RA patch centred on the track.

    `profile` is the fast-time FFT of the (clutter-suppressed) cube,
    shape (range bins, chirps, channels).
    """
    x, y = float(position[0]), float(position[1])
    range_m = float(np.hypot(x, y))
    az_deg = float(np.degrees(np.arctan2(x, y)))
    n_range = profile.shape[0]
    rb = int(np.clip(round(range_m / params.range_resolution), 0, n_range - 1))

    steer = np.exp(-2j * np.pi * params.element_spacing * np.arange(profile.shape[2])
                   * np.sin(np.radians(az_deg)))
    beam = profile @ steer  # (range bins, chirps)
    lo, hi = max(rb - 1, 0), min(rb + 2, n_range)
    peak = lo + int(np.argmax(np.sum(np.abs(beam[lo:hi]) ** 2, axis=1)))
    lo, hi = max(peak - cfg.range_halfwidth, 0), min(peak + cfg.range_halfwidth + 1, n_range)
    series = beam[lo:hi].sum(axis=0)
    if cfg.range_compensation:
        series = series * max(range_m, 0.5) ** 2

    ab = ra_map.azimuth_bin(az_deg)
    patch = _crop(ra_map.power_db, rb, ab, cfg.patch_range_bins, cfg.patch_azimuth_bins)
    return BufferEntry(frame=frame, series=series, patch_db=patch,
                       az_offset=ab - cfg.patch_azimuth_bins, range_m=range_m)


# ---------------------------------------------------------------------------
# feature vectors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureVector:
    track_id: int
    frame: int
    mode: Mode
    spatial: np.ndarray  # (10,)
    frequency: Optional[np.ndarray] = None  # (8 * (J + 1),) in full mode
    cvd: Optional[np.ndarray] = None  # (8,) when the baseline is requested
    frame_span: tuple[int, int] = (-1, -1)
    empty_footprint: bool = False
    missing_frames: int = 0
    levels: int = 4

    @property
    def frequency_mask(self) -> bool:
        return self.frequency is not None

    def values(self) -> np.ndarray:
        """Spatial then frequency values; frequency slots are NaN in spatial-only mode."""
        freq = self.frequency if self.frequency is not None else np.full(8 * (self.levels + 1), np.nan)
        return np.concatenate([self.spatial, freq])

    def to_row(self, label: Optional[int] = None) -> dict:
        row = {"track_id": self.track_id, "frame": self.frame, "mode": self.mode}
        row.update(zip(feature_names(self.levels), self.values()))
        if self.cvd is not None:
            row.update(zip(cvd_feature_names(), self.cvd))
        if label is not None:
            row["label"] = int(label)
        return row


def average_spatial(entries: Sequence[BufferEntry], threshold_db: float) -> tuple[np.ndarray, bool]:
    vectors, flags = [], []
    for e in entries:
        v, empty = spatial_features(e.patch_db, e.az_offset, threshold_db)
        if not empty:
            vectors.append(v)
        flags.append(empty)
    if not vectors:
        return np.zeros(len(SPATIAL_NAMES)), True
    return np.mean(vectors, axis=0), any(flags)


def build_feature_vector(buffer: TrackBuffer, confirmed: bool = True,
                         cfg: FeatureConfig = FeatureConfig(), with_cvd: bool = False,
                         frame: Optional[int] = None) -> FeatureVector:
    """
    Seamless contract: spatial features as soon as the track is confirmed,
    spatial + MODWT statistics once the buffer holds the full window.
    """
    if not confirmed:
        raise DataError(f"track {buffer.track_id} is not confirmed")
    present = buffer.present
    if not present:
        raise DataError(f"track {buffer.track_id}: no buffered frames")
    spatial, empty = average_spatial(present, cfg.threshold_db)
    if empty:
        logger.warning("track %d: empty RA footprint in window", buffer.track_id)
    frame = buffer.frame_span[1] if frame is None else frame
    missing = int((~buffer.mask).sum())
    if not buffer.is_full:
        return FeatureVector(buffer.track_id, frame, "spatial_only", spatial,
                             frame_span=buffer.frame_span, empty_footprint=empty,
                             missing_frames=missing, levels=cfg.levels)
    filled, _ = fill_missing(buffer)
    series = window_series(filled)
    frequency = modwt_features(series, cfg.levels, cfg.wavelet)
    baseline = cvd_features_from_series(series, cfg) if with_cvd else None
    return FeatureVector(buffer.track_id, frame, "full", spatial, frequency, baseline,
                         frame_span=buffer.frame_span, empty_footprint=empty,
                         missing_frames=missing, levels=cfg.levels)
