"""
Radar data model and per-frame DSP chain.

Range (fast-time) FFT, Doppler (slow-time) FFT, azimuth (spatial) FFT across
the virtual array, static clutter suppression and 2-D cell-averaging CFAR on
range-Doppler maps. FFTs are orthonormal so energy is preserved per axis.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage, signal

from models.radar import CfarConfig, Detection, RadarParams, WindowKind
from utils.errors import ConfigError, DataError

logger = logging.getLogger(__name__)

DB_FLOOR = -120.0


@dataclass(frozen=True)
class RadarCube:
    data: np.ndarray  # (samples_per_chirp, chirps_per_frame, n_virtual_channels)
    frame_index: int = 0
    params: RadarParams = field(default_factory=RadarParams)

    def __post_init__(self):
        expected = (
            self.params.samples_per_chirp,
            self.params.chirps_per_frame,
            self.params.n_virtual_channels,
        )
        if self.data.shape != expected:
            raise DataError(f"cube shape {self.data.shape} does not match params {expected}")

    def check_finite(self):
        bad = ~np.isfinite(self.data)
        if bad.any():
            idx = tuple(int(i) for i in np.argwhere(bad)[0])
            raise DataError(
                f"frame {self.frame_index}: {int(bad.sum())} non-finite samples, first at {idx}"
            )


@dataclass(frozen=True)
class RDMap:
    power_db: np.ndarray  # (range_bins, doppler_bins), Doppler centered
    spectra: Optional[np.ndarray] = None  # (range_bins, doppler_bins, channels)
    params: RadarParams = field(default_factory=RadarParams)
    frame_index: int = 0

    @property
    def doppler_center(self) -> int:
        return self.power_db.shape[1] // 2

    @property
    def range_axis(self) -> np.ndarray:
        return np.arange(self.power_db.shape[0]) * self.params.range_resolution

    @property
    def velocity_axis(self) -> np.ndarray:
        bins = np.arange(self.power_db.shape[1]) - self.doppler_center
        return bins * self.params.velocity_resolution


@dataclass(frozen=True)
class RAMap:
    power_db: np.ndarray  # (range_bins, azimuth_bins)
    azimuth_axis: np.ndarray  # degrees, ascending
    params: RadarParams = field(default_factory=RadarParams)
    frame_index: int = 0

    @property
    def range_axis(self) -> np.ndarray:
        return np.arange(self.power_db.shape[0]) * self.params.range_resolution

    def azimuth_bin(self, azimuth_deg: float) -> int:
        return int(np.argmin(np.abs(self.azimuth_axis - azimuth_deg)))


def to_db(power) -> np.ndarray:
    power = np.asarray(power, dtype=float)
    out = np.full(power.shape, DB_FLOOR)
    positive = power > 0
    out[positive] = np.maximum(10.0 * np.log10(power[positive]), DB_FLOOR)
    return out


def taper(kind: WindowKind | str, n: int) -> np.ndarray:
    """Symmetric window of length n without zero-valued end points."""
    kind = WindowKind(kind)
    if kind == WindowKind.rect or n < 2:
        return np.ones(n)
    return signal.get_window(kind.value, n + 2, fftbins=False)[1:-1]


def range_profile(cube: RadarCube) -> np.ndarray:
    cube.check_finite()
    return np.fft.fft(cube.data, axis=0, norm="ortho")


def doppler_spectrum(series: np.ndarray, window: WindowKind | str = WindowKind.hann,
                     axis: int = -1) -> np.ndarray:
    series = np.asarray(series)
    n = series.shape[axis]
    shape = [1] * series.ndim
    shape[axis] = n
    weighted = series * taper(window, n).reshape(shape)
    return np.fft.fftshift(np.fft.fft(weighted, axis=axis, norm="ortho"), axes=axis)


def range_doppler_spectra(cube: RadarCube, window: WindowKind | str = WindowKind.hann) -> np.ndarray:
    return doppler_spectrum(range_profile(cube), window, axis=1)


def range_doppler_transform(cube: RadarCube, window: WindowKind | str = WindowKind.hann) -> RDMap:
    spectra = range_doppler_spectra(cube, window)
    power = np.sum(np.abs(spectra) ** 2, axis=2)
    return RDMap(power_db=to_db(power), spectra=spectra, params=cube.params,
                 frame_index=cube.frame_index)


def mti_suppress(cube: RadarCube) -> RadarCube:
    """Subtract the slow-time mean per (range sample, channel)."""
    data = cube.data - cube.data.mean(axis=1, keepdims=True)
    return RadarCube(data=data, frame_index=cube.frame_index, params=cube.params)


def select_channels(cube: RadarCube, n_channels: int) -> RadarCube:
    if not 1 <= n_channels <= cube.params.n_virtual_channels:
        raise ConfigError(f"cannot keep {n_channels} of {cube.params.n_virtual_channels} channels")
    return RadarCube(
        data=np.ascontiguousarray(cube.data[:, :, :n_channels]),
        frame_index=cube.frame_index,
        params=cube.params.with_channels(n_channels),
    )


def _training_kernel(cfg: CfarConfig) -> np.ndarray:
    rows = 2 * (cfg.train_range + cfg.guard_range) + 1
    cols = 2 * (cfg.train_doppler + cfg.guard_doppler) + 1
    kernel = np.ones((rows, cols))
    kernel[cfg.train_range:rows - cfg.train_range, cfg.train_doppler:cols - cfg.train_doppler] = 0.0
    return kernel


def cfar_threshold(power: np.ndarray, cfg: CfarConfig) -> tuple[np.ndarray, np.ndarray]:
    """
    Cell-averaging CFAR on a linear power map.

    Returns (threshold, noise estimate). Edge cells use the truncated training
    window and the scaling factor of their own training-cell count.
    """
    kernel = _training_kernel(cfg)
    if kernel.sum() == 0:
        raise ConfigError("CFAR configuration has zero training cells")
    sums = ndimage.correlate(power, kernel, mode="constant", cval=0.0)
    counts = ndimage.correlate(np.ones_like(power), kernel, mode="constant", cval=0.0)
    counts = np.rint(counts)
    with np.errstate(divide="ignore", invalid="ignore"):
        noise = np.where(counts > 0, sums / np.maximum(counts, 1), np.inf)
        alpha = np.where(counts > 0, counts * (cfg.pfa ** (-1.0 / np.maximum(counts, 1)) - 1.0), np.inf)
    return alpha * noise, noise


def cfar_mask(power: np.ndarray, cfg: CfarConfig) -> tuple[np.ndarray, np.ndarray]:
    threshold, noise = cfar_threshold(power, cfg)
    detected = power > threshold
    if cfg.notch_bins > 0:
        center = power.shape[1] // 2
        detected[:, max(center - cfg.notch_bins, 0):center + cfg.notch_bins + 1] = False
    if cfg.peak_axis == "range":
        padded = np.pad(power, ((1, 1), (0, 0)), constant_values=-np.inf)
        detected &= (power >= padded[:-2]) & (power >= padded[2:])
    elif cfg.peak_axis == "both":
        detected &= power >= ndimage.maximum_filter(power, size=3, mode="constant", cval=-np.inf)
    return detected, noise


def cfar_detect(rd_map: RDMap, cfg: CfarConfig = CfarConfig()) -> list[Detection]:
    if not np.all(np.isfinite(rd_map.power_db)):
        raise DataError("range-Doppler map holds non-finite power")
    power = 10.0 ** (rd_map.power_db / 10.0)
    detected, noise = cfar_mask(power, cfg)
    params = rd_map.params
    center = rd_map.doppler_center
    detections = []
    for r, d in np.argwhere(detected):
        det = Detection(
            range_bin=int(r),
            doppler_bin=int(d),
            range_m=float(r * params.range_resolution),
            radial_velocity=float((d - center) * params.velocity_resolution),
            snr_db=float(10.0 * np.log10(power[r, d] / noise[r, d])),
            frame_index=rd_map.frame_index,
        )
        if rd_map.spectra is not None:
            det = det.model_copy(update={"azimuth_deg": estimate_azimuth(rd_map, det)})
        detections.append(det)
    logger.debug("frame %d: %d CFAR detections", rd_map.frame_index, len(detections))
    return detections


def azimuth_spectrum(snapshot: np.ndarray, nfft: int = 64,
                     window: WindowKind | str = WindowKind.hann) -> np.ndarray:
    snapshot = np.asarray(snapshot)
    weighted = snapshot * taper(window, snapshot.shape[-1])
    return np.fft.fftshift(np.fft.fft(weighted, n=nfft, axis=-1), axes=-1)


def azimuth_from_snapshot(snapshot: np.ndarray, element_spacing: float = 0.5,
                          nfft: int = 64) -> float:
    """Zero-padded spatial FFT peak, refined by a parabola on log magnitude."""
    magnitude = np.abs(azimuth_spectrum(snapshot, nfft))
    k = int(np.argmax(magnitude))
    delta = 0.0
    if 0 < k < nfft - 1:
        a, b, c = np.log(magnitude[k - 1:k + 2] + 1e-300)
        denom = a - 2.0 * b + c
        if denom < 0:
            delta = 0.5 * (a - c) / denom
    u = (k - nfft // 2 + delta) / nfft
    return float(np.degrees(np.arcsin(np.clip(u / element_spacing, -1.0, 1.0))))


def estimate_azimuth(rd_map: RDMap, det: Detection) -> float:
    if rd_map.spectra is None:
        raise DataError("range-Doppler map has no per-cell channel spectra")
    n_range, n_doppler, _ = rd_map.spectra.shape
    if not (0 <= det.range_bin < n_range and 0 <= det.doppler_bin < n_doppler):
        raise DataError(f"detection cell ({det.range_bin}, {det.doppler_bin}) outside map")
    return azimuth_from_snapshot(
        rd_map.spectra[det.range_bin, det.doppler_bin, :],
        rd_map.params.element_spacing,
        rd_map.params.azimuth_fft_size,
    )


def azimuth_grid(params: RadarParams) -> tuple[np.ndarray, np.ndarray]:
    """FFT-bin indices and azimuths (deg) inside the 3 dB beamwidth coverage."""
    nfft = params.azimuth_fft_size
    u = (np.arange(nfft) - nfft // 2) / nfft
    sin_az = u / params.element_spacing
    keep = np.abs(sin_az) <= 1.0
    azimuth = np.full(nfft, np.nan)
    azimuth[keep] = np.degrees(np.arcsin(sin_az[keep]))
    keep &= np.abs(np.nan_to_num(azimuth, nan=180.0)) <= params.beamwidth_deg / 2.0
    bins = np.flatnonzero(keep)
    return bins, azimuth[bins]


def range_azimuth_map(cube: RadarCube, window: WindowKind | str = WindowKind.hann) -> RAMap:
    profile = range_profile(cube)  # (range, chirp, channel)
    spatial = azimuth_spectrum(profile, cube.params.azimuth_fft_size, window)
    power = np.mean(np.abs(spatial) ** 2, axis=1)
    bins, azimuth = azimuth_grid(cube.params)
    return RAMap(power_db=to_db(power[:, bins]), azimuth_axis=azimuth,
                 params=cube.params, frame_index=cube.frame_index)


def detect_frame(cube: RadarCube, cfg: CfarConfig = CfarConfig(), mti: bool = True,
                 window: WindowKind | str = WindowKind.hann) -> list[Detection]:
    if mti:
        cube = mti_suppress(cube)
    return cfar_detect(range_doppler_transform(cube, window), cfg)
