from enum import Enum
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

C_LIGHT = 299_792_458.0


class WindowKind(str, Enum):
    rect = "boxcar"
    hann = "hann"
    hamming = "hamming"
    blackman = "blackman"


class RadarParams(BaseModel):
    """Radar configuration (defaults: 24 GHz RadarBook2, 2x8 MIMO)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    carrier_frequency: float = Field(24e9, gt=0)
    sweep_bandwidth: float = Field(250e6, gt=0)
    samples_per_chirp: int = Field(56, ge=1)
    chirps_per_frame: int = Field(90, ge=1)
    chirp_repetition_interval: float = Field(483e-6, gt=0)
    frame_rate: float = Field(10.0, gt=0)
    n_virtual_channels: int = Field(15, ge=1)
    element_spacing: float = Field(0.5, gt=0)  # wavelengths
    adc_sample_rate: float = Field(120e3, gt=0)
    beamwidth_deg: float = Field(76.5, gt=0, le=180)
    azimuth_fft_size: int = Field(64, ge=2)

    @model_validator(mode="after")
    def check_resolution(self) -> "RadarParams":
        if not np.isfinite(self.range_resolution) or self.range_resolution <= 0:
            raise ValueError("range resolution must be finite and positive")
        return self

    @property
    def wavelength(self) -> float:
        return C_LIGHT / self.carrier_frequency

    @property
    def range_resolution(self) -> float:
        return C_LIGHT / (2.0 * self.sweep_bandwidth)

    @property
    def slow_time_rate(self) -> float:
        """Nominal slow-time sampling frequency used for feature series (900 Hz)."""
        return self.chirps_per_frame * self.frame_rate

    @property
    def doppler_resolution(self) -> float:
        return 1.0 / (self.chirps_per_frame * self.chirp_repetition_interval)

    @property
    def velocity_resolution(self) -> float:
        return self.wavelength * self.doppler_resolution / 2.0

    @property
    def angular_resolution_deg(self) -> float:
        return float(np.degrees(1.0 / (self.n_virtual_channels * self.element_spacing)))

    @property
    def frame_interval(self) -> float:
        return 1.0 / self.frame_rate

    def with_channels(self, n_channels: int) -> "RadarParams":
        return self.model_copy(update={"n_virtual_channels": n_channels})


class CfarConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    train_range: int = Field(8, ge=0)
    train_doppler: int = Field(4, ge=0)
    guard_range: int = Field(4, ge=0)
    guard_doppler: int = Field(2, ge=0)
    pfa: float = Field(1e-4, gt=0, lt=1)
    notch_bins: int = Field(2, ge=0)
    peak_axis: Literal["none", "range", "both"] = "range"


class Detection(BaseModel):
    model_config = ConfigDict(frozen=True)

    range_bin: int = 0
    doppler_bin: int = 0
    range_m: float = Field(ge=0)
    radial_velocity: float = 0.0
    azimuth_deg: float = Field(0.0, ge=-90, le=90)
    snr_db: float = 0.0
    frame_index: int = 0

    def to_record(self) -> dict:
        return {
            "frame": self.frame_index,
            "range_m": self.range_m,
            "vel_mps": self.radial_velocity,
            "az_deg": self.azimuth_deg,
            "snr_db": self.snr_db,
        }

    @classmethod
    def from_record(cls, record: dict, params: RadarParams | None = None):
        params = params or RadarParams()
        return cls(
            range_bin=int(round(record["range_m"] / params.range_resolution)),
            range_m=record["range_m"],
            radial_velocity=record["vel_mps"],
            azimuth_deg=record["az_deg"],
            snr_db=record["snr_db"],
            frame_index=record["frame"],
        )
