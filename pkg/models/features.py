from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from models.radar import WindowKind

WaveletName = Literal["d4", "la8", "haar"]

# names used by PyWavelets for the supported filter families
PYWT_NAMES: dict[str, str] = {"d4": "db2", "la8": "sym4", "haar": "haar"}


class FeatureConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    window_frames: int = Field(20, ge=2)
    levels: int = Field(4, ge=1, le=8)
    wavelet: WaveletName = "d4"
    threshold_db: float = Field(-6.0, lt=0)
    patch_range_bins: int = Field(3, ge=0)  # half-size of the RA patch around the track
    patch_azimuth_bins: int = Field(8, ge=0)
    range_halfwidth: int = Field(1, ge=0)
    range_compensation: bool = True
    cvd_nfft: int = Field(64, ge=2)
    cvd_hop: int = Field(16, ge=1)
    cvd_window: WindowKind = WindowKind.rect
