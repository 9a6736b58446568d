from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

TrackStatus = Literal["tentative", "confirmed", "deleted"]
FeedbackKind = Literal["none", "group_spawn_inhibition"]


class ClusterConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    eps_m: float = Field(0.9, gt=0)
    min_pts: int = Field(3, ge=1)


class TrackerConfig(BaseModel):
    """EKF/GNN tracker settings."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    sigma_accel: float = Field(1.5, ge=0)  # m/s^2, white-acceleration Q
    sigma_range_m: float = Field(0.15, gt=0)
    sigma_azimuth_deg: float = Field(2.0, gt=0)
    initial_velocity_std: float = Field(1.0, gt=0)
    gate: float = Field(9.21, gt=0)  # chi2, 2 dof, 99 %
    confirm_hits: int = Field(3, ge=1)
    confirm_window: int = Field(5, ge=1)
    max_misses: int = Field(5, ge=1)
    feedback: FeedbackKind = "group_spawn_inhibition"
    feedback_window: int = Field(5, ge=1)
    group_extent_m: float = Field(0.8, ge=0)
    eigen_floor: float = Field(1e-9, gt=0)


class TrackRecord(BaseModel):
    """One line of the track log."""

    model_config = ConfigDict(frozen=True)

    frame: int
    id: int
    x: float
    y: float
    vx: float
    vy: float
    status: TrackStatus
    count: int = Field(1, ge=1)


class PredictionRecord(BaseModel):
    """One line of the prediction log."""

    model_config = ConfigDict(frozen=True)

    frame: int
    track_id: int
    label_bm: int
    label_am: int
    scores: dict[str, float]
    mode: Optional[Literal["spatial_only", "full"]] = None
