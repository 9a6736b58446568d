from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

MotionKind = Literal["forward_backward", "random_walk", "following"]
Fidelity = Literal["point_cloud", "signal"]

# movement scenarios: people, motion and nominal recording length in minutes
SCENARIO_CATALOG: dict[int, dict] = {
    1: {"n_people": 1, "motion_kind": "forward_backward", "minutes": 20,
        "description": "1 target walking forward and backward"},
    2: {"n_people": 1, "motion_kind": "random_walk", "minutes": 10,
        "description": "1 target randomly walking"},
    3: {"n_people": 2, "motion_kind": "forward_backward", "minutes": 20,
        "description": "2 targets walking forward and backward"},
    4: {"n_people": 2, "motion_kind": "following", "minutes": 5,
        "description": "2 targets following each other while walking"},
    5: {"n_people": 2, "motion_kind": "random_walk", "minutes": 10,
        "description": "2 targets randomly walking"},
    6: {"n_people": 3, "motion_kind": "forward_backward", "minutes": 20,
        "description": "3 targets walking forward and backward"},
}


class Room(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    width_m: float = Field(6.0, gt=0)
    depth_m: float = Field(6.0, gt=0)


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    scenario_id: int = Field(1, ge=1, le=6)
    n_people: Optional[int] = Field(None, ge=1, le=3)
    motion_kind: Optional[MotionKind] = None
    duration_s: float = Field(60.0, gt=0)
    room: Room = Room()
    group_spacing_m: float = Field(0.8, gt=0)
    seed: int = Field(7, ge=0)
    fidelity: Fidelity = "signal"

    @model_validator(mode="before")
    @classmethod
    def fill_from_catalog(cls, data):
        if isinstance(data, dict):
            entry = SCENARIO_CATALOG.get(data.get("scenario_id", 1))
            if entry is not None:
                data = dict(data)
                if data.get("n_people") is None:
                    data["n_people"] = entry["n_people"]
                if data.get("motion_kind") is None:
                    data["motion_kind"] = entry["motion_kind"]
        return data

    @model_validator(mode="after")
    def check_catalog(self) -> "ScenarioConfig":
        entry = SCENARIO_CATALOG[self.scenario_id]
        if self.n_people != entry["n_people"] or self.motion_kind != entry["motion_kind"]:
            raise ValueError(
                f"scenario {self.scenario_id} is '{entry['description']}', "
                f"got n_people={self.n_people}, motion_kind={self.motion_kind}"
            )
        return self

    @property
    def grouping_radius_m(self) -> float:
        return self.group_spacing_m + 0.3

    @property
    def description(self) -> str:
        return SCENARIO_CATALOG[self.scenario_id]["description"]


class GaitModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    torso_speed: float = Field(1.0, ge=0.5, le=1.5)
    step_cadence: float = Field(1.8, ge=1.4, le=2.2)
    limb_doppler_amplitude: float = Field(1.2, ge=0)
    rcs_torso: float = Field(1.0, gt=0)
    rcs_limbs: float = Field(0.25, ge=0)


class MultipathConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    enabled: bool = True
    attenuation_db: float = 12.0
    walls: tuple[Literal["far_width", "far_depth"], ...] = ("far_width", "far_depth")
    noise_power_db: Optional[float] = -20.0  # None disables receiver noise
    # static reflectors (x, y, rcs) in radar coordinates
    static_reflectors: tuple[tuple[float, float, float], ...] = (
        (-1.2, 3.0, 2.0),
        (1.8, 4.5, 1.5),
    )


class PointNoise(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    sigma_range_m: float = Field(0.3, ge=0)
    sigma_azimuth_deg: float = Field(2.0, ge=0)
    sigma_velocity_mps: float = Field(0.1, ge=0)
    min_points: int = Field(3, ge=1)
    max_points: int = Field(8, ge=1)
    miss_probability: float = Field(0.05, ge=0, le=1)
    clutter_rate: float = Field(0.2, ge=0)
    snr_db: float = 20.0

    @model_validator(mode="after")
    def check_points(self) -> "PointNoise":
        if self.max_points < self.min_points:
            raise ValueError("max_points must be >= min_points")
        return self
