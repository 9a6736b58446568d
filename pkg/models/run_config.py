from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from models.classifier import ClassifierParams, FeatureSet, Method
from models.features import FeatureConfig
from models.metrics import OspaConfig
from models.radar import CfarConfig, RadarParams
from models.scenario import Fidelity, MultipathConfig, PointNoise, Room
from models.tracking import ClusterConfig, TrackerConfig


class RunConfig(BaseModel):
    """
    Batch configuration shared by every subcommand and HTTP endpoint.

    Every nested section has full defaults, so `{}` is a valid config file.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    # paths
    data_dir: str = "data"
    model_dir: str = "models"
    report_dir: str = "reports"

    # scenarios
    scenarios: tuple[int, ...] = (1, 2, 3, 4, 5, 6)
    duration_s: float = Field(60.0, gt=0)
    fidelity: Fidelity = "signal"
    group_spacing_m: float = Field(0.8, gt=0)
    room: Room = Room()
    seed: int = Field(7, ge=0)
    train_seeds: tuple[int, ...] = (101, 102, 103)
    write_cubes: bool = True

    # pipeline toggles
    mti: bool = True
    count_feedback: bool = True
    classifier: bool = True
    method: Method = "svm"
    features: FeatureSet = "both"
    cvd_baseline: bool = False
    n_channels: Optional[int] = Field(None, ge=1)

    radar: RadarParams = RadarParams()
    cfar: CfarConfig = CfarConfig()
    multipath: MultipathConfig = MultipathConfig()
    point_noise: PointNoise = PointNoise()
    cluster: ClusterConfig = ClusterConfig()
    tracker: TrackerConfig = TrackerConfig()
    feature: FeatureConfig = FeatureConfig()
    classifier_params: ClassifierParams = ClassifierParams()
    ospa: OspaConfig = OspaConfig()
    workers: int = Field(1, ge=1)

    @field_validator("scenarios")
    @classmethod
    def known_scenarios(cls, v: tuple[int, ...]) -> tuple[int, ...]:
        bad = [s for s in v if not 1 <= s <= 6]
        if bad or not v:
            raise ValueError(f"scenario ids must be within 1..6, got {list(v)}")
        return v

    def tracker_config(self) -> TrackerConfig:
        feedback: Literal["none", "group_spawn_inhibition"] = (
            "group_spawn_inhibition" if self.count_feedback and self.classifier else "none"
        )
        return self.tracker.model_copy(
            update={"feedback": feedback, "group_extent_m": self.group_spacing_m}
        )
