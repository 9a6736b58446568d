from typing import Optional

from pydantic import BaseModel, ConfigDict, Field


class OspaConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    p: float = Field(2.0, ge=1)
    c: float = Field(1.0, gt=0)
    # also report textbook OSPA of the raw confirmed tracks
    standard: bool = False


class OspaFrame(BaseModel):
    model_config = ConfigDict(frozen=True)

    frame: int = 0
    d_loc: float
    d_card: float
    ospa: float
    n: int
    m: int
    q: int
    ospa_standard: Optional[float] = None

    def to_row(self) -> dict:
        row = {"frame": self.frame, "ospa": self.ospa, "d_loc": self.d_loc, "d_card": self.d_card}
        if self.ospa_standard is not None:
            row["ospa_standard"] = self.ospa_standard
        return row


class ScenarioSummary(BaseModel):
    model_config = ConfigDict(frozen=True)

    scenario: int
    acc_bm: float
    acc_am: float
    mean_ospa: float
    mean_dloc: float
    mean_dcard: float
    mean_ospa_standard: Optional[float] = None

    def to_row(self) -> dict:
        return self.model_dump(exclude_none=True)
