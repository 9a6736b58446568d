from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

Method = Literal["knn", "naive_bayes", "svm", "random_forest"]
METHODS: tuple[str, ...] = ("knn", "naive_bayes", "svm", "random_forest")

FeatureSet = Literal[
    "both", "spatial", "frequency", "pca80",
    "approx", "level4", "level3", "level2", "level1",
    "spatial+approx", "spatial+level4", "spatial+level3", "spatial+level2", "spatial+level1",
    "cvd_both", "cvd_spatial", "cvd_frequency", "cvd_pca80",
]


class ClassifierParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    knn_k: int = Field(5, ge=1)
    knn_weights: Literal["uniform", "distance"] = "distance"
    svm_kernel_scale: float = Field(4.5, gt=0)
    svm_c: float = Field(1.0, gt=0)
    svm_tol: float = Field(1e-3, gt=0)
    svm_max_iter: int = Field(100_000, ge=1)
    rf_trees: int = Field(100, ge=1)
    rf_criterion: Literal["gini", "entropy"] = "gini"
    pca_retained: Optional[float] = Field(None, gt=0, le=1)
    median_window: int = Field(25, ge=1)
    seed: int = 7

    @field_validator("median_window")
    @classmethod
    def odd_window(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError("median_window must be odd")
        return v
