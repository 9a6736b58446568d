import io
from typing import Optional

import pandas as pd

from models.run_config import RunConfig
from utils.errors import DataError

XLSX_MEDIA_TYPE = "application/vnd.openxmlformats-officedocument.spreadsheetml.sheet"

SUMMARY_HEADERS = {
    "scenario": "Scenario",
    "acc_bm": "Accuracy BM (%)",
    "acc_am": "Accuracy AM (%)",
    "mean_ospa": "Mean OSPA",
    "mean_dloc": "Mean Localization",
    "mean_dcard": "Mean Cardinality",
    "mean_ospa_standard": "Mean OSPA (standard)",
}

TRACK_ERROR_HEADERS = {
    "scenario": "Scenario",
    "frames": "Frames Tracked",
    "median": "Median Error (m)",
    "mae": "Mean Abs Error (m)",
    "rmse": "RMS Error (m)",
}


def _settings_rows(cfg: RunConfig) -> pd.DataFrame:
    flat = pd.json_normalize(cfg.model_dump(mode="json"), sep=".")
    items = sorted(flat.iloc[0].to_dict().items())
    return pd.DataFrame({
        "Setting": [k for k, _ in items],
        "Value": [", ".join(map(str, v)) if isinstance(v, list) else v for _, v in items],
    })


def build_report_workbook(summary: pd.DataFrame, ospa: pd.DataFrame,
                          confusion: Optional[pd.DataFrame], cfg: RunConfig,
                          evaluation: Optional[pd.DataFrame] = None,
                          track_errors: Optional[pd.DataFrame] = None) -> tuple[io.BytesIO, str]:
    """
    Export a run to an Excel workbook; returns (buffer, filename)
    """
    try:
        output = io.BytesIO()

        with pd.ExcelWriter(output, engine="openpyxl") as writer:

            # 1. SCENARIO SUMMARY SHEET
            summary.rename(columns=SUMMARY_HEADERS).to_excel(
                writer, sheet_name="Scenario Summary", index=False)

            # 2. OSPA OVER TIME SHEET (one column block per scenario)
            if len(ospa):
                wide = ospa.pivot(index="frame", columns="scenario", values="ospa")
                wide.columns = [f"Scenario {s}" for s in wide.columns]
                wide.index.name = "Frame"
                wide.to_excel(writer, sheet_name="OSPA Over Time")

            # 3. CONFUSION MATRIX SHEET (rows: true count, columns: predicted)
            if confusion is not None:
                matrix = confusion.copy()
                matrix.index = [f"True {i}" for i in matrix.index]
                matrix.columns = [f"Predicted {c}" for c in matrix.columns]
                matrix.to_excel(writer, sheet_name="Confusion Matrix")

            # 4. CLASSIFIER COMPARISON SHEET
            if evaluation is not None and len(evaluation):
                evaluation.to_excel(writer, sheet_name="Classifier Comparison", index=False)

            # 5. TRACK ERRORS SHEET (single-person scenarios)
            if track_errors is not None and len(track_errors):
                track_errors.rename(columns=TRACK_ERROR_HEADERS).to_excel(
                    writer, sheet_name="Track Errors", index=False)

            # 6. RUN SETTINGS SHEET
            _settings_rows(cfg).to_excel(writer, sheet_name="Run Settings", index=False)

        output.seek(0)
        mode = f"{cfg.method}_{cfg.features}" if cfg.classifier else "tracking_only"
        filename = f"group_tracking_report_{mode}_seed{cfg.seed}.xlsx"
        return output, filename

    except (KeyError, ValueError) as e:
        raise DataError(f"Error generating Excel file: {e}") from e
