import io

from fastapi import APIRouter, HTTPException, Request
from fastapi.responses import StreamingResponse
from pydantic import BaseModel
from starlette.concurrency import run_in_threadpool

from models.run_config import RunConfig
from utils.commands import cmd_report
from utils.excel import XLSX_MEDIA_TYPE
from workspace import get_workspace, http_error

router = APIRouter()


class ReportRequest(BaseModel):
    config: RunConfig = RunConfig()


@router.post("/excel")
async def generate_excel_report(body: ReportRequest, request: Request):
    try:
        path, filename = await run_in_threadpool(cmd_report, body.config, get_workspace(request.app))
        return StreamingResponse(
            io.BytesIO(path.read_bytes()),
            media_type=XLSX_MEDIA_TYPE,
            headers={"Content-Disposition": f"attachment; filename={filename}"}
        )
    except HTTPException:
        raise
    except Exception as e:
        raise http_error(e) from e
