import numpy as np
from fastapi import APIRouter, Request
from pydantic import BaseModel
from starlette.concurrency import run_in_threadpool

from models.run_config import RunConfig
from utils.commands import cmd_run
from workspace import get_workspace, http_error

router = APIRouter()


class RunRequest(BaseModel):
    config: RunConfig = RunConfig()


def _plain(v):
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    return v


@router.post("/")
async def run_pipeline(body: RunRequest, request: Request):
    try:
        table = await run_in_threadpool(cmd_run, body.config, get_workspace(request.app))
        # JSON has no NaN (accuracy is undefined without a classifier)
        rows = table.astype(object).where(table.notna(), None).to_dict(orient="records")
        return {"summary": [{k: _plain(v) for k, v in r.items()} for r in rows]}
    except Exception as e:
        raise http_error(e) from e
