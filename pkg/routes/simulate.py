from typing import Optional

from fastapi import APIRouter, Request
from pydantic import BaseModel
from starlette.concurrency import run_in_threadpool

from models.run_config import RunConfig
from utils.commands import cmd_simulate
from workspace import get_workspace, http_error

router = APIRouter()


class SimulateRequest(BaseModel):
    config: RunConfig = RunConfig()
    seeds: Optional[list[int]] = None


@router.post("/")
async def simulate(body: SimulateRequest, request: Request):
    try:
        summaries = await run_in_threadpool(cmd_simulate, body.config, get_workspace(request.app), body.seeds)
        return {"scenarios": summaries}
    except Exception as e:
        raise http_error(e) from e
