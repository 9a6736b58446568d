from typing import Optional

from fastapi import APIRouter, Request
from pydantic import BaseModel
from starlette.concurrency import run_in_threadpool

from models.classifier import Method
from models.run_config import RunConfig
from utils.commands import EVAL_GRIDS, cmd_eval, cmd_extract, cmd_train
from utils.errors import ConfigError
from workspace import get_workspace, http_error

router = APIRouter()


class ExtractRequest(BaseModel):
    config: RunConfig = RunConfig()
    seeds: Optional[list[int]] = None


class TrainRequest(BaseModel):
    config: RunConfig = RunConfig()
    methods: Optional[list[Method]] = None


class EvalRequest(TrainRequest):
    grids: list[str] = ["methods"]


@router.post("/extract")
async def extract(body: ExtractRequest, request: Request):
    try:
        root = get_workspace(request.app)
        path = await run_in_threadpool(cmd_extract, body.config, root, body.seeds)
        return {"features": str(path.relative_to(root))}
    except Exception as e:
        raise http_error(e) from e


@router.post("/train")
async def train_models(body: TrainRequest, request: Request):
    try:
        root = get_workspace(request.app)
        paths = await run_in_threadpool(cmd_train, body.config, root, body.methods)
        return {"models": [str(p.relative_to(root)) for p in paths]}
    except Exception as e:
        raise http_error(e) from e


@router.post("/eval")
async def evaluate_models(body: EvalRequest, request: Request):
    try:
        unknown = [g for g in body.grids if g not in EVAL_GRIDS]
        if unknown:
            raise ConfigError(f"unknown grids {unknown}, choose from {sorted(EVAL_GRIDS)}")
        root = get_workspace(request.app)
        path = await run_in_threadpool(cmd_eval, body.config, root, body.grids, body.methods)
        return {"report": str(path.relative_to(root))}
    except Exception as e:
        raise http_error(e) from e
