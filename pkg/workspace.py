from pathlib import Path

from fastapi import FastAPI, HTTPException
from pydantic import ValidationError

from utils.errors import ConfigError, DataError


def get_workspace(app: FastAPI) -> Path:
    if not hasattr(app.state, "workspace"):
        raise RuntimeError("Output workspace is not initialized.")
    return app.state.workspace


def http_error(e: Exception) -> HTTPException:
    """Map a command failure to the HTTP status the API reports for it."""
    if isinstance(e, HTTPException):
        return e
    if isinstance(e, (ConfigError, ValidationError)):
        return HTTPException(status_code=400, detail=str(e))
    if isinstance(e, DataError):
        return HTTPException(status_code=422, detail=str(e))
    return HTTPException(status_code=500, detail=f"Internal error: {e}")
