import json
import logging
import os
from pathlib import Path
from typing import Optional, Type, TypeVar

from dotenv import load_dotenv
from pydantic import BaseModel

from models.run_config import RunConfig
from utils.errors import ConfigError

load_dotenv()

OUTPUT_DIR = os.getenv("GTRACK_OUTPUT_DIR", "./output")
LOG_LEVEL = os.getenv("GTRACK_LOG_LEVEL", "INFO")
DEFAULT_SEED = int(os.getenv("GTRACK_SEED", "7"))
WORKERS = int(os.getenv("GTRACK_WORKERS", "1"))

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

M = TypeVar("M", bound=BaseModel)


def setup_logging(level: Optional[str] = None):
    logging.basicConfig(level=(level or LOG_LEVEL).upper(), format=LOG_FORMAT)


def load_model_file(path: str | Path, model: Type[M]) -> M:
    """Read a JSON config file into a pydantic model (unknown keys are rejected)."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e
    return model.model_validate(raw)


def load_run_config(path: Optional[str | Path] = None, **overrides) -> RunConfig:
    base = {"seed": DEFAULT_SEED, "workers": WORKERS}
    if path is not None:
        base.update(load_model_file(path, RunConfig).model_dump(exclude_unset=True))
    base.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.model_validate(base)
