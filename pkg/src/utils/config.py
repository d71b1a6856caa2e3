import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, TypeVar

import yaml
from dotenv import load_dotenv

from .errors import ConfigError

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "STABLE_PERTURB_THREADS"

#### environment section #####################################################

def thread_count() -> int:
    """Worker count for embarrassingly parallel loops (env STABLE_PERTURB_THREADS)"""
    load_dotenv()
    raw = os.getenv(THREADS_ENV, "1")
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}")
    return max(1, value)


def parallel_map(fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
    """Order-preserving map, threaded when more than one worker is configured"""
    items = list(items)
    workers = thread_count()
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))

#### config file section #####################################################

def load_config_file(path: Path) -> Dict[str, Any]:
    """Read a JSON or YAML experiment file into a plain dict"""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"Failed to parse {path}: {str(e)}")
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"Top level of {path} must be a mapping")
    return data
