"""
Defaults and environment overrides.

Explicit arguments passed to library functions take precedence over the
environment, except the remote endpoint: a set ``FLOWBENCH_ENDPOINT`` wins
over an endpoint argument.
"""

import os
from pathlib import Path

DEFAULT_NODE_CAP = 1_000_000
DEFAULT_CACHE_DIR = "~/.flowbench/cache"
DEFAULT_TIMEOUT = 30.0
DEFAULT_CONCURRENCY = 4
DEFAULT_HOST = "0.0.0.0"
DEFAULT_PORT = 8000

# Share of dialogues held out per flow under the standard split (13152 of 118327).
STANDARD_TEST_FRACTION = 13152 / (105175 + 13152)

ENDPOINT_ENV = "FLOWBENCH_ENDPOINT"
CACHE_DIR_ENV = "FLOWBENCH_CACHE_DIR"
TIMEOUT_ENV = "FLOWBENCH_TIMEOUT"


def resolve_endpoint(endpoint: str | None = None) -> str | None:
    """Return the REMOTE endpoint, letting the environment override the argument."""
    return os.environ.get(ENDPOINT_ENV) or endpoint


def resolve_cache_dir(cache_dir: str | Path | None = None) -> Path:
    if cache_dir is not None:
        return Path(cache_dir).expanduser()
    return Path(os.environ.get(CACHE_DIR_ENV, DEFAULT_CACHE_DIR)).expanduser()


def resolve_timeout(timeout: float | None = None) -> float:
    if timeout is not None:
        return timeout
    raw = os.environ.get(TIMEOUT_ENV)
    return float(raw) if raw else DEFAULT_TIMEOUT
